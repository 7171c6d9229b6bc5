"""Dense complex linear algebra over multipartite Hilbert spaces.

Every state in the package carries a :class:`SubsystemLayout` describing the
ordered local dimensions, which photon (party ``"A"`` or ``"B"``) owns each
subsystem and, optionally, which degree of freedom it encodes.

Basis ordering is global: polarization ``(H, V)``, spatial ``(l, g, r)``
(``(l, r)`` when the Gaussian mode is dropped) and energy-time ``(s, f)``.
Joint indices run over photon A first, then photon B; within a photon the
order is polarization, spatial, energy-time.
"""
from __future__ import annotations

import contextlib
import dataclasses
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = [
    "Tolerances",
    "get_tolerances",
    "set_tolerances",
    "tolerances",
    "SubsystemLayout",
    "StateVector",
    "DensityOperator",
    "tensor",
    "partial_trace",
    "partial_transpose",
    "eig_hermitian",
    "sqrt_psd",
    "ket",
    "is_hermitian",
]

DOF_NAMES = ("poln", "spatial", "etime")


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-10
    trace: float = 1e-10
    psd_floor: float = -1e-9
    psd_error: float = -1e-6
    unit_norm: float = 1e-12


_TOL = Tolerances()


def get_tolerances() -> Tolerances:
    return _TOL


def set_tolerances(**overrides: float) -> Tolerances:
    """Replace global validation tolerances; returns the previous set."""
    global _TOL
    previous = _TOL
    _TOL = dataclasses.replace(_TOL, **overrides)
    return previous


@contextlib.contextmanager
def tolerances(**overrides: float) -> Iterator[Tolerances]:
    previous = set_tolerances(**overrides)
    try:
        yield _TOL
    finally:
        set_tolerances(**dataclasses.asdict(previous))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SubsystemLayout:
    """Ordered local dimensions plus party (and optionally DOF) labels.

    ``dofs`` is needed only by code that maps analyzer settings onto
    subsystems; generic algebra ignores it.
    """

    dims: tuple[int, ...]
    parties: tuple[str, ...]
    dofs: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "parties", tuple(str(p) for p in self.parties))
        if self.dofs is not None:
            object.__setattr__(self, "dofs", tuple(str(d) for d in self.dofs))
        if not self.dims:
            raise ValueError("layout needs at least one subsystem")
        if any(d < 1 for d in self.dims):
            raise ValueError(f"local dimensions must be positive, got {self.dims}")
        if len(self.parties) != len(self.dims):
            raise ValueError("every subsystem needs exactly one party label")
        if any(p not in ("A", "B") for p in self.parties):
            raise ValueError(f"party labels must be 'A' or 'B', got {self.parties}")
        if self.dofs is not None:
            if len(self.dofs) != len(self.dims):
                raise ValueError("dofs must label every subsystem")
            bad = set(self.dofs) - set(DOF_NAMES)
            if bad:
                raise ValueError(f"unknown degrees of freedom {sorted(bad)}")

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self) -> int:
        return len(self.dims)

    def party_indices(self, party: str) -> tuple[int, ...]:
        return tuple(i for i, p in enumerate(self.parties) if p == party)

    def party_dim(self, party: str) -> int:
        return int(np.prod([self.dims[i] for i in self.party_indices(party)], dtype=int))

    def index_of(self, party: str, dof: str) -> int:
        if self.dofs is None:
            raise ValueError("layout carries no DOF labels")
        for i, (p, d) in enumerate(zip(self.parties, self.dofs)):
            if p == party and d == dof:
                return i
        raise KeyError(f"no {dof} subsystem for photon {party}")

    def concat(self, other: "SubsystemLayout") -> "SubsystemLayout":
        dofs = None
        if self.dofs is not None and other.dofs is not None:
            dofs = self.dofs + other.dofs
        return SubsystemLayout(self.dims + other.dims, self.parties + other.parties, dofs)

    def select(self, keep: Sequence[int]) -> "SubsystemLayout":
        keep = list(keep)
        return SubsystemLayout(
            tuple(self.dims[i] for i in keep),
            tuple(self.parties[i] for i in keep),
            None if self.dofs is None else tuple(self.dofs[i] for i in keep),
        )

    def replace_dim(self, index: int, dim: int) -> "SubsystemLayout":
        dims = list(self.dims)
        dims[index] = dim
        return SubsystemLayout(tuple(dims), self.parties, self.dofs)

    @classmethod
    def bipartite(cls, dim_a: int, dim_b: int) -> "SubsystemLayout":
        return cls((dim_a, dim_b), ("A", "B"))

    @classmethod
    def photons(cls, dofs: Sequence[str] = DOF_NAMES, spatial_dim: int = 3) -> "SubsystemLayout":
        """Two-photon layout with the same DOFs on each photon, in canonical order."""
        dofs = tuple(d for d in DOF_NAMES if d in dofs)
        if not dofs:
            raise ValueError("need at least one degree of freedom")
        local = {"poln": 2, "spatial": spatial_dim, "etime": 2}
        dims = tuple(local[d] for d in dofs)
        return cls(dims * 2, ("A",) * len(dims) + ("B",) * len(dims), dofs * 2)


def ket(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def is_hermitian(m: np.ndarray, atol: float | None = None) -> bool:
    atol = _TOL.hermitian if atol is None else atol
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= atol)


@dataclass(frozen=True)
class StateVector:
    amplitudes: np.ndarray
    layout: SubsystemLayout

    def __post_init__(self):
        amps = _frozen(np.ravel(self.amplitudes))
        if amps.shape[0] != self.layout.size:
            raise ValueError(f"vector length {amps.shape[0]} does not match layout size {self.layout.size}")
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.amplitudes / n, self.layout)

    def density(self) -> "DensityOperator":
        v = self.normalize().amplitudes
        return DensityOperator(np.outer(v, v.conj()), self.layout)


@dataclass(frozen=True)
class DensityOperator:
    """Hermitian, unit-trace, positive-semidefinite matrix over a layout.

    Pass ``check_psd=False`` for intermediate estimates (e.g. linear
    inversion) that may have slightly negative eigenvalues; Hermiticity and
    trace are always enforced.
    """

    matrix: np.ndarray
    layout: SubsystemLayout
    check_psd: dataclasses.InitVar[bool] = True
    _eigvals: np.ndarray | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self, check_psd: bool):
        m = _frozen(self.matrix)
        n = self.layout.size
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match layout size {n}")
        if not is_hermitian(m):
            raise ValueError("density operator must be Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > _TOL.trace:
            raise ValueError(f"density operator must have unit trace, got {tr.real:.3g}")
        object.__setattr__(self, "matrix", m)
        if check_psd and self.min_eigenvalue < _TOL.psd_floor:
            raise ValueError(f"density operator is not PSD (min eigenvalue {self.min_eigenvalue:.3g})")

    @property
    def eigenvalues(self) -> np.ndarray:
        if self._eigvals is None:
            w = np.linalg.eigvalsh(self.matrix)[::-1]
            w.setflags(write=False)
            object.__setattr__(self, "_eigvals", w)
        return self._eigvals

    @property
    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def is_physical(self) -> bool:
        return self.min_eigenvalue >= _TOL.psd_error

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    @property
    def dim(self) -> int:
        return self.layout.size

    @classmethod
    def maximally_mixed(cls, layout: SubsystemLayout) -> "DensityOperator":
        return cls(np.eye(layout.size) / layout.size, layout)

    @classmethod
    def from_matrix(cls, m: np.ndarray, layout: SubsystemLayout, hermitize: bool = True, check_psd: bool = True) -> "DensityOperator":
        """Build from an arbitrary (possibly unnormalized) matrix."""
        m = np.asarray(m, dtype=complex)
        if hermitize:
            m = 0.5 * (m + m.conj().T)
        return cls(m / np.trace(m).real, layout, check_psd=check_psd)


def tensor(a, b):
    """Kronecker product of two states of the same kind; layouts are concatenated."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(np.kron(a.amplitudes, b.amplitudes), a.layout.concat(b.layout))
    if isinstance(a, DensityOperator) and isinstance(b, DensityOperator):
        return DensityOperator(np.kron(a.matrix, b.matrix), a.layout.concat(b.layout), check_psd=False)
    raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def _check_indices(indices: Iterable[int], n: int) -> list[int]:
    out = sorted(set(int(i) for i in indices))
    if any(i < 0 or i >= n for i in out):
        raise IndexError(f"subsystem indices {out} out of range for {n} subsystems")
    return out


def partial_trace_matrix(m: np.ndarray, dims: Sequence[int], keep: Iterable[int]) -> np.ndarray:
    """Trace out every subsystem not in ``keep`` from a square matrix."""
    dims = list(dims)
    n = len(dims)
    keep = _check_indices(keep, n)
    if not keep:
        raise ValueError("keep must name at least one subsystem")
    t = np.asarray(m).reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = list(letters[:n])
    col = [letters[n + i] if i in keep else row[i] for i in range(n)]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    d = int(np.prod([dims[i] for i in keep]))
    return np.einsum("".join(row) + "".join(col) + "->" + out, t).reshape(d, d)


def partial_trace(rho: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    keep = _check_indices(keep, len(rho.layout))
    reduced = partial_trace_matrix(rho.matrix, rho.layout.dims, keep)
    return DensityOperator(reduced, rho.layout.select(keep), check_psd=False)


def partial_transpose_matrix(m: np.ndarray, dims: Sequence[int], subsystems: Iterable[int]) -> np.ndarray:
    dims = list(dims)
    n = len(dims)
    subsystems = _check_indices(subsystems, n)
    t = np.asarray(m).reshape(dims + dims)
    axes = list(range(2 * n))
    for i in subsystems:
        axes[i], axes[n + i] = axes[n + i], axes[i]
    return t.transpose(axes).reshape(m.shape)


def partial_transpose(rho: DensityOperator | np.ndarray, party: str = "B", layout: SubsystemLayout | None = None) -> np.ndarray:
    """Transpose the joint index of ``party``; returns a plain Hermitian matrix."""
    if isinstance(rho, DensityOperator):
        layout, m = rho.layout, rho.matrix
    else:
        if layout is None:
            raise ValueError("a layout is required for bare matrices")
        m = np.asarray(rho)
    idx = layout.party_indices(party)
    if not idx:
        raise ValueError(f"party {party} owns no subsystems")
    return partial_transpose_matrix(m, layout.dims, idx)


def eig_hermitian(m: np.ndarray, atol: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and matching eigenvector columns."""
    m = np.asarray(m, dtype=complex)
    if not is_hermitian(m, atol):
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    return w[::-1].copy(), v[:, ::-1].copy()


def sqrt_psd(m: np.ndarray) -> np.ndarray:
    """Principal square root of a PSD matrix.

    Eigenvalues down to ``psd_error`` are clamped to zero; anything more
    negative raises.
    """
    w, v = eig_hermitian(m, atol=max(_TOL.hermitian, 1e-9))
    if w[-1] < _TOL.psd_error:
        raise ValueError(f"matrix has a materially negative eigenvalue ({w[-1]:.3g})")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root) @ v.conj().T


def kron_all(factors: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, factors)
