"""Entanglement and mixedness measures.

Conventions: linear entropy is normalized by ``d/(d-1)`` so it runs from
0 (pure) to 1 (maximally mixed) in any dimension (``4/3`` for two qubits);
negativity is the trace norm of the partial transpose minus one, so it
spans ``[0, d - 1]`` for a ``d x d`` system.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .qcore import DensityOperator, SubsystemLayout, get_tolerances, partial_transpose_matrix

__all__ = [
    "MetricReport",
    "purity",
    "tangle",
    "concurrence",
    "linear_entropy",
    "fidelity",
    "negativity",
    "schmidt_negativity",
    "visibility",
    "report",
]

_SYY = np.kron(np.array([[0, -1j], [1j, 0]]), np.array([[0, -1j], [1j, 0]]))


def _matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)


def purity(rho) -> float:
    m = _matrix(rho)
    return float(np.real(np.vdot(m, m)))


def _psd_factor(m: np.ndarray) -> np.ndarray:
    """``X`` with ``m = X X^dagger``, dropping eigenvalues at round-off level.

    Taking square roots of ~1e-17 round-off eigenvalues would inject
    ~1e-9 errors into fidelity and concurrence of rank-deficient states.
    """
    w, v = np.linalg.eigh(0.5 * (m + m.conj().T))
    if w[0] < get_tolerances().psd_floor:
        raise ValueError(f"state has a negative eigenvalue ({w[0]:.3g})")
    keep = w > m.shape[0] * np.finfo(float).eps * max(w[-1], 0.0)
    return v[:, keep] * np.sqrt(w[keep])


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit state."""
    m = _matrix(rho)
    if m.shape != (4, 4):
        raise ValueError(f"concurrence needs a 4x4 two-qubit state, got {m.shape}")
    if isinstance(rho, DensityOperator) and rho.layout.dims != (2, 2):
        raise ValueError(f"concurrence needs a two-qubit layout, got dims {rho.layout.dims}")
    x = _psd_factor(m)
    # the square roots of the spectrum of rho rho~ are the singular values of X^T (sy x sy) X
    lam = np.zeros(4)
    sv = np.linalg.svd(x.T @ _SYY @ x, compute_uv=False)
    lam[: sv.size] = sv
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def tangle(rho) -> float:
    return concurrence(rho) ** 2


def linear_entropy(rho) -> float:
    m = _matrix(rho)
    d = m.shape[0]
    if d < 2:
        return 0.0
    # purity can exceed 1 by round-off on pure states
    return max(0.0, d / (d - 1) * (1.0 - purity(m)))


def fidelity(rho, rho_t) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho_t) rho sqrt(rho_t)))^2``.

    Evaluated as the squared trace norm of ``X_a^dagger X_b`` for PSD
    factors ``rho = X_a X_a^dagger``, ``rho_t = X_b X_b^dagger``.
    """
    a, b = _matrix(rho), _matrix(rho_t)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    f = np.sum(np.linalg.svd(_psd_factor(a).conj().T @ _psd_factor(b), compute_uv=False)) ** 2
    return float(min(1.0, max(0.0, f)))


def negativity(rho, dims: tuple[int, int] | None = None, party: str = "B") -> float:
    """``||rho^{T_party}||_1 - 1`` across the A|B cut.

    A :class:`DensityOperator` carries its own party split; bare matrices
    need ``dims = (dim_A, dim_B)``.
    """
    if isinstance(rho, DensityOperator):
        layout = rho.layout
        if not layout.party_indices("A") or not layout.party_indices("B"):
            raise ValueError("negativity needs a bipartite layout")
        m = rho.matrix
    else:
        if dims is None:
            raise ValueError("dims=(dim_A, dim_B) is required for bare matrices")
        layout = SubsystemLayout.bipartite(*dims)
        m = np.asarray(rho, dtype=complex)
    pt = partial_transpose_matrix(m, layout.dims, layout.party_indices(party))
    w = np.linalg.eigvalsh(0.5 * (pt + pt.conj().T))
    return float(np.sum(np.abs(w)) - 1.0)


def schmidt_negativity(psi: np.ndarray, dim_a: int, dim_b: int) -> float:
    """Negativity of a pure state from its Schmidt coefficients, ``(sum s_i)^2 - 1``."""
    v = np.asarray(psi, dtype=complex).ravel()
    v = v / np.linalg.norm(v)
    s = np.linalg.svd(v.reshape(dim_a, dim_b), compute_uv=False)
    return float(np.sum(s) ** 2 - 1.0)


def visibility(fringe: Sequence[tuple[float, float]]) -> float:
    """Fringe visibility from a least-squares fit of ``a + b cos(phase + c)``.

    Requires at least four samples whose phases leave no gap wider than
    ``pi`` around the circle.
    """
    data = np.asarray(fringe, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 4:
        raise ValueError("need at least 4 (phase, rate) samples")
    phase, rate = data[:, 0], data[:, 1]
    wrapped = np.sort(np.mod(phase, 2 * np.pi))
    gaps = np.diff(np.concatenate([wrapped, [wrapped[0] + 2 * np.pi]]))
    if gaps.max() > np.pi + 1e-12:
        raise ValueError("phases must span a full period")
    design = np.column_stack([np.ones_like(phase), np.cos(phase), np.sin(phase)])
    (a, p, q), *_ = np.linalg.lstsq(design, rate, rcond=None)
    if a <= 0:
        raise ValueError("degenerate fringe: fitted mean rate is not positive")
    return float(min(1.0, np.hypot(p, q) / a))


@dataclass(frozen=True)
class MetricReport:
    linear_entropy: float
    purity: float
    negativity: float | None = None
    tangle: float | None = None
    fidelity: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def report(rho: DensityOperator, target: DensityOperator | None = None) -> MetricReport:
    bipartite = bool(rho.layout.party_indices("A")) and bool(rho.layout.party_indices("B"))
    return MetricReport(
        linear_entropy=linear_entropy(rho),
        purity=purity(rho),
        negativity=negativity(rho) if bipartite else None,
        tangle=tangle(rho) if rho.layout.dims == (2, 2) and bipartite else None,
        fidelity=fidelity(rho, target) if target is not None else None,
    )
