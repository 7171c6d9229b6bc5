"""CHSH Bell parameters from states or coincidence counts.

Local settings are qubit kets; each implies its orthogonal partner, so a
setting is a two-outcome projective measurement. Correlations use the
coincidence estimator

    E = (P(+,+) + P(-,-) - P(+,-) - P(-,+)) / sum of the four,

and ``S = E(a, b) + E(a, b') + E(a', b) - E(a', b')``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .analyzers import (
    AnalyzerSetting,
    EnergyTimeSetting,
    PolarizationSetting,
    SettingPair,
    SpatialSetting,
    solve_poln_angles,
)
from .qcore import DensityOperator, kron_all, partial_trace_matrix
from .source import CountRecord

__all__ = [
    "ChshSettings",
    "BellResult",
    "OptimalChsh",
    "CHSH_IDS",
    "bloch_ket",
    "ket_bloch",
    "perp",
    "correlation_from_state",
    "chsh_from_state",
    "correlation_tensor",
    "optimal_chsh",
    "chsh_from_counts",
    "chsh_setting_pairs",
    "subspace_project",
    "TSIRELSON",
]

TSIRELSON = 2 * np.sqrt(2)

_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)

# setting ids used by chsh_from_counts: (photon, which setting, outcome)
CHSH_IDS = {
    "A": (("a0", "a0_perp"), ("a1", "a1_perp")),
    "B": (("b0", "b0_perp"), ("b1", "b1_perp")),
}


def bloch_ket(theta: float, phi: float = 0.0) -> np.ndarray:
    return np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)], dtype=complex)


def ket_bloch(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    rho = np.outer(v, v.conj()) / np.vdot(v, v).real
    return np.array([np.real(np.trace(rho @ s)) for s in _PAULI])


def perp(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.array([-np.conj(v[1]), np.conj(v[0])])


def _unit2(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    if v.shape != (2,):
        raise ValueError("local CHSH settings are qubit kets")
    n = np.linalg.norm(v)
    if abs(n - 1) > 1e-10:
        raise ValueError("local CHSH setting must be a unit ket")
    return v / n


@dataclass(frozen=True)
class ChshSettings:
    a: np.ndarray
    a_prime: np.ndarray
    b: np.ndarray
    b_prime: np.ndarray

    def __post_init__(self):
        for name in ("a", "a_prime", "b", "b_prime"):
            v = _unit2(getattr(self, name))
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @classmethod
    def from_bloch(cls, a, a_prime, b, b_prime) -> "ChshSettings":
        """Build from Bloch vectors (3-vectors) or ``(theta, phi)`` pairs."""
        def k(x):
            x = np.asarray(x, dtype=float)
            if x.shape == (3,):
                x = x / np.linalg.norm(x)
                return bloch_ket(np.arccos(np.clip(x[2], -1, 1)), np.arctan2(x[1], x[0]))
            return bloch_ket(*x)
        return cls(k(a), k(a_prime), k(b), k(b_prime))

    @classmethod
    def canonical(cls) -> "ChshSettings":
        """Optimal real settings for ``Phi+``: a = 0, a' = pi/2, b = pi/4, b' = -pi/4 (Bloch angles)."""
        return cls(bloch_ket(0.0), bloch_ket(np.pi / 2), bloch_ket(np.pi / 4), bloch_ket(-np.pi / 4))

    def bloch(self) -> dict[str, list[float]]:
        return {n: ket_bloch(getattr(self, n)).tolist() for n in ("a", "a_prime", "b", "b_prime")}

    def to_dict(self) -> dict:
        return {
            n: [[float(z.real), float(z.imag)] for z in getattr(self, n)]
            for n in ("a", "a_prime", "b", "b_prime")
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChshSettings":
        return cls(*(np.array([complex(re, im) for re, im in d[n]]) for n in ("a", "a_prime", "b", "b_prime")))


@dataclass(frozen=True)
class BellResult:
    S: float
    E: tuple[float, float, float, float]
    sigma: float | None = None
    settings: ChshSettings | None = field(default=None, compare=False)

    @property
    def violation_sigmas(self) -> float | None:
        if self.sigma is None or self.sigma == 0:
            return None
        return (abs(self.S) - 2.0) / self.sigma

    def to_dict(self) -> dict:
        d = {"S": self.S, "sigma": self.sigma, "E": list(self.E)}
        if self.settings is not None:
            d["settings"] = self.settings.to_dict()
        return d


def _two_qubit(rho) -> np.ndarray:
    m = rho.matrix if isinstance(rho, DensityOperator) else np.asarray(rho, dtype=complex)
    if m.shape != (4, 4):
        raise ValueError(f"CHSH analysis needs a 2x2 subspace state, got shape {m.shape}")
    return m


def correlation_from_state(rho, a, b) -> float:
    m = _two_qubit(rho)
    a, b = _unit2(a), _unit2(b)
    probs = {}
    for sa, va in ((1, a), (-1, perp(a))):
        for sb, vb in ((1, b), (-1, perp(b))):
            k = np.kron(va, vb)
            probs[sa * sb, sa, sb] = np.real(np.vdot(k, m @ k))
    total = sum(probs.values())
    if total <= 1e-15:
        raise ValueError("zero total probability for this setting pair")
    return float(sum(key[0] * p for key, p in probs.items()) / total)


def chsh_from_state(rho, settings: ChshSettings) -> BellResult:
    e = (
        correlation_from_state(rho, settings.a, settings.b),
        correlation_from_state(rho, settings.a, settings.b_prime),
        correlation_from_state(rho, settings.a_prime, settings.b),
        correlation_from_state(rho, settings.a_prime, settings.b_prime),
    )
    return BellResult(e[0] + e[1] + e[2] - e[3], e, None, settings)


def correlation_tensor(rho) -> np.ndarray:
    """``T_ij = Tr(rho sigma_i (x) sigma_j)`` normalized by the trace."""
    m = _two_qubit(rho)
    tr = np.real(np.trace(m))
    return np.array([[np.real(np.trace(m @ np.kron(si, sj))) for sj in _PAULI] for si in _PAULI]) / tr


@dataclass(frozen=True)
class OptimalChsh:
    S_max: float
    settings: ChshSettings
    S_search: float
    restart: int

    def result(self, rho) -> BellResult:
        return chsh_from_state(rho, self.settings)


def _sphere(theta: float, phi: float) -> np.ndarray:
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def _chsh_value(T: np.ndarray, angles: np.ndarray) -> float:
    a, ap, b, bp = (_sphere(*angles[2 * i: 2 * i + 2]) for i in range(4))
    return float(a @ T @ (b + bp) + ap @ T @ (b - bp))


def _coefficient(T: np.ndarray, angles: np.ndarray, slot: int) -> np.ndarray:
    """Vector u with S = n_slot . u + (terms free of slot)."""
    a, ap, b, bp = (_sphere(*angles[2 * i: 2 * i + 2]) for i in range(4))
    return (
        T @ (b + bp),
        T @ (b - bp),
        T.T @ (a + ap),
        T.T @ (a - ap),
    )[slot]


def _coordinate_ascent(T: np.ndarray, angles: np.ndarray, tol: float = 1e-10, max_sweeps: int = 10_000):
    angles = np.array(angles, dtype=float)
    s = _chsh_value(T, angles)
    for _ in range(max_sweeps):
        for slot in range(4):
            # exact 1-D maxima: S is sinusoidal in each Bloch angle
            u = _coefficient(T, angles, slot)
            th, ph = angles[2 * slot], angles[2 * slot + 1]
            w = u[0] * np.cos(ph) + u[1] * np.sin(ph)
            if np.hypot(w, u[2]) > 0:
                th = np.arctan2(w, u[2])
            if np.hypot(u[0], u[1]) > 0 and np.sin(th) != 0:
                ph = np.arctan2(u[1], u[0]) + (np.pi if np.sin(th) < 0 else 0.0)
            angles[2 * slot], angles[2 * slot + 1] = th, ph
        s_new = _chsh_value(T, angles)
        if s_new - s < tol:
            s = max(s, s_new)
            break
        s = s_new
    return s, angles


def _angles_of(v: np.ndarray) -> tuple[float, float]:
    n = np.linalg.norm(v)
    if n == 0:
        return 0.0, 0.0
    v = v / n
    return float(np.arccos(np.clip(v[2], -1, 1))), float(np.arctan2(v[1], v[0]))


def optimal_chsh(rho, restarts: int = 16, tol: float = 1e-10) -> OptimalChsh:
    """Maximal CHSH value (Horodecki criterion) plus settings that reach it.

    ``S_max = 2 sqrt(m1 + m2)`` with ``m1 >= m2`` the top eigenvalues of
    ``T^T T``. Analytic settings seed a coordinate ascent over the eight
    Bloch angles; the first restart starts exactly there, the rest from
    deterministic perturbations. The best restart wins, ties to the lowest
    index.
    """
    T = correlation_tensor(rho)
    w, v = np.linalg.eigh(T.T @ T)
    order = np.argsort(w)[::-1]
    m1, m2 = max(w[order[0]], 0.0), max(w[order[1]], 0.0)
    s_max = float(2 * np.sqrt(m1 + m2))
    c1, c2 = v[:, order[0]], v[:, order[1]]
    t = np.arctan2(np.sqrt(m2), np.sqrt(m1))
    b = np.cos(t) * c1 + np.sin(t) * c2
    bp = np.cos(t) * c1 - np.sin(t) * c2
    a = T @ c1 if m1 > 0 else np.array([0.0, 0.0, 1.0])
    ap = T @ c2 if m2 > 0 else np.array([1.0, 0.0, 0.0])
    seed = np.concatenate([_angles_of(x) for x in (a, ap, b, bp)])

    rng = np.random.default_rng(0)
    perturb = rng.normal(scale=0.3, size=(max(restarts, 1), 8))
    perturb[0] = 0.0
    best = None
    for i in range(max(restarts, 1)):
        s, ang = _coordinate_ascent(T, seed + perturb[i], tol)
        if best is None or s > best[0] + 1e-14:
            best = (s, ang, i)
    s_search, ang, idx = best
    settings = ChshSettings(*(bloch_ket(*ang[2 * k: 2 * k + 2]) for k in range(4)))
    if abs(s_search - s_max) > 1e-6:
        raise RuntimeError(f"numeric search ({s_search:.9f}) disagrees with analytic bound ({s_max:.9f})")
    return OptimalChsh(s_max, settings, s_search, idx)


def _counts_lookup(records: Iterable[CountRecord] | Mapping[tuple[str, str], float]) -> dict[tuple[str, str], float]:
    if isinstance(records, Mapping):
        return {tuple(k): float(v) for k, v in records.items()}
    out: dict[tuple[str, str], float] = {}
    for r in records:
        out[r.key] = out.get(r.key, 0.0) + r.counts
    return out


def chsh_from_counts(records, ids: Mapping = CHSH_IDS) -> BellResult:
    """CHSH value and Poisson standard deviation from 16 coincidence counts.

    Per setting pair, ``E = sum_k s_k n_k / N``; first-order propagation
    with ``var(n_k) = max(n_k, 1)`` and independent settings gives
    ``var(E) = sum_k (s_k - E)^2 var(n_k) / N^2`` and ``var(S) = sum var(E)``.
    """
    counts = _counts_lookup(records)
    es, var_s = [], 0.0
    for x, y in ((0, 0), (0, 1), (1, 0), (1, 1)):
        n, s = [], []
        for oa, sa in zip(ids["A"][x], (1, -1)):
            for ob, sb in zip(ids["B"][y], (1, -1)):
                if (oa, ob) not in counts:
                    raise KeyError(f"missing count record for setting pair ({oa}, {ob})")
                n.append(counts[oa, ob])
                s.append(sa * sb)
        n, s = np.array(n, dtype=float), np.array(s, dtype=float)
        total = n.sum()
        if total <= 0:
            raise ValueError(f"zero total counts for settings {ids['A'][x][0]}, {ids['B'][y][0]}")
        e = float(s @ n / total)
        es.append(e)
        var_s += float(np.sum((s - e) ** 2 * np.maximum(n, 1.0)) / total**2)
    S = es[0] + es[1] + es[2] - es[3]
    return BellResult(S, tuple(es), float(np.sqrt(var_s)), None)


def _local_setting(v: np.ndarray, dof: str, embed: np.ndarray | None) -> AnalyzerSetting:
    if embed is not None:
        v = embed @ v
    if dof == "poln":
        s = solve_poln_angles(v)
        return AnalyzerSetting(poln=PolarizationSetting(s.qwp, s.hwp))
    if dof == "spatial":
        return AnalyzerSetting(spatial=SpatialSetting(v))
    if dof == "etime":
        if abs(abs(v[0]) - abs(v[1])) > 1e-9:
            raise ValueError("energy-time analysis only reaches equatorial kets")
        return AnalyzerSetting(etime=EnergyTimeSetting(float(np.angle(v[1] / v[0]))))
    raise ValueError(f"unknown degree of freedom {dof!r}")


def chsh_setting_pairs(
    settings: ChshSettings,
    dof: str,
    embed_a: np.ndarray | None = None,
    embed_b: np.ndarray | None = None,
    ids: Mapping = CHSH_IDS,
) -> list[SettingPair]:
    """The 16 analyzer pairs realizing a CHSH test in one DOF.

    ``embed_*`` are ``d x 2`` isometries placing the qubit in a larger local
    space (e.g. the ``{g, r}`` corner of the ``(l, g, r)`` spatial space).
    """
    local = {
        "A": ((settings.a, perp(settings.a)), (settings.a_prime, perp(settings.a_prime))),
        "B": ((settings.b, perp(settings.b)), (settings.b_prime, perp(settings.b_prime))),
    }
    pairs = []
    for x in (0, 1):
        for y in (0, 1):
            for oa in (0, 1):
                for ob in (0, 1):
                    pairs.append(SettingPair(
                        ids["A"][x][oa], ids["B"][y][ob],
                        _local_setting(local["A"][x][oa], dof, embed_a),
                        _local_setting(local["B"][y][ob], dof, embed_b),
                    ))
    return pairs


def subspace_project(
    rho: DensityOperator,
    project: Mapping[int, np.ndarray] | None = None,
    restrict: Mapping[int, np.ndarray] | None = None,
    trace: Sequence[int] = (),
) -> DensityOperator:
    """Condition on local projections, restrict to subspaces, trace the rest.

    ``project`` maps subsystem index -> ket; the subsystem is projected and
    removed. ``restrict`` maps index -> ``d x k`` isometry whose columns
    span the kept subspace. ``trace`` lists subsystems traced out
    ("no analyzer"). The result is renormalized.
    """
    project = dict(project or {})
    restrict = dict(restrict or {})
    trace = sorted(set(trace))
    layout = rho.layout
    n = len(layout)
    overlap = (set(project) & set(restrict)) | (set(project) & set(trace)) | (set(restrict) & set(trace))
    if overlap:
        raise ValueError(f"subsystems {sorted(overlap)} are given more than one role")
    ops, new_dims, keep_idx = [], [], []
    for i, d in enumerate(layout.dims):
        if i in project:
            v = np.asarray(project[i], dtype=complex).ravel()
            if v.shape != (d,):
                raise ValueError(f"projection ket for subsystem {i} must have {d} components")
            ops.append(v.conj()[None, :])
        elif i in restrict:
            iso = np.asarray(restrict[i], dtype=complex)
            if iso.ndim != 2 or iso.shape[0] != d:
                raise ValueError(f"restriction for subsystem {i} must be a {d} x k matrix")
            if not np.allclose(iso.conj().T @ iso, np.eye(iso.shape[1]), atol=1e-10):
                raise ValueError(f"restriction for subsystem {i} must have orthonormal columns")
            ops.append(iso.conj().T)
            new_dims.append(iso.shape[1])
            keep_idx.append(i)
        else:
            ops.append(np.eye(d, dtype=complex))
            new_dims.append(d)
            keep_idx.append(i)
    if any(i < 0 or i >= n for i in set(project) | set(restrict) | set(trace)):
        raise IndexError("subsystem index out of range")
    P = kron_all(ops)
    m = P @ rho.matrix @ P.conj().T
    prob = float(np.real(np.trace(m)))
    if prob <= 1e-12:
        raise ValueError(f"projection has vanishing probability ({prob:.3g})")
    survivors = [k for k, i in enumerate(keep_idx) if i not in trace]
    if not survivors:
        raise ValueError("nothing left after projection and tracing")
    if len(survivors) < len(keep_idx):
        m = partial_trace_matrix(m, new_dims, survivors)
    new_layout = layout.select([keep_idx[k] for k in survivors])
    for pos, k in enumerate(survivors):
        new_layout = new_layout.replace_dim(pos, new_dims[k])
    return DensityOperator.from_matrix(m, new_layout)
