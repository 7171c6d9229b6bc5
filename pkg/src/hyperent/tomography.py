"""Two-photon state tomography: projector sets, linear inversion and MLE.

Every photon is measured with the same list of ``d^2`` local kets; the
joint elements are all ``d^4`` ordered pairs. Counts follow
``n_i ~ Poisson(intensity * t_i * <k_i| rho |k_i>)`` with the intensity an
unknown nuisance parameter.

The maximum-likelihood iteration is the ``R rho R`` fixed point,
carried out in the frame whitened by ``G = sum_i t_i |k_i><k_i|`` so
that the measurement elements sum to the identity (the sets used here are
not complete POVMs). In that frame the normalized probabilities ``p_i``
coincide with those of the original problem and the update is the textbook
one. A step that would lower the likelihood is replaced by the diluted
update ``(1 + eps R) sigma (1 + eps R)``, which increases it for small
``eps``. Anderson mixing of recent steps is tried alongside each plain
step and kept only when it is PSD and gains more, which leaves the
ascent monotone while removing most of the slow linear tail.

An alternative with the same optimum is gradient ascent on a Cholesky
parameterization ``rho = T^dag T / Tr(T^dag T)``; it is not used here
because it needs an external optimizer and is not monotone per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln

from .analyzers import AnalyzerSetting, PolarizationSetting, SettingPair, SpatialSetting, solve_poln_angles
from .qcore import DensityOperator, SubsystemLayout, kron_all
from .source import CountRecord
from . import metrics

__all__ = [
    "ProjectorSet",
    "TomographyOptions",
    "TomographyProblem",
    "TomographyResult",
    "LinearResult",
    "canonical_kets",
    "canonical_set",
    "product_set",
    "noiseless_records",
    "linear_inversion",
    "mle_reconstruct",
    "bootstrap_errors",
]

PROB_FLOOR = 1e-12


def canonical_kets(d: int) -> tuple[list[str], np.ndarray]:
    """``|j>``, ``(|j> + |k>)/sqrt 2`` and ``(|j> + i|k>)/sqrt 2`` for ``j < k``."""
    if d < 2:
        raise ValueError("local dimension must be at least 2")
    ids, kets = [], []
    for j in range(d):
        v = np.zeros(d, dtype=complex)
        v[j] = 1
        ids.append(f"z{j}")
        kets.append(v)
    s = 1 / np.sqrt(2)
    for j in range(d):
        for k in range(j + 1, d):
            for tag, phase in (("x", 1.0), ("y", 1j)):
                v = np.zeros(d, dtype=complex)
                v[j], v[k] = s, s * phase
                ids.append(f"{tag}{j}_{k}")
                kets.append(v)
    return ids, np.array(kets)


@dataclass(frozen=True)
class ProjectorSet:
    """Local kets shared by both photons; joint elements are all ordered pairs.

    ``dofs``/``factors`` are present for product sets built from per-DOF
    kets and let :meth:`settings` emit realizable per-DOF analyzer settings.
    """

    ids: tuple[str, ...]
    kets: np.ndarray
    dofs: tuple[str, ...] | None = None
    factors: tuple[tuple[np.ndarray, ...], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        k = np.array(self.kets, dtype=complex)
        if k.ndim != 2 or k.shape[0] != len(self.ids):
            raise ValueError("need one ket per id")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("ket ids must be unique")
        if not np.allclose(np.linalg.norm(k, axis=1), 1.0, atol=1e-12):
            raise ValueError("local kets must be unit vectors")
        k.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "kets", k)

    @property
    def dim(self) -> int:
        return self.kets.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def local_rank(self) -> int:
        """Rank of the Gram matrix of vectorized local projectors."""
        vecs = np.array([np.outer(v, v.conj()).ravel() for v in self.kets])
        return int(np.linalg.matrix_rank(vecs.conj() @ vecs.T))

    def joint_rank(self) -> int:
        vecs = np.array([np.outer(v, v.conj()).ravel() for v in self.joint_kets()])
        return int(np.linalg.matrix_rank(vecs.conj() @ vecs.T))

    def pairs(self) -> list[tuple[str, str]]:
        return [(a, b) for a in self.ids for b in self.ids]

    def joint_kets(self) -> np.ndarray:
        n, d = self.kets.shape
        return (self.kets[:, None, :, None] * self.kets[None, :, None, :]).reshape(n * n, d * d)

    def layout(self) -> SubsystemLayout:
        if self.dofs is None:
            return SubsystemLayout.bipartite(self.dim, self.dim)
        dims = tuple(len(v) for v in self.factors[0])
        return SubsystemLayout(dims * 2, ("A",) * len(dims) + ("B",) * len(dims), self.dofs * 2)

    def settings(self, layout: SubsystemLayout | None = None) -> list[SettingPair]:
        """Analyzer setting pairs for every joint element, in :meth:`pairs` order."""
        layout = layout or self.layout()
        if layout.party_dim("A") != self.dim or layout.party_dim("B") != self.dim:
            raise ValueError("layout does not match the local ket dimension")
        per_dof = (
            self.factors is not None
            and layout.dofs is not None
            and layout.dofs == self.dofs * 2
        )
        local = {}
        for i, name in enumerate(self.ids):
            if per_dof:
                kw = {}
                for dof, v in zip(self.dofs, self.factors[i]):
                    if dof == "poln":
                        s = solve_poln_angles(v)
                        kw["poln"] = PolarizationSetting(s.qwp, s.hwp)
                    elif dof == "spatial":
                        kw["spatial"] = SpatialSetting(v)
                    else:
                        raise ValueError("energy-time tomography is not available (equatorial analysis only)")
                local[name] = AnalyzerSetting(**kw)
            else:
                local[name] = AnalyzerSetting(ket=self.kets[i])
        return [SettingPair(a, b, local[a], local[b]) for a, b in self.pairs()]


def canonical_set(d: int) -> ProjectorSet:
    ids, kets = canonical_kets(d)
    ps = ProjectorSet(tuple(ids), kets)
    if ps.local_rank() != d * d:
        raise RuntimeError("canonical kets are not informationally complete")
    return ps


def product_set(dofs: Sequence[str] = ("poln", "spatial"), spatial_dim: int = 3) -> ProjectorSet:
    """Tensor products of per-DOF canonical kets (realizable with separate analyzers)."""
    per = []
    for dof in dofs:
        d = spatial_dim if dof == "spatial" else 2
        per.append(canonical_kets(d))
    ids, kets, factors = [], [], []
    for combo in np.ndindex(*[len(p[0]) for p in per]):
        ids.append("*".join(per[k][0][i] for k, i in enumerate(combo)))
        fs = tuple(per[k][1][i] for k, i in enumerate(combo))
        factors.append(fs)
        kets.append(kron_all(fs))
    ps = ProjectorSet(tuple(ids), np.array(kets), tuple(dofs), tuple(factors))
    if ps.local_rank() != ps.dim**2:
        raise RuntimeError("product kets are not informationally complete")
    return ps


@dataclass(frozen=True)
class TomographyOptions:
    max_iterations: int = 10_000
    tolerance: float = 1e-10
    # "fit" treats the total flux as a nuisance parameter
    intensity: str = "fit"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.intensity != "fit":
            raise ValueError("only fitted intensity is supported")


@dataclass(frozen=True)
class TomographyProblem:
    projectors: ProjectorSet
    records: tuple[CountRecord, ...]
    method: str = "mle"
    options: TomographyOptions = TomographyOptions()
    layout: SubsystemLayout | None = None

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if self.method not in ("mle", "linear"):
            raise ValueError("method must be 'mle' or 'linear'")
        if self.layout is not None and self.layout.size != self.projectors.dim**2:
            raise ValueError("layout size does not match the projector set")

    @property
    def state_layout(self) -> SubsystemLayout:
        return self.layout or self.projectors.layout()

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(joint kets, counts, durations) in projector-set order.

        Records are matched by id, so their input order is irrelevant.
        """
        lookup: dict[tuple[str, str], CountRecord] = {}
        for r in self.records:
            if r.key in lookup:
                raise ValueError(f"duplicate count record for {r.key}")
            lookup[r.key] = r
        pairs = self.projectors.pairs()
        missing = [p for p in pairs if p not in lookup]
        if missing:
            raise ValueError(f"{len(missing)} joint elements lack count records, e.g. {missing[0]}")
        extra = set(lookup) - set(pairs)
        if extra:
            raise ValueError(f"count records for unknown settings, e.g. {sorted(extra)[0]}")
        counts = np.array([lookup[p].counts for p in pairs], dtype=float)
        durations = np.array([lookup[p].duration for p in pairs], dtype=float)
        return self.projectors.joint_kets(), counts, durations


@dataclass(frozen=True)
class LinearResult:
    rho: DensityOperator
    intensity: float
    physical: bool


@dataclass(frozen=True)
class TomographyResult:
    rho: DensityOperator
    log_likelihood: tuple[float, ...]
    iterations: int
    converged: bool
    intensity: float

    @property
    def final_log_likelihood(self) -> float:
        return self.log_likelihood[-1]

    def diagnostics(self) -> dict:
        return {
            "iterations": self.iterations,
            "final_log_likelihood": self.final_log_likelihood,
            "converged": self.converged,
            "intensity": self.intensity,
        }


def noiseless_records(rho: DensityOperator, projectors: ProjectorSet, total_rate: float, duration: float = 1.0) -> list[CountRecord]:
    """Exact expected counts (non-integer) as records, for closed-loop checks."""
    K = projectors.joint_kets()
    p = np.real(np.einsum("ia,ab,ib->i", K.conj(), rho.matrix, K))
    mu = total_rate * duration * np.clip(p, 0, None)
    return [
        _ExactRecord(a, b, float(m), float(duration), float(m))
        for (a, b), m in zip(projectors.pairs(), mu)
    ]


@dataclass(frozen=True)
class _ExactRecord(CountRecord):
    counts: float  # real-valued expected counts


# ---------------------------------------------------------------- linear

def _hermitian_design(K: np.ndarray) -> np.ndarray:
    """Rows map the real parameters of a Hermitian M to <k_i|M|k_i>."""
    D = K.shape[1]
    Q = K.conj()[:, :, None] * K[:, None, :]  # Q_i[a, b] = conj(k_a) k_b
    iu = np.triu_indices(D, 1)
    diag = np.real(np.einsum("iaa->ia", Q))
    off = Q[:, iu[0], iu[1]]
    return np.hstack([diag, 2 * off.real, -2 * off.imag])


def _hermitian_from_params(x: np.ndarray, D: int) -> np.ndarray:
    m = np.zeros((D, D), dtype=complex)
    m[np.diag_indices(D)] = x[:D]
    iu = np.triu_indices(D, 1)
    n_off = len(iu[0])
    m[iu] = x[D: D + n_off] + 1j * x[D + n_off:]
    m[(iu[1], iu[0])] = np.conj(m[iu])
    return m


def linear_inversion(problem: TomographyProblem) -> LinearResult:
    """Least-squares inversion of ``n_i / t_i = <k_i| M |k_i>`` for Hermitian ``M``.

    ``M = intensity * rho``; the estimate may have negative eigenvalues,
    in which case ``physical`` is False.
    """
    K, n, t = problem.arrays()
    D = K.shape[1]
    A = _hermitian_design(K)
    if np.linalg.matrix_rank(A) < D * D:
        raise ValueError("projector set is rank-deficient; state is not identifiable")
    x, *_ = np.linalg.lstsq(A, n / t, rcond=None)
    M = _hermitian_from_params(x, D)
    intensity = float(np.real(np.trace(M)))
    if intensity <= 0:
        raise ValueError("linear inversion gave non-positive total flux")
    rho = DensityOperator.from_matrix(M, problem.state_layout, check_psd=False)
    return LinearResult(rho, intensity, rho.min_eigenvalue >= -1e-6)


# ---------------------------------------------------------------- MLE

def _inv_sqrt(G: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, v = np.linalg.eigh(G)
    if w[0] <= 0:
        raise ValueError("measurement set does not span the state space")
    return (v / np.sqrt(w)) @ v.conj().T, (v * np.sqrt(w)) @ v.conj().T


def _probs(Kw: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    return np.real(np.einsum("ia,ab,ib->i", Kw.conj(), sigma, Kw))


def _loglik(n: np.ndarray, p: np.ndarray) -> float:
    mask = n > 0
    return math.fsum(n[mask] * np.log(np.maximum(p[mask], PROB_FLOOR)))


def _gain(n: np.ndarray, p_old: np.ndarray, p_new: np.ndarray) -> float:
    """Log-likelihood change, summed term by term so it stays accurate when
    it is many orders of magnitude below the likelihood itself."""
    mask = n > 0
    q_old = np.maximum(p_old[mask], PROB_FLOOR)
    q_new = np.maximum(p_new[mask], PROB_FLOOR)
    return math.fsum(n[mask] * np.log1p((q_new - q_old) / q_old))


def _candidate(Kw: np.ndarray, sigma: np.ndarray, A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = A @ sigma @ A.conj().T
    c /= np.real(np.trace(c))
    return c, _probs(Kw, c)


class _Anderson:
    """Anderson mixing over the last few ``R rho R`` steps.

    The plain iteration converges linearly, and very slowly along
    directions the measurements barely see. A proposal is only used when
    it is positive semidefinite and beats the plain step's likelihood, so
    the ascent stays monotone.
    """

    def __init__(self, depth: int = 6):
        self.depth = depth
        self.xs: list[np.ndarray] = []
        self.rs: list[np.ndarray] = []

    @staticmethod
    def _vec(m: np.ndarray) -> np.ndarray:
        return np.concatenate([m.real.ravel(), m.imag.ravel()])

    def propose(self, sigma: np.ndarray, plain: np.ndarray) -> np.ndarray | None:
        x, r = self._vec(sigma), self._vec(plain - sigma)
        self.xs.append(x)
        self.rs.append(r)
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.rs.pop(0)
        if len(self.xs) < 2:
            return None
        dX = np.diff(np.array(self.xs), axis=0).T
        dR = np.diff(np.array(self.rs), axis=0).T
        gamma, *_ = np.linalg.lstsq(dR, r, rcond=None)
        v = x + r - (dX + dR) @ gamma
        D = sigma.shape[0]
        m = v[: D * D].reshape(D, D) + 1j * v[D * D:].reshape(D, D)
        m = 0.5 * (m + m.conj().T)
        tr = np.real(np.trace(m))
        if not np.isfinite(tr) or tr <= 0:
            return None
        w, u = np.linalg.eigh(m)
        if w[0] < 0:
            # back onto the PSD cone; a tiny floor keeps every direction
            # reachable by the multiplicative update
            w = np.maximum(w, 1e-14 * w[-1])
            m = (u * w) @ u.conj().T
        return m / np.real(np.trace(m))


def mle_reconstruct(problem: TomographyProblem, rho0: DensityOperator | None = None) -> TomographyResult:
    """Maximum-likelihood density matrix by the ``R rho R`` fixed point.

    Stops when one iteration gains less than ``options.tolerance`` in
    log-likelihood, when no step gains anything at working precision, or
    after ``options.max_iterations``. The
    reported trace is the Poisson log-likelihood at the fitted intensity
    and never decreases.
    """
    opts = problem.options
    K, n, t = problem.arrays()
    D = K.shape[1]
    N = float(n.sum())
    if N <= 0:
        raise ValueError("no counts recorded")
    w = t / t.mean()
    G = (K.T * w) @ K.conj()
    G_ih, G_h = _inv_sqrt(0.5 * (G + G.conj().T))
    # whitened kets: sum_i |kw_i><kw_i| = I
    Kw = (K * np.sqrt(w)[:, None]) @ G_ih.T
    f = n / N

    rho_init = np.eye(D) / D if rho0 is None else rho0.matrix
    sigma = G_h @ rho_init @ G_h
    sigma = sigma / np.real(np.trace(sigma))

    const = N * math.log(N) - N - math.fsum(gammaln(n + 1))
    p = _probs(Kw, sigma)
    ll = _loglik(n, p)
    trace = [ll + const]
    converged = False
    it = 0
    accel = _Anderson()
    for it in range(1, opts.max_iterations + 1):
        R = (Kw.T * (f / np.maximum(p, PROB_FLOOR))) @ Kw.conj()
        R = 0.5 * (R + R.conj().T)
        cand, p_new = _candidate(Kw, sigma, R)
        gain = _gain(n, p, p_new)
        mixed = accel.propose(sigma, cand)
        if mixed is not None:
            p_mix = _probs(Kw, mixed)
            g_mix = _gain(n, p, p_mix)
            if g_mix > gain:
                cand, p_new, gain = mixed, p_mix, g_mix
        if gain < 0:
            eps = 1.0
            while gain < 0 and eps > 1e-9:
                cand, p_new = _candidate(Kw, sigma, np.eye(D) + eps * R)
                gain = _gain(n, p, p_new)
                eps /= 2
        if gain < 0:
            # no ascent direction left at working precision
            converged = True
            it -= 1
            break
        sigma = 0.5 * (cand + cand.conj().T)
        p = p_new
        ll += gain
        trace.append(ll + const)
        if gain < opts.tolerance:
            converged = True
            break

    rho = G_ih @ sigma @ G_ih
    rho = DensityOperator.from_matrix(rho, problem.state_layout)
    # mu_i = intensity * t_i * <k_i|rho|k_i>
    intensity = N / float(t @ _probs(K, rho.matrix))
    return TomographyResult(
        rho,
        tuple(trace),
        it,
        converged,
        float(intensity),
    )


def reconstruct(problem: TomographyProblem):
    if problem.method == "linear":
        return linear_inversion(problem)
    return mle_reconstruct(problem)


def bootstrap_errors(
    problem: TomographyProblem,
    result: TomographyResult,
    n_resamples: int,
    seed: int = 0,
    target: DensityOperator | None = None,
) -> dict[str, float]:
    """Parametric-bootstrap standard deviations of the state metrics.

    Counts are redrawn from the Poisson model at the fitted state and
    intensity and re-reconstructed. Fidelity is taken against ``target``,
    or against the fitted state when no target is given.
    """
    if n_resamples <= 0:
        return {}
    if not result.converged:
        raise ValueError("bootstrap needs a converged reconstruction")
    K, _, t = problem.arrays()
    p = np.real(np.einsum("ia,ab,ib->i", K.conj(), result.rho.matrix, K))
    mu = result.intensity * t * np.clip(p, 0, None)
    ref = target if target is not None else result.rho
    two_qubit = result.rho.layout.dims == (2, 2)
    samples: dict[str, list[float]] = {"linear_entropy": [], "fidelity": [], "negativity": []}
    if two_qubit:
        samples["tangle"] = []
    pairs = problem.projectors.pairs()
    for r in range(n_resamples):
        rng = np.random.default_rng([int(seed), r])
        counts = rng.poisson(mu)
        recs = tuple(CountRecord(a, b, int(c), float(tt)) for (a, b), c, tt in zip(pairs, counts, t))
        sub = TomographyProblem(problem.projectors, recs, "mle", problem.options, problem.layout)
        est = mle_reconstruct(sub).rho
        samples["linear_entropy"].append(metrics.linear_entropy(est))
        samples["fidelity"].append(metrics.fidelity(est, ref))
        samples["negativity"].append(metrics.negativity(est))
        if two_qubit:
            samples["tangle"].append(metrics.tangle(est))
    if n_resamples < 2:
        return {k: 0.0 for k in samples}
    return {k: float(np.std(v, ddof=1)) for k, v in samples.items()}
