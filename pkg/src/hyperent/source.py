"""Hyperentangled two-photon states and simulated coincidence counting.

The source emits a product of three two-photon factors::

    (|HH> + |VV>)  (x)  (|rl> + alpha |gg> + |lr>)  (x)  (|ss> + |ff>)

Imperfections are applied as channels in a fixed order:

1. per-DOF white noise on the two-photon factor (visibility ``V``:
   ``rho -> V rho + (1 - V) Tr_dof(rho) (x) I/d``),
2. polarization phase damping per photon (strength 1 kills H/V coherences),
3. polarization depolarizing per photon,
4. global white noise.

Default rates are assumptions, not measured values: ``pair_rate`` of
1000 Hz and no accidental background.

Truncated spatial space. With ``spatial_truncation=2`` the Gaussian mode is
dropped and each photon's spatial subsystem has basis ``(l, r)``. The OAM
qubit's logical labels are mirrored between the photons (``0_A = l``,
``1_A = r``, ``0_B = r``, ``1_B = l``), so that ``|rl> + |lr>`` is the Bell
state ``Phi+_spa`` while storage keeps the physical ``(l, r)`` order.
"""
from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .analyzers import SettingPair, joint_projector
from .qcore import DensityOperator, StateVector, SubsystemLayout, kron_all

__all__ = [
    "SourceConfig",
    "CountRecord",
    "FIG2_ALPHA",
    "bell_vector",
    "spatial_factor",
    "build_hyper_state",
    "apply_white_noise",
    "apply_dephasing",
    "apply_depolarizing",
    "make_named_state",
    "catalog",
    "maximally_entangled",
    "expected_rate",
    "expected_counts",
    "simulate_counts",
]

FIG2_ALPHA = 1.88 * np.exp(0.16j * np.pi)


@dataclass(frozen=True)
class SourceConfig:
    alpha: complex = 1.0
    spatial_truncation: int = 3
    visibility_poln: float = 1.0
    visibility_spa: float = 1.0
    visibility_et: float = 1.0
    dephase_poln_A: float = 0.0
    dephase_poln_B: float = 0.0
    depolarize_poln_A: float = 0.0
    depolarize_poln_B: float = 0.0
    white_noise: float = 0.0
    pair_rate: float = 1000.0
    background_rate: float = 0.0
    seed: int = 0

    _PROBS = (
        "visibility_poln", "visibility_spa", "visibility_et",
        "dephase_poln_A", "dephase_poln_B", "depolarize_poln_A", "depolarize_poln_B",
        "white_noise",
    )

    def __post_init__(self):
        object.__setattr__(self, "alpha", complex(self.alpha))
        if self.spatial_truncation not in (2, 3):
            raise ValueError("spatial_truncation must be 2 or 3")
        for name in self._PROBS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.pair_rate < 0 or self.background_rate < 0:
            raise ValueError("rates must be non-negative")
        if not np.isfinite(self.alpha):
            raise ValueError("alpha must be finite")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "SourceConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        d["alpha"] = [self.alpha.real, self.alpha.imag]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SourceConfig":
        d = dict(d)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown source config fields: {sorted(unknown)}")
        if "alpha" in d and isinstance(d["alpha"], (list, tuple)):
            re, im = d["alpha"]
            d["alpha"] = complex(re, im)
        return cls(**d)


@dataclass(frozen=True)
class CountRecord:
    setting_id_a: str
    setting_id_b: str
    counts: int
    duration: float
    expected: float | None = None

    def __post_init__(self):
        if self.counts < 0:
            raise ValueError("counts must be non-negative")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    @property
    def key(self) -> tuple[str, str]:
        return (self.setting_id_a, self.setting_id_b)


# ---------------------------------------------------------------- factors

def bell_vector(kind: str, dof: str = "poln") -> np.ndarray:
    """Two-photon Bell vector ``phi+``, ``phi-``, ``psi+`` or ``psi-`` for a DOF.

    Spatial Bell states use the mirrored OAM logical encoding (module
    docstring) and are returned in the physical ``(l, r) x (l, r)`` basis.
    """
    kind = kind.lower()
    s = 1 / np.sqrt(2)
    logical = {
        "phi+": [s, 0, 0, s],
        "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0],
        "psi-": [0, s, -s, 0],
    }
    if kind not in logical:
        raise KeyError(f"unknown Bell state {kind!r}")
    v = np.array(logical[kind], dtype=complex)
    if dof == "spatial":
        # photon B logical 0 = r (index 1), logical 1 = l (index 0)
        v = v.reshape(2, 2)[:, ::-1].ravel()
    elif dof not in ("poln", "etime"):
        raise ValueError(f"unknown degree of freedom {dof!r}")
    return v


def spatial_factor(alpha: complex = 1.0, truncation: int = 3) -> np.ndarray:
    """Normalized ``|rl> + alpha|gg> + |lr>`` (or ``(|rl> + |lr>)/sqrt 2`` when truncated)."""
    if truncation == 2:
        return bell_vector("phi+", "spatial")
    if truncation != 3:
        raise ValueError("truncation must be 2 or 3")
    m = np.zeros((3, 3), dtype=complex)
    m[2, 0] = 1.0  # |rl>
    m[1, 1] = alpha  # |gg>
    m[0, 2] = 1.0  # |lr>
    v = m.ravel()
    return v / np.linalg.norm(v)


def _assemble(factors: Sequence[tuple[str, np.ndarray, int]]) -> StateVector:
    """Combine two-photon DOF factors into photon-A-then-B ordering."""
    dofs = [f[0] for f in factors]
    dims = [f[2] for f in factors]
    v = kron_all([f[1] for f in factors])
    n = len(factors)
    # kron order is (dof0_A, dof0_B, dof1_A, dof1_B, ...)
    t = v.reshape([d for d in dims for _ in range(2)])
    perm = [2 * i for i in range(n)] + [2 * i + 1 for i in range(n)]
    layout = SubsystemLayout(tuple(dims) * 2, ("A",) * n + ("B",) * n, tuple(dofs) * 2)
    return StateVector(t.transpose(perm).ravel(), layout)


def _factor_dims(dof: str, truncation: int = 3) -> int:
    return truncation if dof == "spatial" else 2


# ---------------------------------------------------------------- channels

def _permute(m: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    n = len(dims)
    t = m.reshape(list(dims) * 2)
    t = t.transpose(list(perm) + [n + p for p in perm])
    d = m.shape[0]
    return t.reshape(d, d)


def _replace(m: np.ndarray, dims: Sequence[int], subsystems: Sequence[int], p: float) -> np.ndarray:
    """``(1 - p) rho + p Tr_S(rho) (x) I_S / d_S`` with S kept in place."""
    if p == 0:
        return m
    dims = list(dims)
    subsystems = sorted(subsystems)
    rest = [i for i in range(len(dims)) if i not in subsystems]
    perm = rest + subsystems
    mp = _permute(m, dims, perm)
    d_s = int(np.prod([dims[i] for i in subsystems]))
    d_r = mp.shape[0] // d_s
    red = np.einsum("aibi->ab", mp.reshape(d_r, d_s, d_r, d_s))
    mixed = np.kron(red, np.eye(d_s) / d_s)
    inv = np.argsort(perm)
    mixed = _permute(mixed, [dims[i] for i in perm], inv)
    return (1 - p) * m + p * mixed


def apply_white_noise(rho: DensityOperator, subsystems: Sequence[int], p: float) -> DensityOperator:
    """Replace the named subsystems by white noise with probability ``p``."""
    m = _replace(rho.matrix, rho.layout.dims, subsystems, p)
    return DensityOperator(m, rho.layout, check_psd=False)


def apply_dephasing(rho: DensityOperator, subsystem: int, p: float) -> DensityOperator:
    """Phase damping in the computational basis; off-diagonals scale by ``1 - p``."""
    if p == 0:
        return rho
    d = rho.layout.dims[subsystem]
    if d != 2:
        raise ValueError("dephasing acts on a qubit subsystem")
    z = kron_all([np.diag([1.0, -1.0]) if i == subsystem else np.eye(k) for i, k in enumerate(rho.layout.dims)])
    m = (1 - p / 2) * rho.matrix + (p / 2) * (z @ rho.matrix @ z)
    return DensityOperator(m, rho.layout, check_psd=False)


def apply_depolarizing(rho: DensityOperator, subsystem: int, p: float) -> DensityOperator:
    return apply_white_noise(rho, [subsystem], p)


def build_hyper_state(cfg: SourceConfig | None = None) -> DensityOperator:
    """Noisy hyperentangled state over ``[poln, spatial, etime]`` per photon."""
    cfg = cfg or SourceConfig()
    trunc = cfg.spatial_truncation
    psi = _assemble([
        ("poln", bell_vector("phi+"), 2),
        ("spatial", spatial_factor(cfg.alpha, trunc), trunc),
        ("etime", bell_vector("phi+"), 2),
    ])
    rho = psi.density()
    layout = rho.layout
    for dof, vis in (("poln", cfg.visibility_poln), ("spatial", cfg.visibility_spa), ("etime", cfg.visibility_et)):
        rho = apply_white_noise(rho, [layout.index_of("A", dof), layout.index_of("B", dof)], 1 - vis)
    rho = apply_dephasing(rho, layout.index_of("A", "poln"), cfg.dephase_poln_A)
    rho = apply_dephasing(rho, layout.index_of("B", "poln"), cfg.dephase_poln_B)
    rho = apply_depolarizing(rho, layout.index_of("A", "poln"), cfg.depolarize_poln_A)
    rho = apply_depolarizing(rho, layout.index_of("B", "poln"), cfg.depolarize_poln_B)
    if cfg.white_noise:
        m = (1 - cfg.white_noise) * rho.matrix + cfg.white_noise * np.eye(layout.size) / layout.size
        rho = DensityOperator(m, layout, check_psd=False)
    # channels are CPTP; the final check guards against construction bugs
    return DensityOperator(rho.matrix, layout)


# ---------------------------------------------------------------- catalog

def maximally_entangled(d: int) -> DensityOperator:
    v = np.eye(d, dtype=complex).ravel() / np.sqrt(d)
    return StateVector(v, SubsystemLayout.bipartite(d, d)).density()


def _pure(factors) -> DensityOperator:
    return _assemble(factors).density()


def _mixed_poln_with_phi_spa(poln_factor: np.ndarray) -> DensityOperator:
    """``rho_poln (x) |Phi+_spa><Phi+_spa|`` reordered to A-then-B."""
    spa = bell_vector("phi+", "spatial")
    m = np.kron(poln_factor, np.outer(spa, spa.conj()))
    # kron order (polA, polB, spaA, spaB) -> (polA, spaA, polB, spaB)
    m = _permute(m, [2, 2, 2, 2], [0, 2, 1, 3])
    return DensityOperator(m, SubsystemLayout.photons(("poln", "spatial"), spatial_dim=2))


def _named_builders() -> dict[str, tuple[Callable[[], DensityOperator], str]]:
    b: dict[str, tuple[Callable[[], DensityOperator], str]] = {}
    for kind in ("phi+", "phi-", "psi+", "psi-"):
        for dof, d in (("poln", 2), ("spa", 2), ("te", 2)):
            full = {"poln": "poln", "spa": "spatial", "te": "etime"}[dof]
            b[f"{kind}_{dof}"] = (
                (lambda kind=kind, full=full, d=d: _pure([(full, bell_vector(kind, full), d)])),
                f"Bell state {kind} in {full}",
            )
    b["eq1_ideal"] = (lambda: build_hyper_state(SourceConfig()), "ideal hyperentangled state, alpha = 1 (144-dim)")
    b["eq1_poln_spa"] = (
        lambda: _pure([("poln", bell_vector("phi+"), 2), ("spatial", spatial_factor(1.0), 3)]),
        "Phi+_poln (x) (|rl> + |gg> + |lr>)/sqrt 3 (36-dim)",
    )
    b["fig2_fit"] = (
        lambda: _pure([("poln", bell_vector("phi+"), 2), ("spatial", spatial_factor(FIG2_ALPHA), 3)]),
        "Phi+_poln (x) (|lr> + alpha|gg> + |rl>)/norm, alpha = 1.88 exp(0.16 i pi) (36-dim)",
    )
    b["fig3a"] = (
        lambda: _pure([("poln", bell_vector("phi+"), 2), ("spatial", bell_vector("phi+", "spatial"), 2)]),
        "Phi+_poln (x) Phi+_spa (16-dim)",
    )
    b["fig3b"] = (
        lambda: _pure([("poln", bell_vector("psi+"), 2), ("spatial", bell_vector("phi+", "spatial"), 2)]),
        "Psi+_poln (x) Phi+_spa (16-dim)",
    )
    b["fig3c"] = (
        lambda: _mixed_poln_with_phi_spa(np.diag([0.5, 0, 0, 0.5]).astype(complex)),
        "1/2 (|HH><HH| + |VV><VV|) (x) Phi+_spa (16-dim)",
    )
    b["fig3d"] = (
        lambda: _mixed_poln_with_phi_spa(np.eye(4, dtype=complex) / 4),
        "1/4 I_poln (x) Phi+_spa (16-dim)",
    )
    return b


_BUILDERS = _named_builders()


def catalog() -> dict[str, tuple[int, str]]:
    """Name -> (dimension, description) for every named state."""
    dims = {}
    for name, (_, desc) in _BUILDERS.items():
        if name == "eq1_ideal":
            d = 144
        elif name in ("eq1_poln_spa", "fig2_fit"):
            d = 36
        elif name.startswith("fig3"):
            d = 16
        else:
            d = 4
        dims[name] = (d, desc)
    return dims


def make_named_state(name: str) -> DensityOperator:
    try:
        builder, _ = _BUILDERS[name.lower()]
    except KeyError:
        raise KeyError(f"unknown state {name!r}; known: {', '.join(sorted(_BUILDERS))}") from None
    return builder()


# ---------------------------------------------------------------- counting

def expected_rate(rho: DensityOperator, element: np.ndarray, cfg: SourceConfig) -> float:
    """Coincidence rate (Hz) for one measurement element.

    The background is an accidental rate added to every element, so rates
    summed over a complete family include the background once per element.
    """
    element = np.asarray(element)
    if element.shape != rho.matrix.shape:
        raise ValueError(f"element shape {element.shape} does not match state {rho.matrix.shape}")
    p = float(np.real(np.vdot(element.conj().T, rho.matrix)))  # Tr(rho E)
    return max(0.0, cfg.pair_rate * p + cfg.background_rate)


def expected_counts(rho: DensityOperator, pairs: Sequence[SettingPair], cfg: SourceConfig, duration: float) -> np.ndarray:
    return np.array([
        expected_rate(rho, joint_projector(sp.a, sp.b, rho.layout), cfg) * duration for sp in pairs
    ])


def simulate_counts(
    rho: DensityOperator,
    pairs: Sequence[SettingPair],
    cfg: SourceConfig,
    duration: float,
    threads: int = 1,
) -> list[CountRecord]:
    """Poisson coincidence counts for each setting pair.

    Record ``i`` draws from its own generator seeded with ``(seed, i)``, so
    the output does not depend on ``threads``.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    mu = expected_counts(rho, pairs, cfg, duration)

    def draw(i: int) -> int:
        if mu[i] == 0:
            return 0
        rng = np.random.default_rng([int(cfg.seed), i])
        return int(rng.poisson(mu[i]))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            counts = list(ex.map(draw, range(len(pairs))))
    else:
        counts = [draw(i) for i in range(len(pairs))]
    return [
        CountRecord(sp.id_a, sp.id_b, n, float(duration), float(m))
        for sp, n, m in zip(pairs, counts, mu)
    ]
