"""Per-photon analysis chains and the projectors they realize.

Polarization: quarter-wave plate, half-wave plate and a polarizer passing
``H``. Spatial mode: an ideal hologram + single-mode fiber that projects
onto a chosen ket in ``(l, g, r)``. Energy-time: a Franson-type
interferometer, which only accesses the equatorial states
``(|s> + e^{i delta}|f>)/sqrt(2)``.

Jones conventions (global phases are ignored everywhere)::

    hwp(t) = R(t) diag(1, -1) R(-t)
    qwp(t) = R(t) diag(1,  i) R(-t)

With these, the standard polarization kets come from:

=====  ==========  ==========
ket    qwp angle   hwp angle
=====  ==========  ==========
H      0           0
V      0           pi/4
D      0           pi/8
A      0           -pi/8
R      pi/4        0       ((H - iV)/sqrt 2)
L      -pi/4       0       ((H + iV)/sqrt 2)
=====  ==========  ==========

(The table is checked in the test suite; see ``STANDARD_SETTINGS``.)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .qcore import SubsystemLayout, kron_all

__all__ = [
    "PolarizationSetting",
    "SpatialSetting",
    "EnergyTimeSetting",
    "AnalyzerSetting",
    "rotation",
    "hwp_jones",
    "qwp_jones",
    "poln_projector",
    "etime_projector",
    "spatial_ket",
    "solve_poln_angles",
    "photon_ket_factors",
    "joint_projector",
    "joint_ket",
    "STANDARD_KETS",
    "STANDARD_SETTINGS",
    "SettingPair",
]

_S2 = 1 / np.sqrt(2)

STANDARD_KETS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "R": np.array([_S2, -1j * _S2], dtype=complex),
    "L": np.array([_S2, 1j * _S2], dtype=complex),
}

# Spatial kets in (l, g, r); h and v are the l/r superpositions.
SPATIAL_KETS = {
    "l": np.array([1, 0, 0], dtype=complex),
    "g": np.array([0, 1, 0], dtype=complex),
    "r": np.array([0, 0, 1], dtype=complex),
    "h": np.array([_S2, 0, _S2], dtype=complex),
    "v": np.array([_S2, 0, -_S2], dtype=complex),
}


def rotation(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def hwp_jones(theta: float) -> np.ndarray:
    return rotation(theta) @ np.diag([1, -1]).astype(complex) @ rotation(-theta)


def qwp_jones(theta: float) -> np.ndarray:
    return rotation(theta) @ np.diag([1, 1j]) @ rotation(-theta)


def _unit(v, dim: int | None = None, what: str = "ket") -> np.ndarray:
    v = np.asarray(v, dtype=complex).ravel()
    if dim is not None and v.shape[0] != dim:
        raise ValueError(f"{what} must have {dim} components, got {v.shape[0]}")
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError(f"{what} must be a unit vector (norm {np.linalg.norm(v):.6g})")
    return v / np.linalg.norm(v)


@dataclass(frozen=True)
class PolarizationSetting:
    qwp: float
    hwp: float

    def __post_init__(self):
        if not (np.isfinite(self.qwp) and np.isfinite(self.hwp)):
            raise ValueError("wave-plate angles must be finite")

    @property
    def ket(self) -> np.ndarray:
        return poln_projector(self)


@dataclass(frozen=True)
class SpatialSetting:
    ket: np.ndarray

    def __post_init__(self):
        v = _unit(self.ket, what="spatial ket")
        if v.shape[0] not in (2, 3):
            raise ValueError("spatial kets live in (l, g, r) or the truncated (l, r) space")
        v.setflags(write=False)
        object.__setattr__(self, "ket", v)

    @classmethod
    def named(cls, name: str, dim: int = 3) -> "SpatialSetting":
        return cls(spatial_ket(name, dim))


@dataclass(frozen=True)
class EnergyTimeSetting:
    delta: float
    equatorial: bool = True

    def __post_init__(self):
        if not np.isfinite(self.delta):
            raise ValueError("phase must be finite")
        if not self.equatorial:
            raise ValueError("only equatorial (phase-only) energy-time analysis is available")

    @property
    def ket(self) -> np.ndarray:
        return etime_projector(self)


@dataclass(frozen=True)
class AnalyzerSetting:
    """One photon's analyzer; ``None`` components pass that DOF through.

    ``ket`` is an escape hatch for projections onto arbitrary kets of the
    photon's whole local space (e.g. tomography sets that superpose
    polarization and spatial mode); it excludes the per-DOF fields.
    """

    poln: PolarizationSetting | None = None
    spatial: SpatialSetting | None = None
    etime: EnergyTimeSetting | None = None
    ket: np.ndarray | None = None

    def __post_init__(self):
        if self.ket is not None:
            if any(x is not None for x in (self.poln, self.spatial, self.etime)):
                raise ValueError("a raw ket setting cannot be combined with per-DOF settings")
            v = _unit(self.ket, what="photon ket")
            v.setflags(write=False)
            object.__setattr__(self, "ket", v)
        elif self.poln is None and self.spatial is None and self.etime is None:
            raise ValueError("an analyzer setting must act on at least one degree of freedom")

    def component(self, dof: str):
        return {"poln": self.poln, "spatial": self.spatial, "etime": self.etime}[dof]


def poln_projector(s: PolarizationSetting) -> np.ndarray:
    """Ket transmitted with certainty by the wave plates + H polarizer."""
    u = qwp_jones(s.qwp) @ hwp_jones(s.hwp)
    return u.conj().T @ np.array([1, 0], dtype=complex)


def etime_projector(s: EnergyTimeSetting) -> np.ndarray:
    return np.array([1, np.exp(1j * s.delta)], dtype=complex) * _S2


def spatial_ket(name: str, dim: int = 3) -> np.ndarray:
    """Named spatial ket; ``dim=2`` drops the Gaussian component."""
    if name not in SPATIAL_KETS:
        raise KeyError(f"unknown spatial ket {name!r}; expected one of {sorted(SPATIAL_KETS)}")
    v = SPATIAL_KETS[name]
    if dim == 3:
        return v.copy()
    if dim == 2:
        if v[1] != 0:
            raise ValueError("the Gaussian mode is absent from the truncated spatial space")
        return v[[0, 2]].copy()
    raise ValueError("spatial dimension must be 2 or 3")


def _stokes(v: np.ndarray) -> np.ndarray:
    a, b = v
    return np.array([abs(a) ** 2 - abs(b) ** 2, 2 * np.real(np.conj(a) * b), 2 * np.imag(np.conj(a) * b)])


def solve_poln_angles(target: Sequence[complex]) -> PolarizationSetting:
    """Wave-plate angles whose analyzer passes ``target`` (up to phase).

    The quarter-wave plate alone fixes the ellipticity (``|S3| = |sin 2q|``)
    and the half-wave plate reflects the linear Stokes part about ``4h``
    while flipping handedness, so both angles follow in closed form. The
    few sign branches are resolved by direct overlap.
    """
    t = _unit(target, 2, "polarization ket")
    s1, s2, s3 = _stokes(t)
    q = 0.5 * np.arcsin(np.clip(s3, -1.0, 1.0))
    phi_t = np.arctan2(s2, s1)
    best, best_overlap = None, -1.0
    for qq in (q, -q, np.pi / 2 - q, q - np.pi / 2):
        v0 = qwp_jones(qq).conj().T @ np.array([1, 0], dtype=complex)
        a0 = _stokes(v0)
        phi0 = np.arctan2(a0[1], a0[0])
        for h in ((phi_t + phi0) / 4, (phi_t + phi0) / 4 + np.pi / 4):
            s = PolarizationSetting(float(qq), float(h))
            ov = abs(np.vdot(poln_projector(s), t)) ** 2
            if ov > best_overlap:
                best, best_overlap = s, ov
    return best


def photon_ket_factors(setting: AnalyzerSetting, layout: SubsystemLayout, party: str) -> list[np.ndarray | None]:
    """Per-subsystem kets for one photon (``None`` where the DOF is traced)."""
    idx = layout.party_indices(party)
    if setting.ket is not None:
        d = layout.party_dim(party)
        if setting.ket.shape[0] != d:
            raise ValueError(f"photon ket has {setting.ket.shape[0]} components, photon {party} space is {d}-dim")
        return [setting.ket]
    if layout.dofs is None:
        raise ValueError("layout must carry DOF labels to place per-DOF settings")
    present = {layout.dofs[i] for i in idx}
    for dof in ("poln", "spatial", "etime"):
        if setting.component(dof) is not None and dof not in present:
            raise ValueError(f"setting acts on {dof} but photon {party} has no {dof} subsystem")
    out = []
    for i in idx:
        comp = setting.component(layout.dofs[i])
        if comp is None:
            out.append(None)
            continue
        v = comp.ket
        if v.shape[0] != layout.dims[i]:
            raise ValueError(f"{layout.dofs[i]} ket has {v.shape[0]} components, subsystem is {layout.dims[i]}-dim")
        out.append(v)
    return out


def _factor_blocks(a: AnalyzerSetting, b: AnalyzerSetting, layout: SubsystemLayout):
    fa = photon_ket_factors(a, layout, "A")
    fb = photon_ket_factors(b, layout, "B")
    if layout.parties != tuple(sorted(layout.parties)):
        raise ValueError("layout must list photon A subsystems before photon B")
    dims_a = [layout.party_dim("A")] if a.ket is not None else [layout.dims[i] for i in layout.party_indices("A")]
    dims_b = [layout.party_dim("B")] if b.ket is not None else [layout.dims[i] for i in layout.party_indices("B")]
    return list(zip(fa + fb, dims_a + dims_b))


def joint_projector(a: AnalyzerSetting, b: AnalyzerSetting, layout: SubsystemLayout) -> np.ndarray:
    """Two-photon measurement element; passed-through DOFs contribute identity."""
    mats = []
    for v, d in _factor_blocks(a, b, layout):
        mats.append(np.eye(d, dtype=complex) if v is None else np.outer(v, v.conj()))
    return kron_all(mats)


def joint_ket(a: AnalyzerSetting, b: AnalyzerSetting, layout: SubsystemLayout) -> np.ndarray:
    """The product ket of a rank-1 joint element (no pass-through allowed)."""
    vs = []
    for v, _ in _factor_blocks(a, b, layout):
        if v is None:
            raise ValueError("joint element is not rank-1: a DOF is passed through")
        vs.append(v)
    return kron_all(vs)


STANDARD_SETTINGS = {
    "H": PolarizationSetting(0.0, 0.0),
    "V": PolarizationSetting(0.0, np.pi / 4),
    "D": PolarizationSetting(0.0, np.pi / 8),
    "A": PolarizationSetting(0.0, -np.pi / 8),
    "R": PolarizationSetting(np.pi / 4, 0.0),
    "L": PolarizationSetting(-np.pi / 4, 0.0),
}


@dataclass(frozen=True)
class SettingPair:
    """One coincidence measurement: a setting per photon plus string ids."""

    id_a: str
    id_b: str
    a: AnalyzerSetting
    b: AnalyzerSetting

    @property
    def key(self) -> tuple[str, str]:
        return (self.id_a, self.id_b)
