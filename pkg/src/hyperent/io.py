"""File formats: state JSON, settings JSON, counts CSV, configs and results.

Floats are written with ``repr`` precision, so every IEEE-754 double
round-trips exactly through JSON.
"""
from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .analyzers import (
    AnalyzerSetting,
    EnergyTimeSetting,
    PolarizationSetting,
    SettingPair,
    SpatialSetting,
    photon_ket_factors,
)
from .qcore import DensityOperator, StateVector, SubsystemLayout, kron_all
from .source import CountRecord, SourceConfig
from .tomography import ProjectorSet, TomographyOptions

__all__ = [
    "state_to_dict",
    "state_from_dict",
    "dumps",
    "write_atomic",
    "save_state",
    "load_state",
    "settings_to_list",
    "settings_from_list",
    "save_settings",
    "load_settings",
    "counts_to_csv",
    "counts_from_csv",
    "save_counts",
    "load_counts",
    "load_config",
    "fringe_to_csv",
    "fringe_from_csv",
    "projector_set_from_settings",
    "infer_layout",
    "save_bundle",
    "load_bundle",
    "options_from_dict",
]


def _pairs(values: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.ravel(values)]


def _complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("complex entries must be [re, im] pairs")
    return arr[:, 0] + 1j * arr[:, 1]


def _layout_dict(layout: SubsystemLayout) -> dict:
    d: dict[str, Any] = {"dims": list(layout.dims), "parties": list(layout.parties)}
    if layout.dofs is not None:
        d["dofs"] = list(layout.dofs)
    return d


def _layout_from(d: dict) -> SubsystemLayout:
    return SubsystemLayout(tuple(d["dims"]), tuple(d["parties"]), tuple(d["dofs"]) if d.get("dofs") else None)


def state_to_dict(state: DensityOperator | StateVector) -> dict:
    d = _layout_dict(state.layout)
    if isinstance(state, DensityOperator):
        d["matrix"] = _pairs(state.matrix)
    else:
        d["vector"] = _pairs(state.amplitudes)
    return d


def state_from_dict(d: dict, check_psd: bool = True) -> DensityOperator | StateVector:
    layout = _layout_from(d)
    if "matrix" in d:
        n = layout.size
        m = _complex(d["matrix"])
        if m.shape[0] != n * n:
            raise ValueError(f"matrix has {m.shape[0]} entries, layout needs {n * n}")
        return DensityOperator(m.reshape(n, n), layout, check_psd=check_psd)
    if "vector" in d:
        return StateVector(_complex(d["vector"]), layout)
    raise ValueError("state JSON needs a 'matrix' or 'vector' entry")


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def write_atomic(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_state(path, state) -> None:
    write_atomic(path, dumps(state_to_dict(state)))


def load_state(path, check_psd: bool = True):
    with open(path) as fh:
        return state_from_dict(json.load(fh), check_psd=check_psd)


# ---------------------------------------------------------------- settings

def _photon_to_dict(s: AnalyzerSetting) -> dict:
    if s.ket is not None:
        return {"ket": _pairs(s.ket)}
    return {
        "poln": None if s.poln is None else {"qwp": s.poln.qwp, "hwp": s.poln.hwp},
        "spatial": None if s.spatial is None else _pairs(s.spatial.ket),
        "etime": None if s.etime is None else {"delta": s.etime.delta},
    }


def _photon_from_dict(d: dict) -> AnalyzerSetting:
    unknown = set(d) - {"poln", "spatial", "etime", "ket"}
    if unknown:
        raise ValueError(f"unknown analyzer fields {sorted(unknown)}")
    if d.get("ket") is not None:
        return AnalyzerSetting(ket=_complex(d["ket"]))
    p, s, e = d.get("poln"), d.get("spatial"), d.get("etime")
    return AnalyzerSetting(
        poln=None if p is None else PolarizationSetting(float(p["qwp"]), float(p["hwp"])),
        spatial=None if s is None else SpatialSetting(_complex(s)),
        etime=None if e is None else EnergyTimeSetting(float(e["delta"])),
    )


def settings_to_list(pairs: Sequence[SettingPair]) -> list[dict]:
    return [{"id_a": p.id_a, "id_b": p.id_b, "a": _photon_to_dict(p.a), "b": _photon_to_dict(p.b)} for p in pairs]


def settings_from_list(entries: Iterable[dict]) -> list[SettingPair]:
    out = []
    for e in entries:
        out.append(SettingPair(str(e["id_a"]), str(e["id_b"]), _photon_from_dict(e["a"]), _photon_from_dict(e["b"])))
    keys = [p.key for p in out]
    if len(set(keys)) != len(keys):
        raise ValueError("settings file repeats a setting pair")
    return out


def save_settings(path, pairs: Sequence[SettingPair]) -> None:
    write_atomic(path, dumps(settings_to_list(pairs)))


def load_settings(path) -> list[SettingPair]:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, list):
        raise ValueError("a settings file is a JSON list of setting pairs")
    return settings_from_list(data)


# ---------------------------------------------------------------- counts

COUNT_HEADER = ["setting_a", "setting_b", "counts", "duration"]


def counts_to_csv(records: Sequence[CountRecord]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNT_HEADER)
    for r in records:
        w.writerow([r.setting_id_a, r.setting_id_b, int(r.counts), repr(float(r.duration))])
    return buf.getvalue()


def counts_from_csv(text: str) -> list[CountRecord]:
    rows = csv.DictReader(_io.StringIO(text))
    if rows.fieldnames is None or list(rows.fieldnames)[:4] != COUNT_HEADER:
        raise ValueError(f"counts CSV header must be {','.join(COUNT_HEADER)}")
    out = []
    for row in rows:
        c = float(row["counts"])
        if c != int(c):
            raise ValueError(f"counts must be integers, got {row['counts']}")
        out.append(CountRecord(row["setting_a"], row["setting_b"], int(c), float(row["duration"])))
    return out


def save_counts(path, records) -> None:
    write_atomic(path, counts_to_csv(records))


def load_counts(path) -> list[CountRecord]:
    with open(path, newline="") as fh:
        return counts_from_csv(fh.read())


# ---------------------------------------------------------------- misc

def load_config(path) -> tuple[SourceConfig, dict]:
    """SourceConfig JSON; an optional ``"tolerances"`` object is returned separately."""
    with open(path) as fh:
        d = json.load(fh)
    tol = d.pop("tolerances", {}) or {}
    return SourceConfig.from_dict(d), tol


def fringe_to_csv(fringe: Sequence[tuple[float, float]]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["phase", "rate"])
    for ph, r in fringe:
        w.writerow([repr(float(ph)), repr(float(r))])
    return buf.getvalue()


def fringe_from_csv(text: str) -> list[tuple[float, float]]:
    rows = csv.DictReader(_io.StringIO(text))
    if rows.fieldnames is None or list(rows.fieldnames)[:2] != ["phase", "rate"]:
        raise ValueError("fringe CSV header must be phase,rate")
    return [(float(r["phase"]), float(r["rate"])) for r in rows]


def infer_layout(pairs: Sequence[SettingPair]) -> SubsystemLayout:
    """Two-photon layout implied by the DOFs a settings list touches."""
    first = pairs[0].a
    if first.ket is not None:
        d = first.ket.shape[0]
        return SubsystemLayout.bipartite(d, d)
    dofs, spatial_dim = set(), 3
    for p in pairs:
        for s in (p.a, p.b):
            if s.ket is not None:
                raise ValueError("settings mix raw kets with per-DOF analyzers")
            for dof in ("poln", "spatial", "etime"):
                if s.component(dof) is not None:
                    dofs.add(dof)
            if s.spatial is not None:
                spatial_dim = s.spatial.ket.shape[0]
    return SubsystemLayout.photons(tuple(dofs), spatial_dim=spatial_dim)


def _photon_ket(s: AnalyzerSetting, layout: SubsystemLayout, party: str) -> np.ndarray:
    factors = photon_ket_factors(s, layout, party)
    if any(f is None for f in factors):
        raise ValueError("tomography settings must analyze every degree of freedom")
    return kron_all(factors)


def projector_set_from_settings(pairs: Sequence[SettingPair], layout: SubsystemLayout) -> ProjectorSet:
    """Recover the shared local ket list from a full tomography settings file."""
    kets_a: dict[str, np.ndarray] = {}
    kets_b: dict[str, np.ndarray] = {}
    for p in pairs:
        kets_a.setdefault(p.id_a, _photon_ket(p.a, layout, "A"))
        kets_b.setdefault(p.id_b, _photon_ket(p.b, layout, "B"))
    if list(kets_a) != list(kets_b):
        raise ValueError("tomography needs the same local setting list on both photons")
    for k in kets_a:
        if not np.allclose(kets_a[k], kets_b[k], atol=1e-12):
            raise ValueError(f"setting {k!r} differs between the photons")
    ps = ProjectorSet(tuple(kets_a), np.array(list(kets_a.values())))
    if set(ps.pairs()) != {p.key for p in pairs}:
        raise ValueError("settings do not cover every ordered pair of local settings")
    return ps


def save_bundle(directory, pairs: Sequence[SettingPair], records: Sequence[CountRecord], options: dict) -> None:
    directory = Path(directory)
    save_settings(directory / "settings.json", pairs)
    save_counts(directory / "counts.csv", records)
    write_atomic(directory / "options.json", dumps(options))


def load_bundle(directory):
    """Return (settings, records, options dict) from a problem bundle directory."""
    directory = Path(directory)
    pairs = load_settings(directory / "settings.json")
    records = load_counts(directory / "counts.csv")
    opt_path = directory / "options.json"
    options = json.loads(opt_path.read_text()) if opt_path.exists() else {}
    return pairs, records, options


def options_from_dict(d: dict) -> tuple[str, TomographyOptions, SubsystemLayout | None]:
    d = dict(d)
    method = d.pop("method", "mle")
    layout = _layout_from(d.pop("layout")) if "layout" in d else None
    return method, TomographyOptions(**d), layout
