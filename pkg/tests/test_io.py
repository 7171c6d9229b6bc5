import json

import numpy as np
import pytest

from hyperent import io as hio
from hyperent.analyzers import STANDARD_SETTINGS, AnalyzerSetting, EnergyTimeSetting, SettingPair, SpatialSetting
from hyperent.qcore import DensityOperator, StateVector, SubsystemLayout
from hyperent.source import CountRecord, SourceConfig, build_hyper_state, make_named_state
from hyperent.tomography import TomographyOptions, canonical_set, noiseless_records, product_set

from conftest import random_density, random_ket


def test_state_round_trip_is_bit_exact(rng):
    for _ in range(10):
        m = random_density(rng, 36)
        rho = DensityOperator(m, SubsystemLayout.photons(("poln", "spatial")))
        back = hio.state_from_dict(json.loads(hio.dumps(hio.state_to_dict(rho))))
        assert np.array_equal(back.matrix, rho.matrix)
        assert back.layout == rho.layout
    v = StateVector(random_ket(rng, 6), SubsystemLayout.bipartite(2, 3))
    back = hio.state_from_dict(json.loads(hio.dumps(hio.state_to_dict(v))))
    assert np.array_equal(back.amplitudes, v.amplitudes)


def test_state_file_format(tmp_path):
    path = tmp_path / "phi.json"
    hio.save_state(path, make_named_state("phi+_poln"))
    d = json.loads(path.read_text())
    assert d["dims"] == [2, 2] and d["parties"] == ["A", "B"]
    assert abs(d["matrix"][0][0] - 0.5) < 1e-15 and d["matrix"][0][1] == 0.0
    assert len(d["matrix"]) == 16


def test_state_validation():
    with pytest.raises(ValueError):
        hio.state_from_dict({"dims": [2], "parties": ["A"], "matrix": [[1, 0]] * 3})
    with pytest.raises(ValueError):
        hio.state_from_dict({"dims": [2], "parties": ["A"]})
    with pytest.raises(ValueError):
        hio.state_from_dict({"dims": [2], "parties": ["A"], "matrix": [[1, 0], [0, 0], [0, 0], [1, 0]]})


def test_settings_round_trip(tmp_path):
    pairs = [
        SettingPair("x", "y", AnalyzerSetting(poln=STANDARD_SETTINGS["R"], spatial=SpatialSetting.named("h")), AnalyzerSetting(etime=EnergyTimeSetting(0.25))),
        SettingPair("k", "k", AnalyzerSetting(ket=np.array([0.6, 0.8j])), AnalyzerSetting(ket=np.array([1.0, 0.0]))),
    ]
    hio.save_settings(tmp_path / "s.json", pairs)
    back = hio.load_settings(tmp_path / "s.json")
    assert [p.key for p in back] == [p.key for p in pairs]
    assert back[0].a.poln == pairs[0].a.poln
    assert np.array_equal(back[0].a.spatial.ket, pairs[0].a.spatial.ket)
    assert back[0].b.etime == pairs[0].b.etime and back[0].b.poln is None
    assert np.array_equal(back[1].a.ket, pairs[1].a.ket)


def test_settings_validation():
    with pytest.raises(ValueError):
        hio.settings_from_list([{"id_a": "a", "id_b": "b", "a": {"bogus": 1}, "b": {"poln": None}}])
    one = {"id_a": "a", "id_b": "b", "a": {"poln": {"qwp": 0, "hwp": 0}}, "b": {"poln": {"qwp": 0, "hwp": 0}}}
    with pytest.raises(ValueError):
        hio.settings_from_list([one, one])
    with pytest.raises(ValueError):
        hio.settings_from_list([{**one, "a": {"poln": None, "spatial": None, "etime": None}}])


def test_counts_csv_round_trip(tmp_path):
    recs = [CountRecord("a", "b", 12, 0.1), CountRecord("a", "c", 0, 2.5)]
    hio.save_counts(tmp_path / "c.csv", recs)
    text = (tmp_path / "c.csv").read_text()
    assert text.splitlines()[0] == "setting_a,setting_b,counts,duration"
    back = hio.load_counts(tmp_path / "c.csv")
    assert [(r.key, r.counts, r.duration) for r in back] == [(r.key, r.counts, r.duration) for r in recs]


def test_counts_csv_validation():
    with pytest.raises(ValueError):
        hio.counts_from_csv("a,b,c,d\n")
    with pytest.raises(ValueError):
        hio.counts_from_csv("setting_a,setting_b,counts,duration\nx,y,1.5,1\n")
    with pytest.raises(ValueError):
        hio.counts_from_csv("setting_a,setting_b,counts,duration\nx,y,-1,1\n")


def test_config_with_tolerances(tmp_path):
    cfg = SourceConfig(visibility_et=0.985, alpha=1 + 2j)
    d = cfg.to_dict()
    d["tolerances"] = {"psd_floor": -1e-8}
    (tmp_path / "cfg.json").write_text(json.dumps(d))
    back, tol = hio.load_config(tmp_path / "cfg.json")
    assert back == cfg and tol == {"psd_floor": -1e-8}


def test_fringe_csv_round_trip():
    fr = [(0.1, 3.0), (1.7, 4.25)]
    assert hio.fringe_from_csv(hio.fringe_to_csv(fr)) == fr


def test_projector_set_from_settings_recovers_kets():
    ps = canonical_set(6)
    lay = SubsystemLayout.photons(("poln", "spatial"))
    back = hio.projector_set_from_settings(ps.settings(lay), hio.infer_layout(ps.settings(lay)))
    assert back.ids == ps.ids and np.allclose(back.kets, ps.kets)
    prod = product_set(("poln", "spatial"))
    pairs = prod.settings()
    lay2 = hio.infer_layout(pairs)
    assert lay2.dofs == ("poln", "spatial", "poln", "spatial")
    back = hio.projector_set_from_settings(pairs, lay2)
    assert np.allclose(np.abs(np.einsum("ij,ij->i", back.kets.conj(), prod.kets)), 1, atol=1e-9)


def test_projector_set_needs_full_coverage():
    ps = canonical_set(2)
    pairs = ps.settings()
    with pytest.raises(ValueError):
        hio.projector_set_from_settings(pairs[:-1], hio.infer_layout(pairs))


def test_bundle_round_trip(tmp_path):
    ps = canonical_set(2)
    phi = make_named_state("phi+_poln")
    recs = [CountRecord(r.setting_id_a, r.setting_id_b, int(round(r.counts)), r.duration) for r in noiseless_records(phi, ps, 1e3)]
    hio.save_bundle(tmp_path, ps.settings(), recs, {"method": "mle", "tolerance": 1e-9})
    pairs, back, opts = hio.load_bundle(tmp_path)
    assert len(pairs) == 16 and len(back) == 16
    method, options, layout = hio.options_from_dict(opts)
    assert method == "mle" and options == TomographyOptions(tolerance=1e-9) and layout is None
    with pytest.raises(TypeError):
        hio.options_from_dict({"bogus": 1})


def test_write_atomic_leaves_no_temp_files(tmp_path):
    hio.write_atomic(tmp_path / "x.txt", "hello")
    hio.write_atomic(tmp_path / "x.txt", "again")
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]
    assert (tmp_path / "x.txt").read_text() == "again"
