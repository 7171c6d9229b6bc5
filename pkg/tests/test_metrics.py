import numpy as np
import pytest

from hyperent.analyzers import AnalyzerSetting, EnergyTimeSetting, joint_projector
from hyperent.metrics import (
    MetricReport,
    concurrence,
    fidelity,
    linear_entropy,
    negativity,
    purity,
    report,
    schmidt_negativity,
    tangle,
    visibility,
)
from hyperent.qcore import DensityOperator, SubsystemLayout, tensor
from hyperent.source import FIG2_ALPHA, SourceConfig, build_hyper_state, expected_rate, make_named_state, maximally_entangled

from conftest import random_density, random_ket, two_qubit

PHI = np.array([1, 0, 0, 1]) / np.sqrt(2)


def werner(p):
    return two_qubit(p * np.outer(PHI, PHI) + (1 - p) * np.eye(4) / 4)


def test_tangle_examples(rng):
    assert abs(tangle(make_named_state("phi+_poln")) - 1) < 1e-12
    for _ in range(20):
        v = np.kron(random_ket(rng, 2), random_ket(rng, 2))
        assert tangle(two_qubit(np.outer(v, v.conj()))) < 1e-12
    assert abs(concurrence(werner(0.9)) - 0.85) < 1e-12
    assert abs(tangle(werner(0.9)) - 0.7225) < 1e-12
    assert tangle(werner(0.3)) == 0.0


def test_tangle_wrong_dimension():
    with pytest.raises(ValueError):
        tangle(np.eye(9) / 9)
    with pytest.raises(ValueError):
        tangle(DensityOperator(np.eye(4) / 4, SubsystemLayout.bipartite(4, 1)))


def test_tangle_pure_state_closed_form(rng):
    for _ in range(50):
        v = random_ket(rng, 4)
        c = 2 * abs(v[0] * v[3] - v[1] * v[2])
        assert abs(concurrence(two_qubit(np.outer(v, v.conj()))) - c) < 1e-7


def test_linear_entropy_examples(rng):
    for d in (2, 4, 36):
        v = random_ket(rng, d)
        assert abs(linear_entropy(np.outer(v, v.conj()))) < 1e-10
        assert abs(linear_entropy(np.eye(d) / d) - 1) < 1e-12
    # d = 4 reduces to 4/3 (1 - Tr rho^2)
    m = random_density(rng, 4)
    assert abs(linear_entropy(m) - 4 / 3 * (1 - np.trace(m @ m).real)) < 1e-12
    assert linear_entropy(np.eye(4) / 4) == 1.0


def test_linear_entropy_purity_identity(rng):
    for d in (2, 3, 4, 6, 16, 36):
        for _ in range(10):
            m = random_density(rng, d, rank=int(rng.integers(1, d + 1)))
            assert abs(linear_entropy(m) - d / (d - 1) * (1 - purity(m))) < 1e-14


def test_fidelity_examples(rng):
    for _ in range(10):
        m = random_density(rng, 4)
        assert abs(fidelity(m, m) - 1) < 1e-9
    h, v = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    assert fidelity(h, v) == 0.0
    with pytest.raises(ValueError):
        fidelity(np.eye(2) / 2, np.eye(3) / 3)


def test_fidelity_pure_target_shortcut():
    rng = np.random.default_rng(77)
    for _ in range(100):
        d = int(rng.choice([2, 4, 6]))
        rho = random_density(rng, d)
        psi = random_ket(rng, d)
        direct = np.real(np.vdot(psi, rho @ psi))
        assert abs(fidelity(rho, np.outer(psi, psi.conj())) - direct) < 1e-9


def test_fidelity_symmetric():
    rng = np.random.default_rng(78)
    for _ in range(100):
        d = int(rng.choice([2, 4, 9]))
        a = random_density(rng, d, rank=int(rng.integers(1, d + 1)))
        b = random_density(rng, d, rank=int(rng.integers(1, d + 1)))
        f = fidelity(a, b)
        assert 0 <= f <= 1
        assert abs(f - fidelity(b, a)) < 1e-9


def test_negativity_range_anchors():
    assert abs(negativity(maximally_entangled(6)) - 5) < 1e-9
    assert abs(negativity(make_named_state("phi+_poln")) - 1) < 1e-12
    assert abs(negativity(make_named_state("phi+_poln")) - np.sqrt(tangle(make_named_state("phi+_poln")))) < 1e-12


def test_negativity_fig2_fit():
    rho = make_named_state("fig2_fit")
    n = negativity(rho)
    assert abs(n - 4.44) < 0.01
    # pure-state oracle on the photon A | photon B split
    w, v = np.linalg.eigh(rho.matrix)
    psi = v[:, -1]
    assert abs(schmidt_negativity(psi, 6, 6) - n) < 1e-9
    assert abs(FIG2_ALPHA - 1.88 * np.exp(0.16j * np.pi)) < 1e-15


def test_negativity_separable_is_zero():
    rng = np.random.default_rng(3)
    for _ in range(50):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        a = DensityOperator(random_density(rng, da), SubsystemLayout((da,), ("A",)))
        b = DensityOperator(random_density(rng, db), SubsystemLayout((db,), ("B",)))
        assert abs(negativity(tensor(a, b))) < 1e-9


def test_negativity_is_sqrt_tangle_for_pure_two_qubit_states():
    rng = np.random.default_rng(4)
    for _ in range(100):
        v = random_ket(rng, 4)
        rho = two_qubit(np.outer(v, v.conj()))
        assert abs(negativity(rho) - np.sqrt(tangle(rho))) < 1e-8


def test_negativity_bare_matrix_needs_dims():
    with pytest.raises(ValueError):
        negativity(np.eye(4) / 4)
    assert abs(negativity(np.outer(PHI, PHI), dims=(2, 2)) - 1) < 1e-12
    assert abs(negativity(make_named_state("phi+_poln"), party="A") - 1) < 1e-12


def test_visibility_examples():
    ph = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    assert abs(visibility(list(zip(ph, 100 * (1 + np.cos(ph))))) - 1) < 1e-9
    assert visibility([(p, 50.0) for p in ph]) < 1e-12
    assert abs(visibility(list(zip(ph, 100 * (1 + 0.4 * np.cos(ph + 1.1))))) - 0.4) < 1e-12


def test_visibility_rejects_bad_fringes():
    with pytest.raises(ValueError):
        visibility([(0, 1), (1, 1), (2, 1)])
    with pytest.raises(ValueError):
        visibility([(0.0, 1), (0.1, 1), (0.2, 1), (0.3, 1)])
    ph = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    with pytest.raises(ValueError):
        visibility([(p, 0.0) for p in ph])


def test_visibility_end_to_end_from_source():
    rho = build_hyper_state(SourceConfig(visibility_et=0.985))
    cfg = SourceConfig(pair_rate=1000.0)
    fringe = []
    for d in np.linspace(0, 2 * np.pi, 12, endpoint=False):
        e = joint_projector(AnalyzerSetting(etime=EnergyTimeSetting(d)), AnalyzerSetting(etime=EnergyTimeSetting(0.0)), rho.layout)
        fringe.append((d, expected_rate(rho, e, cfg)))
    assert abs(visibility(fringe) - 0.985) < 1e-6


def test_metric_ranges_and_clamping():
    with pytest.raises(ValueError):
        fidelity(np.diag([1.1, -0.1]), np.eye(2) / 2)
    # eigenvalues just below zero are tolerated
    m = np.diag([1 + 5e-10, -5e-10])
    assert 0 <= fidelity(m, np.diag([1.0, 0.0])) <= 1


def test_report_fields():
    phi = make_named_state("phi+_poln")
    r = report(phi, phi)
    assert isinstance(r, MetricReport)
    assert abs(r.tangle - 1) < 1e-12 and abs(r.fidelity - 1) < 1e-9
    assert abs(r.negativity - 1) < 1e-12 and abs(r.linear_entropy) < 1e-12
    d = report(make_named_state("fig3a")).to_dict()
    assert "tangle" not in d and "fidelity" not in d
    assert abs(d["negativity"] - 3) < 1e-9
