import numpy as np
import pytest

from hyperent.analyzers import SPATIAL_KETS, joint_projector
from hyperent.bell import (
    CHSH_IDS,
    TSIRELSON,
    ChshSettings,
    bloch_ket,
    chsh_from_counts,
    chsh_from_state,
    chsh_setting_pairs,
    correlation_from_state,
    ket_bloch,
    optimal_chsh,
    perp,
    subspace_project,
)
from hyperent.qcore import DensityOperator, SubsystemLayout, partial_trace
from hyperent.source import (
    SourceConfig,
    bell_vector,
    build_hyper_state,
    expected_counts,
    make_named_state,
    simulate_counts,
    spatial_factor,
)

from conftest import random_density, random_ket, two_qubit

PHI = make_named_state("phi+_poln")


def counts_from_state(rho, settings, scale=1.0):
    """Noiseless expected counts for the 16 CHSH pairs, keyed by id pair."""
    pairs = chsh_setting_pairs(settings, "poln")
    m = rho.matrix if isinstance(rho, DensityOperator) else rho
    rho = DensityOperator(m, SubsystemLayout.photons(("poln",)))
    mu = expected_counts(rho, pairs, SourceConfig(pair_rate=scale), 1.0)
    return {p.key: m for p, m in zip(pairs, mu)}


def test_correlation_examples():
    h, v = np.array([1, 0]), np.array([0, 1])
    assert abs(correlation_from_state(PHI, h, h) - 1) < 1e-12
    assert abs(correlation_from_state(PHI, bloch_ket(0), bloch_ket(np.pi / 4)) - np.sqrt(2) / 2) < 1e-12
    assert abs(correlation_from_state(np.eye(4) / 4, h, bloch_ket(1.0, 0.3))) < 1e-15
    with pytest.raises(ValueError):
        correlation_from_state(np.zeros((4, 4)), h, v)
    with pytest.raises(ValueError):
        correlation_from_state(np.eye(9) / 9, h, v)


def test_chsh_canonical_is_tsirelson():
    assert abs(chsh_from_state(PHI, ChshSettings.canonical()).S - TSIRELSON) < 1e-9


def test_chsh_degenerate_settings_bounded():
    rng = np.random.default_rng(8)
    for _ in range(50):
        a, b, bp = (random_ket(rng, 2) for _ in range(3))
        assert chsh_from_state(PHI, ChshSettings(a, a, b, bp)).S <= 2 + 1e-12


def test_visibility_law_in_energy_time():
    for V in (1.0, 0.985, 0.7):
        rho = build_hyper_state(SourceConfig(visibility_et=V))
        et = partial_trace(rho, [rho.layout.index_of("A", "etime"), rho.layout.index_of("B", "etime")])
        opt = optimal_chsh(et)
        assert abs(opt.S_max - TSIRELSON * V) < 1e-9
    assert abs(TSIRELSON * 0.985 - 2.786) < 1e-3


def test_optimal_chsh_examples():
    assert abs(optimal_chsh(PHI).S_max - TSIRELSON) < 1e-12
    v = np.array([1.88, 0, 0, 1.0])
    v /= np.linalg.norm(v)
    opt = optimal_chsh(two_qubit(np.outer(v, v)))
    c = 2 * 1.88 / (1.88**2 + 1)
    assert abs(c - 0.8292) < 1e-4
    assert abs(opt.S_max - 2 * np.sqrt(1 + c**2)) < 1e-12
    assert abs(opt.S_max - 2.598) < 1e-3
    assert abs(opt.S_search - opt.S_max) < 1e-6
    mixed = optimal_chsh(np.eye(4) / 4)
    assert mixed.S_max == 0.0


def test_nonmax_pure_state_family():
    for th in np.linspace(0.05, np.pi / 4, 9):
        v = np.array([np.cos(th), 0, 0, np.sin(th)])
        opt = optimal_chsh(np.outer(v, v))
        assert abs(opt.S_max - 2 * np.sqrt(1 + np.sin(2 * th) ** 2)) < 1e-12


def test_optimal_settings_reproduce_bound_and_respect_tsirelson():
    rng = np.random.default_rng(11)
    for _ in range(200):
        rho = random_density(rng, 4, rank=int(rng.integers(1, 5)))
        opt = optimal_chsh(rho)
        assert opt.S_max <= TSIRELSON + 1e-9
        assert abs(chsh_from_state(rho, opt.settings).S - opt.S_max) < 1e-6


def test_optimal_chsh_deterministic():
    rng = np.random.default_rng(12)
    rho = random_density(rng, 4)
    a, b = optimal_chsh(rho), optimal_chsh(rho)
    assert a.S_search == b.S_search and a.restart == b.restart
    assert all(np.array_equal(x, y) for x, y in zip(a.settings.bloch().values(), b.settings.bloch().values()))


def test_settings_orthonormal_and_round_trip():
    s = ChshSettings.from_bloch((0.3, 0.1), (1.0, -2.0), (2.0, 0.5), (0.1, 0.0))
    for k in (s.a, s.a_prime, s.b, s.b_prime):
        assert abs(np.vdot(k, perp(k))) < 1e-12
        assert abs(np.linalg.norm(perp(k)) - 1) < 1e-12
    t = ChshSettings.from_dict(s.to_dict())
    for x, y in zip((s.a, s.a_prime, s.b, s.b_prime), (t.a, t.a_prime, t.b, t.b_prime)):
        assert np.array_equal(x, y)
    k = bloch_ket(0.7, 1.3)
    assert np.allclose(ket_bloch(k), [np.sin(0.7) * np.cos(1.3), np.sin(0.7) * np.sin(1.3), np.cos(0.7)])


def test_counts_noiseless_match_state():
    rng = np.random.default_rng(13)
    for _ in range(30):
        rho = two_qubit(random_density(rng, 4))
        settings = ChshSettings(*(random_ket(rng, 2) for _ in range(4)))
        r_counts = chsh_from_counts(counts_from_state(rho, settings, 1e6))
        r_state = chsh_from_state(rho, settings)
        assert abs(r_counts.S - r_state.S) < 1e-9


def test_counts_phi_plus_optimal():
    res = chsh_from_counts(counts_from_state(PHI, ChshSettings.canonical(), 4e4))
    assert abs(res.S - TSIRELSON) < 1e-9
    assert res.sigma is not None and res.sigma > 0
    # delta-method value for this configuration
    e = np.sqrt(2) / 2
    n = 4e4 * np.array([(1 + e) / 4, (1 + e) / 4, (1 - e) / 4, (1 - e) / 4])
    s = np.array([1, 1, -1, -1])
    var_e = np.sum((s - e) ** 2 * n) / n.sum() ** 2
    assert abs(res.sigma - np.sqrt(4 * var_e)) < 1e-12


def test_counts_all_equal_give_zero():
    counts = {(a, b): 100 for x in CHSH_IDS["A"] for a in x for y in CHSH_IDS["B"] for b in y}
    res = chsh_from_counts(counts)
    assert res.S == 0.0


def test_counts_missing_and_zero():
    counts = counts_from_state(PHI, ChshSettings.canonical(), 1e3)
    counts.pop(("a0", "b0"))
    with pytest.raises(KeyError):
        chsh_from_counts(counts)
    zero = {k: 0.0 for k in counts_from_state(PHI, ChshSettings.canonical(), 1e3)}
    with pytest.raises(ValueError):
        chsh_from_counts(zero)


def test_sigma_scales_as_inverse_sqrt_k():
    base = counts_from_state(two_qubit(np.eye(4) / 4 * 0.2 + 0.8 * PHI.matrix), ChshSettings.canonical(), 1e3)
    base = {k: float(np.round(v)) for k, v in base.items()}
    s1 = chsh_from_counts(base)
    for k in (2, 4, 9, 100, 12345):
        sk = chsh_from_counts({key: v * k for key, v in base.items()})
        assert sk.S == pytest.approx(s1.S, abs=1e-14)
        assert sk.sigma * np.sqrt(k) == pytest.approx(s1.sigma, rel=1e-12)


def test_simulated_counts_violate_by_many_sigma():
    pairs = chsh_setting_pairs(ChshSettings.canonical(), "poln")
    res = chsh_from_counts(simulate_counts(PHI, pairs, SourceConfig(pair_rate=4e4, seed=1), 1.0))
    assert res.violation_sigmas > 20


def test_setting_pairs_other_dofs():
    s = ChshSettings.canonical()
    assert len(chsh_setting_pairs(s, "spatial")) == 16
    with pytest.raises(ValueError):
        chsh_setting_pairs(s, "etime")  # canonical a is a pole, not equatorial
    eq = ChshSettings.from_bloch((np.pi / 2, 0), (np.pi / 2, np.pi / 2), (np.pi / 2, -np.pi / 4), (np.pi / 2, np.pi / 4))
    pairs = chsh_setting_pairs(eq, "etime")
    rho = make_named_state("phi+_te")
    mu = expected_counts(rho, pairs, SourceConfig(pair_rate=1.0), 1.0)
    res = chsh_from_counts({p.key: m for p, m in zip(pairs, mu)})
    assert abs(abs(res.S) - chsh_from_state(rho, eq).S * np.sign(res.S)) < 1e-12


def test_project_full_state_on_gg_gives_poln_phi_plus():
    rho = make_named_state("eq1_ideal")
    lay = rho.layout
    g = SPATIAL_KETS["g"]
    out = subspace_project(
        rho,
        project={lay.index_of("A", "spatial"): g, lay.index_of("B", "spatial"): g},
        trace=[lay.index_of("A", "etime"), lay.index_of("B", "etime")],
    )
    assert out.layout.dims == (2, 2)
    assert np.max(np.abs(out.matrix - PHI.matrix)) < 1e-12


def test_project_on_HH_leaves_spatial_factor():
    cfg = SourceConfig(alpha=0.6 - 0.3j)
    rho = build_hyper_state(cfg)
    lay = rho.layout
    h = np.array([1, 0])
    out = subspace_project(
        rho,
        project={lay.index_of("A", "poln"): h, lay.index_of("B", "poln"): h},
        trace=[lay.index_of("A", "etime"), lay.index_of("B", "etime")],
    )
    v = spatial_factor(cfg.alpha)
    assert np.max(np.abs(out.matrix - np.outer(v, v.conj()))) < 1e-12


def test_project_phi_spa_on_hh_keeps_poln():
    rho = build_hyper_state(SourceConfig(alpha=0.0))
    lay = rho.layout
    hh = SPATIAL_KETS["h"]
    out = subspace_project(
        rho,
        project={lay.index_of("A", "spatial"): hh, lay.index_of("B", "spatial"): hh},
        trace=[lay.index_of("A", "etime"), lay.index_of("B", "etime")],
    )
    # direct oracle: build the projected operator by hand
    P = np.kron(np.kron(np.kron(np.eye(2), hh.conj()[None, :]), np.eye(2)), np.kron(np.kron(np.eye(2), hh.conj()[None, :]), np.eye(2)))
    m = P @ rho.matrix @ P.conj().T
    m = m / np.trace(m)
    ref = partial_trace(DensityOperator(m, SubsystemLayout((2, 2, 2, 2), ("A", "A", "B", "B"))), [0, 2]).matrix
    assert np.allclose(out.matrix, ref, atol=1e-12)
    assert np.max(np.abs(out.matrix - PHI.matrix)) < 1e-12


def test_restrict_to_qubit_corner():
    rho = make_named_state("eq1_ideal")
    lay = rho.layout
    corner = np.stack([SPATIAL_KETS["g"], SPATIAL_KETS["r"]], axis=1)
    corner_b = np.stack([SPATIAL_KETS["g"], SPATIAL_KETS["l"]], axis=1)
    out = subspace_project(
        rho,
        project={lay.index_of("A", "poln"): np.array([1, 0]), lay.index_of("B", "poln"): np.array([1, 0])},
        restrict={lay.index_of("A", "spatial"): corner, lay.index_of("B", "spatial"): corner_b},
        trace=[lay.index_of("A", "etime"), lay.index_of("B", "etime")],
    )
    assert out.layout.dims == (2, 2)
    assert abs(optimal_chsh(out).S_max - TSIRELSON) < 1e-9


def test_project_vanishing_probability():
    rho = make_named_state("phi+_poln")
    with pytest.raises(ValueError):
        subspace_project(rho, project={0: np.array([1, 0])}, restrict={1: np.array([[0], [1]])})
    with pytest.raises(ValueError):
        subspace_project(rho, project={0: np.array([1, 0])}, trace=[0])


def test_bell_vector_sanity():
    assert np.allclose(bell_vector("psi-"), np.array([0, 1, -1, 0]) / np.sqrt(2))
