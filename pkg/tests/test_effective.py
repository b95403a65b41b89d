import math

import numpy as np
import pytest

from spindiff.effective import (
    CayleyTree,
    NetworkSpec,
    build_effective_pair,
    build_network,
    cayley_tree,
    compare_regime,
    coupling_estimate,
    delocalization_threshold,
    first_crossing,
    max_transfer,
    regime1,
    regime2,
    simulate_cayley,
)
from spindiff.evolution import exact_amplitudes, polarization_operator
from spindiff.spin_model import (
    FourSpinParams,
    NuclearXY,
    build_four_spin,
    product_state,
    project_subspace,
    rotate_hyperfine_frame,
    to_matrix,
)

TP = 2 * math.pi


def pair_splitting(block, e0):
    e = np.linalg.eigvalsh(block)
    near = np.sort(e[np.argsort(np.abs(e - e0))[:2]])
    return near[1] - near[0]


def test_small_jd_coupling_value():
    p = FourSpinParams.from_hz(40e6, 40e6, 9e6, 9e6, 1e6)
    r = regime1(p)
    # 4 wx1 wx4 J_d / (D12 D34) with wx = w_I / sqrt(2)
    expected = 4 * (p.omega_i**2 / 2) * p.jd / (p.delta12 * p.delta34)
    assert r.j_eff == pytest.approx(expected, rel=1e-14)
    assert r.j_eff / TP == pytest.approx(828.5, rel=1e-3)
    assert not r.hierarchy_ok  # J_d = 1 MHz is within a factor 2 of omega_I


def test_large_jd_coupling_value():
    p = FourSpinParams.from_hz(0, 1e6, 0, 0.75e6, 1e6)
    r = regime2(p)
    assert r.j_eff / TP == pytest.approx(187.5e3, rel=1e-12)
    assert r.bound_holds


@pytest.mark.parametrize("seed", range(10))
def test_small_jd_coupling_matches_exact_splitting(seed):
    # equal hyperfine norms remove the detuning; the residual splitting of
    # the resonant pair is then the effective flip-flop coupling
    rng = np.random.default_rng(seed)
    d = TP * rng.uniform(20e6, 60e6)
    ang = rng.uniform(0.3, 1.2)
    p = FourSpinParams(
        TP * rng.uniform(0.02e6, 0.1e6), TP * 1.4e9, d * math.cos(ang), d * math.sin(ang),
        d * math.cos(ang), d * math.sin(ang), d * rng.uniform(0.02, 0.05),
    )
    r = regime1(p)
    assert r.delta == pytest.approx(0.0, abs=1e-9 * r.j_eff)
    s = rotate_hyperfine_frame(build_four_spin(p))
    split = pair_splitting(project_subspace(to_matrix(s), s, 0).matrix, -(p.delta12 + p.delta34) / 4)
    assert split == pytest.approx(r.j_eff, rel=0.01)


@pytest.mark.parametrize("seed", range(10))
def test_large_jd_coupling_matches_exact_splitting(seed):
    rng = np.random.default_rng(50 + seed)
    a12, a34 = TP * rng.uniform(0.5e6, 1.5e6), TP * rng.uniform(0.5e6, 1.5e6)
    p = FourSpinParams(TP * 0.5e6, TP * 1.4e9, 0.0, a12, 0.0, a34, TP * rng.uniform(30e6, 60e6))
    r = regime2(p)
    assert r.delta < r.j_eff
    s = build_four_spin(p)
    split = pair_splitting(project_subspace(to_matrix(s), s, 0).matrix, p.jd / 2)
    assert split == pytest.approx(math.hypot(r.j_eff, r.delta), rel=0.01)


@pytest.mark.parametrize("ratio", [0.5, 1.0, 1.5, 2.0, 1 + math.sqrt(2)])
def test_large_jd_bound_inside_valid_ratio(ratio):
    p = FourSpinParams.from_hz(0, 1e6, 0, ratio * 1e6, 20e6)
    assert regime2(p).bound_holds


def test_large_jd_bound_fails_for_strong_mismatch():
    p = FourSpinParams.from_hz(0, 1e6, 0, 3e6, 20e6)
    assert not regime2(p).bound_holds


def test_regime_inputs_validated():
    with pytest.raises(ValueError):
        regime1(FourSpinParams.from_hz(0, 0, 1e6, 1e6, 1e6))
    with pytest.raises(ValueError):
        regime2(FourSpinParams.from_hz(0, 1e6, 0, 1e6, 0))


def test_coupling_estimate_value():
    assert coupling_estimate(TP * 10e6, TP * 1e6, TP * 0.56e6) / TP == pytest.approx(1568.0, rel=1e-12)
    with pytest.raises(ValueError):
        coupling_estimate(0, 1, 1)


def test_threshold_forms():
    th = delocalization_threshold(10.0, 2.0, 0.5)
    assert th.mismatch_form == pytest.approx(0.5 * 10 * 2 / 96)
    assert th.perturbative_form == pytest.approx(0.5 * 10 * 2 / 99)
    assert th.ratio >= 1
    assert delocalization_threshold(10.0, 0.0, 0.5).ratio == 1.0
    with pytest.raises(ValueError):
        delocalization_threshold(1.0, 2.0, 0.5)


def test_max_transfer_formula():
    assert max_transfer(0.0, 1.0) == 1.0
    assert max_transfer(1.0, 1.0) == 0.5
    assert max_transfer(0.0, 0.0) == 0.0


def test_effective_pair_swaps_polarization_at_half_period():
    p = FourSpinParams.from_hz(40e6, 40e6, 40e6, 40e6, 5e6)
    r = regime1(p)
    pair = build_effective_pair(r)
    t = np.array([0.0, math.pi / r.j_eff])
    amp = exact_amplitudes(pair, product_state(2, "ud"), t)
    pol = np.abs(amp) ** 2 @ polarization_operator(2, [0])
    assert pol[-1] == pytest.approx(-1.0, abs=1e-10)


def test_comparison_tracks_exact_in_deep_regime():
    p = FourSpinParams.from_hz(40e6, 40e6, 9e6, 9e6, 5e6)
    t = np.linspace(0, 300e-6, 601)
    cmp = compare_regime(p, 1, t)
    assert cmp.max_exact_transfer > 0.9
    assert cmp.rms < 0.2


def test_network_table_symmetry():
    NetworkSpec(3, couplings=((0, 1, 1.0, 2.0), (1, 0, 1.0, 2.0)))
    with pytest.raises(ValueError):
        NetworkSpec(3, couplings=((0, 1, 1.0, 2.0), (1, 0, 1.0, 3.0)))
    with pytest.raises(ValueError):
        NetworkSpec(3, couplings=((1, 1, 1.0, 2.0),))
    with pytest.raises(ValueError):
        NetworkSpec(3, fields=(1.0,))


def test_network_builds_terms():
    s = build_network(NetworkSpec(3, fields=(1.0, 0.0, 2.0), couplings=((0, 2, 0.5, 0.25),)))
    assert s.n_sites == 3
    assert any(isinstance(t, NuclearXY) and t.jxy == 0.25 for t in s.terms)


def test_tree_geometry():
    tree = cayley_tree((1, 3, 6, 12))
    assert tree.n_sites == 22
    assert len(tree.edges) == 21
    degree = np.zeros(22, int)
    for i, j, _ in tree.edges:
        degree[i] += 1
        degree[j] += 1
    assert degree[0] == 3 and all(degree[1:10] == 3) and all(degree[10:] == 1)
    assert [c for *_, c in tree.edges[:3]] == [1e3] * 3
    assert cayley_tree((1, 3), (1.0,), units="hz").couplings[0] == pytest.approx(TP)
    with pytest.raises(ValueError):
        CayleyTree((1, 3, 5), (1.0, 1.0))
    with pytest.raises(ValueError):
        cayley_tree((1, 3), (1.0,), units="mhz")


def test_first_crossing_interpolates():
    t = np.array([0.0, 1.0, 2.0])
    assert first_crossing(t, np.array([1.0, 0.5, 0.0]), 0.25) == pytest.approx(1.5)
    assert first_crossing(t, np.ones(3), 0.5) == math.inf


def test_small_tree_engines_agree_and_conserve():
    tree = cayley_tree((1, 3), (1e3,))
    t = np.linspace(0, 3e-3, 7)
    a = simulate_cayley(tree, t, n_states=3, seed=1, engine="exact")
    b = simulate_cayley(tree, t, n_states=3, seed=1, engine="ts4", dt=1e-5)
    assert np.abs(a.series.values - b.series.values).max() < 1e-6
    assert np.abs(a.total - a.total[0]).max() < 1e-10
    assert a.series.values[0, 0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        simulate_cayley(tree, t, engine="magic")
