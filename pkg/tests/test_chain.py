import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from spindiff.chain import (
    PulseTrain,
    RateChain,
    evolve_free,
    evolve_pulse_train,
    gaussian_profile,
    profile_chain,
    rate_matrix,
    tau_sweep,
    uniform_chain,
)


def rhs(c: RateChain, rf: bool):
    """Box-by-box balance written out directly (independent of the matrix builder)."""
    m = c.m

    def f(_t, q):
        d = np.zeros(m)
        for i in range(m - 1):
            flow = c.gamma_fwd[i] * q[i]
            back = c.gamma_bwd[i] * q[i + 1] if i + 1 < m - 1 else 0.0
            d[i] += back - flow
            d[i + 1] += flow - back
        d -= c.beta * q
        if rf:
            d[c.k - 1] -= c.a_rf * q[c.k - 1]
        return d

    return f


def ode_pulse_train(c: RateChain, p: PulseTrain):
    q = c.q0.copy()
    opts = dict(method="LSODA", rtol=1e-11, atol=1e-14)
    for _ in range(p.n_pulses):
        q = solve_ivp(rhs(c, True), (0, p.tau_rf), q, **opts).y[:, -1]
        q = solve_ivp(rhs(c, False), (0, p.tau), q, **opts).y[:, -1]
    if p.remainder > 0:
        q = solve_ivp(rhs(c, False), (0, p.remainder), q, **opts).y[:, -1]
    return q


@pytest.mark.parametrize("seed", range(3))
def test_pulse_train_matches_ode_integration(seed):
    rng = np.random.default_rng(seed)
    m = 6
    c = RateChain(rng.uniform(50, 500, m - 1), rng.uniform(50, 500, m - 1), 3, 2e3, beta=rng.uniform(0, 5, m))
    p = PulseTrain(7e-3, 1e-3, 0.05)
    got = evolve_pulse_train(c, p).charges
    ref = ode_pulse_train(c, p)
    assert np.abs(got - ref).max() < 1e-8


def test_conservation_without_sinks():
    c = uniform_chain(40, 1e3, 20, 1e6)
    a = rate_matrix(c, 0)
    assert np.abs(a.sum(axis=0)).max() <= 1e-12 * 1e3
    q = evolve_free(c, 1.0)
    assert abs(q.sum() - 1.0) <= 1e-12
    assert np.all(q >= -1e-15)


def test_rf_removes_charge_and_keeps_it_non_negative():
    c = uniform_chain(10, 1e3, 5, 1e6)
    res = evolve_pulse_train(c, PulseTrain(1e-2, 1e-3, 0.2), trajectory=True)
    totals = res.trajectory.sum(axis=1)
    assert np.all(np.diff(totals) <= 1e-15)
    assert res.charges.sum() < 1
    assert np.all(res.charges >= -1e-15)
    # the trajectory stops after the last complete interval, before the remainder
    assert res.trajectory.shape == (19, 10)
    assert np.allclose(res.charges, evolve_pulse_train(c, PulseTrain(1e-2, 1e-3, 0.2)).charges, rtol=1e-10)


def test_last_box_is_absorbing():
    c = uniform_chain(4, 10.0, 2, 0.0)
    a = rate_matrix(c)
    assert a[2, 3] == 0.0 and a[3, 3] == 0.0
    assert evolve_free(c, 10.0)[-1] == pytest.approx(1.0, abs=1e-6)


def test_pulse_counting():
    p = PulseTrain(0.3, 0.1, 1.0)
    assert p.n_pulses == 2
    assert p.remainder == pytest.approx(0.2)
    assert PulseTrain(0.4, 0.1, 1.0).remainder == 0.0
    with pytest.raises(ValueError):
        PulseTrain(2.0, 1e-3, 1.0)
    with pytest.raises(ValueError):
        PulseTrain(-1.0)


def test_gaussian_profile_values():
    g = gaussian_profile(40, 10.0)
    assert g.size == 39
    assert g[14] == pytest.approx(10.0 + 1000.0)  # boundary 15 sits on the centre
    assert g[16] == pytest.approx(10.0 + 1000.0 * math.exp(-1.0))
    assert g[0] == pytest.approx(10.0, rel=1e-12)
    with pytest.raises(ValueError):
        gaussian_profile(40, 10.0, k0=50)
    assert profile_chain(40, 10.0, 15, 1e6).k == 15


def test_chain_validation():
    with pytest.raises(ValueError):
        RateChain(np.ones(3), np.ones(2), 1, 1.0)
    with pytest.raises(ValueError):
        RateChain(-np.ones(3), np.ones(3), 1, 1.0)
    with pytest.raises(ValueError):
        RateChain(np.ones(3), np.ones(3), 9, 1.0)
    with pytest.raises(ValueError):
        RateChain(np.ones(3), np.ones(3), 1, -1.0)
    assert uniform_chain(5, 1.0, 2, 1.0).with_rf_box(4).k == 4


def test_sweep_is_sigmoidal_and_worker_independent():
    c = uniform_chain(40, 1e3, 20, 1e6)
    taus = np.geomspace(1e-4, 0.1, 12)
    a = tau_sweep(c, taus, workers=1)
    b = tau_sweep(c, taus, workers=2)
    assert np.array_equal(a.q_rf, b.q_rf)
    assert a.fit is not None and not a.fit_error
    assert np.all(np.diff(a.normalized) > 0)  # sparser pulses remove less
    assert a.normalized[0] < 0.5 * a.normalized[-1]
    assert np.allclose(a.contrast, 1 - a.normalized)
