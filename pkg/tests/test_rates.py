import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference as ref
from tcljump import models, oracle, rates
from tcljump.errors import ModelError, QuadratureError, RateDivergenceError
from tcljump.models import BandGap, Custom, DetunedJC, ResonantJC

FIG1 = ResonantJC(1.0, 5.0)
FIG3 = DetunedJC(1.0, 0.3, 2.4)
T = np.linspace(0, 10, 1001)


def test_markov_rates():
    assert rates.markov_rate(FIG1) == (1.0, 0.0)
    g, s = rates.markov_rate(FIG3)
    assert g == pytest.approx(1 / 65, rel=1e-14)
    assert round(g, 3) == 0.015
    assert s == pytest.approx(8 / 65, rel=1e-14)
    assert rates.markov_rate(BandGap()).gamma == pytest.approx(0.04, rel=1e-12)


def test_markov_custom():
    h = 0.01
    t = h * np.arange(10001)
    phi, psi = models.correlation(FIG3, t)
    g, s = rates.markov_rate(Custom(h, phi, psi))
    assert g == pytest.approx(1 / 65, abs=1e-5)
    assert s == pytest.approx(8 / 65, abs=1e-5)
    with pytest.raises(ModelError):
        rates.markov_rate(Custom(h, phi[:100], psi[:100]))


def test_tcl2_values():
    assert rates.tcl2_rate(FIG1, 0.0) == (0.0, 0.0)
    assert rates.tcl2_rate(FIG1, 0.2).gamma == pytest.approx(1 - np.exp(-1), rel=1e-14)
    assert rates.tcl2_rate(FIG1, 10.0).gamma == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(rates.tcl2_rate(FIG1, T).gamma, ref.gamma2_resonant(1, 5, T), rtol=1e-12)


@pytest.mark.parametrize("m", [FIG3, BandGap()])
def test_tcl2_tends_to_markov(m):
    g, s = rates.tcl2_rate(m, 60.0)
    gm, sm = rates.markov_rate(m)
    assert abs(g - gm) <= 1e-6 and abs(s - sm) <= 1e-6


def test_tcl2_custom_matches_closed_form():
    h = 1e-3
    t = h * np.arange(10001)
    phi, psi = models.correlation(FIG3, t)
    c = Custom(h, phi, psi)
    pts = np.array([0.0, 0.1234, 1.0, 5.5, 10.0])
    ours, exact = rates.tcl2_rate(c, pts), rates.tcl2_rate(FIG3, pts)
    np.testing.assert_allclose(ours.gamma, exact.gamma, atol=1e-7)
    np.testing.assert_allclose(ours.shift, exact.shift, atol=1e-7)


def test_tcl4_resonant_closed_form():
    assert rates.tcl4_rate(FIG1, 0.0) == (0.0, 0.0)
    ours = rates.tcl4_rate(FIG1, T).gamma
    indep = ref.gamma4_resonant(1, 5, T)
    assert np.max(np.abs(ours - indep)) <= 1e-12 * np.max(np.abs(indep))
    assert rates.asymptotic_rate(FIG1, "tcl4").gamma == pytest.approx(1.1, abs=1e-12)
    # large times must not overflow
    assert rates.tcl4_rate(FIG1, 500.0).gamma == pytest.approx(1.1)


@pytest.mark.parametrize("m", [FIG3, DetunedJC(0.7, 1.3, 0.4), DetunedJC(1.0, 0.5, -3.0)])
def test_tcl4_detuned_matches_printed_formulas(m):
    ours = rates.tcl4_rate(m, T)
    g = ref.gamma4_detuned(m.gamma0, m.lam, m.delta, T)
    s = ref.s4_detuned(m.gamma0, m.lam, m.delta, T)
    assert np.max(np.abs(ours.gamma - g)) <= 1e-10 * np.max(np.abs(g))
    assert np.max(np.abs(ours.shift - s)) <= 1e-10 * np.max(np.abs(s))


def test_detuned_rate_goes_negative():
    g = rates.tcl4_rate(FIG3, T).gamma
    assert g.min() < -0.05
    assert rates.tcl4_rate(FIG3, 2.0).gamma < 0


def test_detuned_formulas_continuous_at_zero_detuning():
    for method in (rates.tcl2_rate, rates.tcl4_rate):
        near = method(DetunedJC(1.0, 5.0, 1e-7), T)
        res = method(FIG1, T)
        np.testing.assert_allclose(near.gamma, res.gamma, atol=1e-9)
        np.testing.assert_allclose(near.shift, 0.0, atol=1e-6)


@pytest.mark.parametrize("method", list(rates.RateMethod))
def test_zero_detuning_equals_resonant(method):
    a = rates.evaluate(DetunedJC(1.0, 5.0, 0.0), method, T)
    b = rates.evaluate(FIG1, method, T)
    np.testing.assert_array_equal(a.gamma, b.gamma)
    np.testing.assert_array_equal(a.shift, b.shift)


@pytest.mark.parametrize("m", [FIG1, FIG3])
def test_quadrature_matches_closed_forms(m):
    t = np.linspace(0, 10, 21)
    q = rates.tcl4_quadrature(m, t)
    c = rates.tcl4_rate(m, t)
    assert np.max(np.abs(q.gamma - c.gamma)) <= 1e-3 * np.max(np.abs(c.gamma))
    if np.any(c.shift):
        assert np.max(np.abs(q.shift - c.shift)) <= 1e-3 * np.max(np.abs(c.shift))


def test_quadrature_cap():
    with pytest.raises(QuadratureError):
        rates.tcl4_quadrature(FIG3, 10.0, rtol=1e-12, n_max=256)


def test_band_gap_table_route_matches_quadrature():
    t = np.linspace(0, 10, 11)
    q = rates.tcl4_quadrature(BandGap(), t)
    fn = rates.rate_function(BandGap(), "tcl4", horizon=10.0)
    tab = fn(t)
    assert np.max(np.abs(tab.gamma - q.gamma)) <= 1e-3 * np.max(np.abs(q.gamma))
    assert rates.tcl4_rate(BandGap(), 3.0).gamma == pytest.approx(fn(3.0).gamma, rel=1e-3)


@given(st.floats(0.01, 10), st.floats(0.05, 20), st.floats(0, 20))
@settings(max_examples=60)
def test_taylor_property(g0, lam, t):
    m = ResonantJC(g0, lam)
    diff = rates.tcl4_rate(m, t).gamma - rates.tcl2_rate(m, t).gamma
    assert diff >= -1e-15 * g0


def test_order_consistency():
    lam, t = 1.0, np.array([0.5, 2.0, 10.0])
    ratios = []
    for g0 in (1e-2, 1e-3):
        m = ResonantJC(g0, lam)
        ratios.append((rates.tcl4_rate(m, t).gamma - rates.tcl2_rate(m, t).gamma) / g0**2)
    np.testing.assert_allclose(ratios[0], ratios[1], rtol=1e-9)
    assert np.all(np.abs(ratios[0]) < 10)


def test_exact_rate_resonant():
    assert rates.exact_rate(FIG1, 0.0) == (0.0, 0.0)
    assert rates.asymptotic_rate(FIG1, "exact", 30.0).gamma == pytest.approx(10 / (5 + np.sqrt(15)), rel=1e-12)
    np.testing.assert_allclose(rates.exact_rate(FIG1, T).gamma, ref.exact_rate_resonant(1, 5, T), rtol=1e-12)
    crit = ResonantJC(1.0, 2.0)  # d = 0
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(rates.exact_rate(crit, t).gamma, 4 * t / (2 + 2 * t) * 1.0, rtol=1e-12)


def test_exact_rate_divergence():
    strong = ResonantJC(1.0, 0.2)
    t0 = oracle.zero_crossing_time(strong)
    assert rates.exact_rate(strong, 0.9 * t0).gamma > 0
    for t in (t0, t0 + 1.0):
        with pytest.raises(RateDivergenceError) as err:
            rates.exact_rate(strong, t)
        assert err.value.time == pytest.approx(t0)


def test_exact_rate_pole_models_match_log_derivative():
    for m in (FIG3, BandGap()):
        t = np.linspace(0.5, 9.5, 10)
        g, s = rates.exact_rate(m, t)
        h = 1e-5
        c_p = oracle.pseudomode_state(m, t + h)[:, 0]
        c_m = oracle.pseudomode_state(m, t - h)[:, 0]
        c = oracle.pseudomode_state(m, t)[:, 0]
        fd = -2 * (c_p - c_m) / (2 * h) / c
        np.testing.assert_allclose(g, fd.real, rtol=1e-6, atol=1e-9)
        np.testing.assert_allclose(s, fd.imag, rtol=1e-6, atol=1e-9)


def test_exact_rate_unsupported():
    with pytest.raises(ModelError):
        rates.exact_rate(Custom(0.1, [1, 0], [0, 0]), 0.05)


def test_gme_rate():
    assert rates.gme_rate(FIG1, 0.0) == (0.0, 0.0)
    limit = 10 / (5 + np.sqrt(5))
    assert rates.asymptotic_rate(FIG1, "gme", horizon=30.0).gamma == pytest.approx(limit, rel=1e-12)
    assert rates.asymptotic_rate(FIG1, "gme").gamma == pytest.approx(limit, rel=1e-9)
    np.testing.assert_allclose(rates.gme_rate(FIG1, T).gamma, ref.gme_rate_resonant(1, 5, T), rtol=1e-12)
    g, e = rates.gme_rate(FIG1, 0.2).gamma, rates.exact_rate(FIG1, 0.2).gamma
    assert abs(g - e) <= 0.1 * e
    with pytest.raises(ModelError):
        rates.gme_rate(FIG3, 1.0)
    strong = ResonantJC(1.0, 0.2)
    with pytest.raises(RateDivergenceError):
        rates.gme_rate(strong, 5.0)


def test_asymptotic_ordering():
    vals = [rates.asymptotic_rate(FIG1, m).gamma for m in ("markov", "tcl4", "exact", "gme")]
    assert vals == sorted(vals)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        rates.tcl2_rate(FIG1, -1.0)


def test_rate_table_csv(tmp_path):
    strong = ResonantJC(1.0, 0.2)
    tab = rates.rate_table(strong, "exact", np.linspace(0, 10, 101))
    assert tab.truncated_at == pytest.approx(oracle.zero_crossing_time(strong))
    assert tab.t[-1] < tab.truncated_at
    path = tmp_path / "r.csv"
    tab.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# time unit: 1/gamma0"
    assert lines[2] == "t,gamma,shift,method,model-id"
    assert lines[3].endswith('exact,"resonant_jc(gamma0=1,lambda=0.2)"')
    full = rates.rate_table(FIG3, "tcl4", T)
    assert full.truncated_at is None and full.t.size == T.size


def test_rate_function_horizon():
    fn = rates.rate_function(BandGap(), "tcl4", horizon=2.0)
    with pytest.raises(ValueError):
        fn(3.0)
    fn = rates.rate_function(ResonantJC(1.0, 0.2), "exact", horizon=20.0)
    assert fn.divergence == pytest.approx(6.3085, abs=1e-4)
    with pytest.raises(RateDivergenceError):
        fn(7.0)
