import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from sgd_limits import (
    ModelFunctions,
    RandomStream,
    SimConfig,
    SummaryPoint,
    Trajectory,
    effective_drift,
    empirical_moments,
    ks_test,
    localizability_diagnostics,
    rk4,
    run_ensemble,
    sup_deviation,
)
from sgd_limits.analysis import ScalingTable, kolmogorov_sf, ks_statistic
from sgd_limits.errors import ConfigurationError, DomainError


def traj(values, t_end=1.0):
    values = np.asarray(values, dtype=float)
    return Trajectory(np.linspace(0, t_end, len(values)), values, ("m", "r2")[: values.shape[1]])


def test_sup_deviation_trivial_cases():
    a = traj(np.column_stack([np.sin(np.linspace(0, 3, 50)), np.linspace(1, 2, 50)]))
    rep = sup_deviation(a, a, np.linspace(0, 1, 11))
    assert np.all(rep.deviation == 0) and np.all(rep.sup_deviation == 0)
    b = Trajectory(a.times, a.states + 0.25, a.labels)
    rep = sup_deviation(a, b, np.linspace(0, 1, 11), N=10, n_seeds=3)
    assert np.allclose(rep.sup_deviation, 0.25, atol=1e-15)
    assert rep.sup("r2") == rep.sup_deviation[1] == rep.deviation[:, 1].max()
    with pytest.raises(DomainError):
        sup_deviation(a, b, [0.0, 1.5])


arrays = st.lists(st.floats(-5, 5), min_size=5, max_size=5)


@given(x=arrays, y=arrays, z=arrays)
@settings(max_examples=50, deadline=None)
def test_sup_deviation_is_a_metric(x, y, z):
    a, b, c = (traj(np.array(v)[:, None]) for v in (x, y, z))
    grid = np.linspace(0, 1, 17)
    ab = sup_deviation(a, b, grid).sup_deviation[0]
    assert ab == sup_deviation(b, a, grid).sup_deviation[0]
    assert ab <= sup_deviation(a, c, grid).sup_deviation[0] + sup_deviation(c, b, grid).sup_deviation[0] + 1e-12


def test_deviation_report_csv(tmp_path):
    a = traj(np.column_stack([np.zeros(3), np.ones(3)]))
    rep = sup_deviation(a, Trajectory(a.times, a.states + 0.1, a.labels), a.times, N=64, n_seeds=2)
    rep.to_csv(tmp_path / "d.csv")
    rows = list(csv.reader(open(tmp_path / "d.csv")))
    assert rows[0] == ["t", "dev_m", "dev_r2", "N", "n_seeds"]
    assert len(rows) == 4 and rows[1][3:] == ["64", "2"]


def test_ks_statistic_small_cases():
    assert ks_statistic([0.5], lambda x: x) == 0.5
    n = 4
    q = np.arange(1, n + 1) / (n + 1)
    assert ks_statistic(q, lambda x: x) <= 2 / n
    with pytest.raises(ConfigurationError):
        ks_test(np.linspace(0, 1, 7), lambda x: x)


@pytest.mark.parametrize("lam", [0.2, 0.5, 0.83, 1.0, 1.36, 2.0, 3.5])
def test_kolmogorov_series_matches_scipy(lam):
    assert abs(kolmogorov_sf(lam) - special.kolmogorov(lam)) < 1e-11


def test_ks_matches_scipy_kstest():
    x = RandomStream(8).normal(500)
    D, p = ks_test(x, stats.norm.cdf)
    ref = stats.kstest(x, "norm", method="asymp")
    assert abs(D - ref.statistic) < 1e-14
    assert abs(p - special.kolmogorov(math.sqrt(500) * D)) < 1e-11


@given(a=st.floats(0.1, 10), b=st.floats(-10, 10))
@settings(max_examples=30, deadline=None)
def test_ks_invariant_under_increasing_affine_map(a, b):
    x = RandomStream(2).normal(50)
    D1, p1 = ks_test(x, stats.norm.cdf)
    D2, p2 = ks_test(a * x + b, lambda y: stats.norm.cdf((y - b) / a))
    assert abs(D1 - D2) < 1e-9 and abs(p1 - p2) < 1e-8


def test_ks_calibration():
    root = RandomStream(100)
    passes = sum(ks_test(root.substream(i).normal(10**4), stats.norm.cdf)[1] > 0.01 for i in range(100))
    assert passes >= 98


def test_empirical_moments():
    assert empirical_moments(np.full(10, 1.5), 4) == (1.5**4, 0.0)
    z = RandomStream(5).normal(10**6)
    for k, exact in ((2, 1.0), (4, 3.0), (8, 105.0)):
        m, se = empirical_moments(z, k)
        assert abs(m - exact) < 4 * se
    # the jackknife SE of a mean is the classical std/sqrt(n)
    y = RandomStream(6).normal(1000)
    m, se = empirical_moments(y, 2)
    assert abs(se - (y**2).std(ddof=1) / math.sqrt(1000)) < 1e-12
    with pytest.raises(ConfigurationError):
        empirical_moments(y, 3)


def test_localizability_zero_activation(acts):
    t = localizability_diagnostics(SimConfig(N=64), acts["zero"], [64, 128], 1000, RandomStream(0))
    assert np.all(t.values == 0) and np.all(t.std_err == 0)


def test_localizability_monotone_in_noise(acts):
    f = acts["purified"]
    cols = [localizability_diagnostics(SimConfig(N=64, noise_var=C), f, [64, 256], 2000, RandomStream(3)).values
            for C in (0.1, 0.2, 0.4, 0.8)]
    for lo, hi in zip(cols, cols[1:]):
        assert np.all(hi >= lo)
    assert np.all(cols[0] >= 0)


def test_localizability_validation(acts):
    with pytest.raises(ConfigurationError):
        localizability_diagnostics(SimConfig(N=64), acts["tanh"], [16], 100, RandomStream(0))
    with pytest.raises(ConfigurationError):
        localizability_diagnostics(SimConfig(N=64), acts["tanh"], [64], 101, RandomStream(0))


def test_localizability_bounded_columns(acts):
    t = localizability_diagnostics(SimConfig(N=128, noise_var=0.25), acts["purified"], [128, 256, 512],
                                   10**5, RandomStream(0))
    for c in ("grad8_over_N4", "grad_mtilde_4_over_N2"):
        assert np.all((0.4 <= t.ratios(c)) & (t.ratios(c) <= 2.5))
        assert not t.flags[c]


def test_scaling_table_flags_and_csv(tmp_path):
    t = ScalingTable((32, 64), np.array([[1.0, 1.0, 1.0], [2.0, 5.0, 0.2]]), np.zeros((2, 3)))
    assert t.flags == {"grad8_over_N4": False, "grad_r2_4_over_N2": True, "grad_mtilde_4_over_N2": True}
    t.to_csv(tmp_path / "s.csv")
    rows = list(csv.reader(open(tmp_path / "s.csv")))
    assert rows[0][:3] == ["N", "grad8_over_N4", "grad8_over_N4_se"] and rows[2][0] == "64"


@pytest.mark.slow
def test_deviation_rate_when_N_quadruples(acts):
    # empirical expectation of sqrt(N)-scale errors, not a theorem
    f = acts["purified"]
    mdl = ModelFunctions(f, 0.25)
    ode = rk4(lambda u: np.array(effective_drift(SummaryPoint(u[0], u[1]), mdl)), [0.0, 1.0], 5.0, 1e-2)
    sup = {}
    for N in (500, 2000):
        E = run_ensemble(SimConfig(N=N, t_end=5.0, noise_var=0.25), f, 400)
        sup[N] = sup_deviation(E.mean_trajectory(), ode, E.times).sup("r2")
    assert 1.4 <= sup[500] / sup[2000] <= 3
