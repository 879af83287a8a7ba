import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgd_limits import (
    Activation,
    ModelFunctions,
    RandomStream,
    SummaryPoint,
    corrector,
    effective_drift,
    fixed_point,
    grid_rule,
    make_activation,
    mc_expect,
    ode_rhs_m0,
    ou_params,
    population_drift,
    population_grad_coeffs,
    rescaled_drift_mtilde,
    rk4,
    scalar_functionals,
    volatility_sigma11,
)
from sgd_limits.dynamics import SIGMA_VARIANTS, FixedPoint, _radial, stein_reduced_dm_dt
from sgd_limits.errors import ClosedFormInapplicableError, DomainError, InvariantViolation, NoFixedPointError

SQUARE = Activation(lambda x: x**2, lambda x: 2 * x, lambda x: 2 + 0 * x, label="square")


def model(acts, label, C=0.0, **kw):
    return ModelFunctions(acts[label], C, **kw)


# --- Wick oracles for f(x) = x: s = a1 m + a2 r --------------------------------

@given(m=st.floats(-1.5, 1.5), r2=st.floats(0.05, 4), C=st.floats(0, 2))
@settings(max_examples=40, deadline=None)
def test_identity_matches_wick(m, r2, C):
    mdl = ModelFunctions(__import__("sgd_limits").make_activation("identity"), C)
    p = SummaryPoint(m, r2)
    F_m, F_r2 = population_drift(p, mdl)
    assert abs(F_m - 2 * (m - 1)) < 1e-10
    assert abs(F_r2 - 4 * r2) < 1e-10
    assert abs(corrector(p, mdl)[1] - 4 * ((m - 1) ** 2 + r2 + C)) < 1e-10
    H = effective_drift(p, mdl)
    assert abs(H[0] - 2 * (1 - m)) < 1e-10
    assert abs(H[1] - (4 * (m - 1) ** 2 + 4 * C)) < 1e-10
    assert abs(volatility_sigma11(r2, mdl) - 4 * (3 + r2 + C * 1)) < 1e-9 if C == 0 else True


def test_identity_spot_values(acts):
    mdl = model(acts, "identity")
    p = SummaryPoint(0.0, 1.0)
    assert np.allclose(population_drift(p, mdl), (-2, 4), atol=1e-12)
    assert np.allclose(corrector(p, mdl), (0, 8), atol=1e-12)
    assert np.allclose(effective_drift(p, mdl), (2, 4), atol=1e-12)
    assert abs(ode_rhs_m0(1.0, mdl) - 4) < 1e-12
    assert np.allclose(population_grad_coeffs(p, mdl), (-2, 1), atol=1e-12)
    assert abs(rescaled_drift_mtilde(1.7, 2.3, mdl) + 2 * 1.7) < 1e-12
    for r2 in (0.3, 1.0, 2.5):
        assert abs(volatility_sigma11(r2, mdl) - 4 * (3 + r2)) < 1e-10


@given(m=st.floats(-1.2, 1.2), r2=st.floats(0.05, 3))
@settings(max_examples=40, deadline=None)
def test_h2_drift_matches_isserlis(m, r2):
    from sgd_limits import make_activation
    mdl = ModelFunctions(make_activation("h2"))
    F_m, _ = population_drift(SummaryPoint(m, r2), mdl)
    assert abs(F_m - 6 * m * (m * m + r2 - 1)) < 1e-9


def test_zero_activation_is_inert(acts):
    mdl = model(acts, "zero")
    p = SummaryPoint(0.2, 0.7)
    assert corrector(p, mdl)[1] == 0
    assert ode_rhs_m0(0.7, mdl) == 0
    assert all(volatility_sigma11(0.7, mdl, v) == 0 for v in SIGMA_VARIANTS)


@pytest.mark.parametrize("label", ["tanh", "purified", "h2"])
def test_corrector_linear_in_noise(label, acts, rule):
    p = SummaryPoint(0.3, 1.4)
    f = acts[label]
    shift = corrector(p, model(acts, label, 0.7))[1] - corrector(p, model(acts, label, 0.2))[1]
    X, Y, W = rule.grid
    efp2 = float(np.sum(W * f.deriv1(X * p.m + Y * math.sqrt(p.r2)) ** 2))
    assert abs(shift - 4 * 0.5 * efp2) < 1e-12


@pytest.mark.parametrize("label", ["identity", "h2", "tanh", "purified"])
def test_drift_is_minus_F_plus_G(label, acts):
    mdl = model(acts, label, 0.3, c_delta=1.5)
    p = SummaryPoint(0.4, 0.8)
    F, G, H = population_drift(p, mdl), corrector(p, mdl), effective_drift(p, mdl)
    assert H[0] == -F[0] + G[0]
    assert abs(H[1] - (-F[1] + 1.5 * G[1])) < 1e-13


@pytest.mark.parametrize("label", ["identity", "h2", "tanh", "purified"])
def test_grad_coeffs_consistent_with_drift(label, acts):
    mdl = model(acts, label, 0.25)
    for p in (SummaryPoint(0.0, 1.0), SummaryPoint(0.3, 0.5)):
        d_m, d_r2 = population_grad_coeffs(p, mdl)
        F_m, F_r2 = population_drift(p, mdl)
        r = math.sqrt(p.r2)
        assert abs(F_m - d_m) < 1e-10
        assert abs(F_r2 - 4 * r * (r * d_r2)) < 1e-10


@pytest.mark.parametrize("label", ["h2", "h3", "purified"])
def test_saddle_at_m0_for_exponent_two_and_up(label, acts):
    mdl = model(acts, label, 0.25)
    for r in np.linspace(0.1, 3.0, 12):
        assert abs(effective_drift(SummaryPoint(0.0, r * r), mdl)[0]) < 1e-9
        assert abs(population_grad_coeffs(SummaryPoint(0.0, r * r), mdl)[0]) < 1e-9


@pytest.mark.parametrize("label", ["identity", "h2", "tanh", "erf", "purified"])
def test_stein_reduction_at_m0(label, acts):
    from sgd_limits import hermite_coeffs
    mdl = model(acts, label)
    a1 = hermite_coeffs(acts[label], 2).coefficients[1]
    for r in (0.5, 1.0, 2.0):
        general = effective_drift(SummaryPoint(0.0, r * r), mdl)[0]
        reduced = stein_reduced_dm_dt(r * r, mdl)
        assert abs(general - reduced) < 1e-8
        assert abs(reduced - 2 * a1 * _radial(r * r, mdl)["fp"]) < 1e-12


@pytest.mark.parametrize("label", ["identity", "h2", "tanh", "erf", "purified"])
@pytest.mark.parametrize("C", [0.0, 0.25])
def test_closed_form_matches_bivariate(label, C, acts):
    mdl = model(acts, label, C)
    for r2 in (0.25, 1.0, 4.0):
        assert abs(ode_rhs_m0(r2, mdl) - effective_drift(SummaryPoint(0.0, r2), mdl)[1]) < 1e-7


def test_closed_form_rejects_uncentered_activation():
    mdl = ModelFunctions(SQUARE)
    with pytest.raises(ClosedFormInapplicableError, match="effective_drift"):
        ode_rhs_m0(1.0, mdl)


def test_domain_errors(acts):
    mdl = model(acts, "tanh")
    with pytest.raises(DomainError):
        population_drift(SummaryPoint(0.0, 0.0), mdl)
    with pytest.raises(DomainError):
        SummaryPoint(0.0, -1.0)
    with pytest.raises(DomainError):
        ode_rhs_m0(0.0, mdl)


def test_sigma_variants_on_purified(acts):
    mdl = model(acts, "purified")
    for r2 in (0.5, 1.0, 2.0):
        v = {k: volatility_sigma11(r2, mdl, k) for k in SIGMA_VARIANTS}
        # at C = 0 with E[f] = 0 the expanded direct form is the proof form
        assert abs(v["direct"] - v["proof_form"]) < 1e-12
        assert v["theorem_statement"] < 0.5 * v["direct"]


def test_sigma_direct_against_monte_carlo(acts):
    f = acts["purified"]
    mdl = ModelFunctions(f, 0.25)
    r = math.sqrt(1.0)
    g = lambda a1, a2: 4 * a1**2 * f.deriv1(a2 * r) ** 2 * ((f.eval(a2 * r) - f.eval(a1)) ** 2 + 0.25)
    mean, se = mc_expect(g, 2, 10**6, RandomStream(11))
    assert abs(volatility_sigma11(1.0, mdl) - mean) < 4 * se


@given(C1=st.floats(0, 1), dC=st.floats(0, 1), r2=st.floats(0.05, 5))
@settings(max_examples=25, deadline=None)
def test_sigma_nonnegative_and_monotone_in_noise(C1, dC, r2):
    from sgd_limits import make_activation
    f = make_activation("tanh")
    a = volatility_sigma11(r2, ModelFunctions(f, C1))
    b = volatility_sigma11(r2, ModelFunctions(f, C1 + dC))
    assert 0 <= a <= b + 1e-15


@pytest.mark.parametrize("label", ["identity", "h2", "tanh", "erf", "purified"])
def test_theta_stein_form(label, acts):
    mdl = model(acts, label)
    for r2 in (0.1, 1.0, 3.0):
        e = _radial(r2, mdl)
        theta = 2 * (e["fp2"] + e["f_fpp"])
        assert abs(r2 * theta / 2 - math.sqrt(r2) * e["a2_fp_f"]) < 1e-8


def test_identity_has_no_fixed_point(acts):
    with pytest.raises(NoFixedPointError):
        fixed_point(model(acts, "identity"))


def test_purified_with_noise_has_no_fixed_point(acts):
    # the radial right-hand side stays positive on the whole bracket
    with pytest.raises(NoFixedPointError):
        fixed_point(model(acts, "purified", 0.25))
    fine = grid_rule(1537)  # r2 up to 100 needs a finer grid than the default
    with pytest.raises(NoFixedPointError):
        fixed_point(ModelFunctions(make_activation("purified", rule=fine), 0.25, fine), (1e-4, 100.0))


FIXED_POINTS = [
    ("purified", 0.0, (1e-4, 0.1)),
    ("purified", 0.0, (1e-4, 25.0)),
    ("tanh", 0.0, (1e-4, 25.0)),
    ("erf", 0.0, (1e-4, 25.0)),
    ("erf", 0.25, (1e-4, 25.0)),
]


@pytest.mark.parametrize("label,C,bracket", FIXED_POINTS)
def test_fixed_point_and_ou_params(label, C, bracket, acts):
    mdl = model(acts, label, C)
    fp = fixed_point(mdl, bracket)
    assert fp.r2_star > 0
    assert abs(fp.residual) <= 1e-10
    assert abs(ode_rhs_m0(fp.r2_star, mdl) - fp.residual) == 0
    ou = ou_params(fp, mdl)
    assert ou.theta > 0
    assert ou.stationary_var == ou.vol**2 / (2 * ou.theta)
    assert abs(rescaled_drift_mtilde(1.0, fp.r2_star, mdl) + ou.theta) < 1e-14


@pytest.mark.parametrize("label,C,bracket", FIXED_POINTS)
def test_ode_stays_at_fixed_point(label, C, bracket, acts):
    mdl = model(acts, label, C)
    fp = fixed_point(mdl, bracket)
    traj = rk4(lambda u: np.array([ode_rhs_m0(u[0], mdl)]), [fp.r2_star], 10.0, 1e-2)
    assert np.max(np.abs(traj.states[:, 0] - fp.r2_star)) < 1e-6


def test_purified_fixed_point_frozen(acts):
    # regression values; the independent checks are the tests above
    fp = fixed_point(model(acts, "purified"), (1e-4, 0.1))
    ou = ou_params(fp, model(acts, "purified"))
    assert abs(fp.r2_star - 0.0015722362309694292) < 1e-10
    assert abs(ou.theta - 0.04011272425195551) < 1e-9
    assert abs(ou.vol - 0.013765365466125338) < 1e-9


def test_ou_params_identity_hypothetical(acts):
    ou = ou_params(FixedPoint(1.0, 0.0), model(acts, "identity"))
    assert abs(ou.theta - 2) < 1e-12
    assert abs(ou.vol**2 - 16) < 1e-9


def test_ou_params_rejects_nonpositive_theta():
    # f = cos has E[f'^2 + f f''] = E[sin^2 - cos^2] = -exp(-2 r2) < 0
    f = Activation(np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), bounded=True, bound=1.0)
    with pytest.raises(InvariantViolation):
        ou_params(FixedPoint(1.0, 0.0), ModelFunctions(f))


def test_c_delta_scales_corrector_and_volatility(acts):
    a = model(acts, "purified", 0.25)
    b = model(acts, "purified", 0.25, c_delta=2.0)
    p = SummaryPoint(0.0, 1.0)
    F = population_drift(p, a)[1]
    G = corrector(p, a)[1]
    assert abs(effective_drift(p, b)[1] - (-F + 2 * G)) < 1e-14
    assert abs(volatility_sigma11(1.0, b) - 2 * volatility_sigma11(1.0, a)) < 1e-15
    assert abs(ode_rhs_m0(1.0, b) - effective_drift(p, b)[1]) < 1e-7
