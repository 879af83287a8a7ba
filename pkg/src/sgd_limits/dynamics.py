"""
Drift, corrector and volatility of the (m, r_perp^2) scaling limits.

Notation: a1, a2 are independent standard Gaussians, r = sqrt(r2) and the
student preactivation is s = a1*m + a2*r.  With the step size c_delta / N,
the ballistic limit of (m, r2) is

    dm/dt  = -F_m
    dr2/dt = -F_r2 + c_delta * G_r2

with population drift

    F_m  = 2 E[a1 f'(s) (f(s) - f(a1))]
    F_r2 = 4 r E[a2 f'(s) (f(s) - f(a1))]

and corrector G_r2 = 4 E[f'(s)^2 ((f(s) - f(a1))^2 + C_eps)].  Near m = 0 the
rescaled correlation m_tilde = sqrt(N) m follows a diffusion whose only
non-vanishing volatility entry is

    Sigma_11 = 4 c_delta E[a1^2 f'(a2 r)^2 ((f(a2 r) - f(a1))^2 + C_eps)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .activation import Activation, ScalarFunctionals, scalar_functionals
from .errors import (
    ClosedFormInapplicableError,
    ConfigurationError,
    DomainError,
    EvaluationError,
    InvariantViolation,
    NoFixedPointError,
)
from .quadrature import QuadratureRule, default_rule

__all__ = [
    "ModelFunctions",
    "SummaryPoint",
    "OUParams",
    "FixedPoint",
    "SIGMA_VARIANTS",
    "population_drift",
    "corrector",
    "effective_drift",
    "population_grad_coeffs",
    "stein_reduced_dm_dt",
    "ode_rhs_m0",
    "rescaled_drift_mtilde",
    "volatility_sigma11",
    "fixed_point",
    "ou_params",
]

SIGMA_VARIANTS = ("direct", "theorem_statement", "proof_form")
DEFAULT_BRACKET = (1e-4, 25.0)
A0_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ModelFunctions:
    """Activation, label-noise variance and quadrature rule of one model.

    ``noise_var`` is C_eps = E[eps^2].  ``c_delta`` scales the corrector and
    the volatility (step size c_delta / N).
    """

    activation: Activation
    noise_var: float = 0.0
    rule: QuadratureRule = field(default_factory=default_rule)
    c_delta: float = 1.0

    def __post_init__(self):
        if not (self.noise_var >= 0 and math.isfinite(self.noise_var)):
            raise ConfigurationError(f"noise variance must be finite and >= 0, got {self.noise_var}")
        if not self.c_delta > 0:
            raise ConfigurationError(f"c_delta must be positive, got {self.c_delta}")

    @cached_property
    def functionals(self) -> ScalarFunctionals:
        return scalar_functionals(self.activation, self.rule)

    @cached_property
    def second_moment_f(self) -> float:
        """E[a1^2 f(a1)^2]."""
        z, w = self.rule.nodes, self.rule.weights
        return float(w @ (z**2 * self.activation.eval(z) ** 2))

    @cached_property
    def _f_on_a1(self) -> np.ndarray:
        X, _, _ = self.rule.grid
        return np.asarray(self.activation.eval(X), dtype=float)

    def replace(self, **changes) -> "ModelFunctions":
        kw = dict(activation=self.activation, noise_var=self.noise_var, rule=self.rule, c_delta=self.c_delta)
        kw.update(changes)
        return ModelFunctions(**kw)


@dataclass(frozen=True)
class SummaryPoint:
    m: float
    r2: float
    m_tilde: float | None = None

    def __post_init__(self):
        if not self.r2 >= 0:
            raise DomainError(f"r2 must be nonnegative, got {self.r2}")


class OUParams(NamedTuple):
    theta: float
    vol: float
    stationary_var: float


class FixedPoint(NamedTuple):
    r2_star: float
    residual: float


class _Bivariate(NamedTuple):
    fp_diff_a1: float  # E[a1 f'(s)(f(s) - f(a1))]
    fp_diff_a2: float  # E[a2 f'(s)(f(s) - f(a1))]
    fp2_diff2: float  # E[f'(s)^2 (f(s) - f(a1))^2]
    fp2: float  # E[f'(s)^2]


def _require_positive_r2(r2: float) -> None:
    if not r2 > 0:
        raise DomainError(f"r2 must be positive, got {r2}")


def _bivariate(m: float, r2: float, mdl: ModelFunctions) -> _Bivariate:
    X, Y, W = mdl.rule.grid
    s = X * m + Y * math.sqrt(r2)
    f = mdl.activation
    fs = np.asarray(f.eval(s), dtype=float)
    fps = np.asarray(f.deriv1(s), dtype=float)
    diff = fs - mdl._f_on_a1
    core = fps * diff
    fps2 = fps * fps
    out = _Bivariate(
        float(np.sum(W * X * core)),
        float(np.sum(W * Y * core)),
        float(np.sum(W * fps2 * diff * diff)),
        float(np.sum(W * fps2)),
    )
    if not all(math.isfinite(v) for v in out):
        raise EvaluationError(f"non-finite bivariate expectation at m={m!r}, r2={r2!r}")
    return out


def _radial(r2: float, mdl: ModelFunctions) -> dict[str, float]:
    """One-dimensional expectations over u = a2 * r."""
    z, w = mdl.rule.nodes, mdl.rule.weights
    u = z * math.sqrt(r2)
    f = mdl.activation
    fu = np.asarray(f.eval(u), dtype=float)
    f1 = np.asarray(f.deriv1(u), dtype=float)
    f2 = np.asarray(f.deriv2(u), dtype=float)
    f1sq = f1 * f1
    out = {
        "fp2": float(w @ f1sq),
        "fp2_f2": float(w @ (f1sq * fu * fu)),
        "f_fpp": float(w @ (fu * f2)),
        "f2": float(w @ (fu * fu)),
        "fp": float(w @ f1),
        "fp2_f": float(w @ (f1sq * fu)),
        "a2_fp_f": float(w @ (z * f1 * fu)),
    }
    if not all(math.isfinite(v) for v in out.values()):
        raise EvaluationError(f"non-finite radial expectation at r2={r2!r}")
    return out


def population_drift(p: SummaryPoint, mdl: ModelFunctions) -> tuple[float, float]:
    """(F_m, F_r2) at the summary point ``p``."""
    _require_positive_r2(p.r2)
    b = _bivariate(p.m, p.r2, mdl)
    return 2.0 * b.fp_diff_a1, 4.0 * math.sqrt(p.r2) * b.fp_diff_a2


def corrector(p: SummaryPoint, mdl: ModelFunctions) -> tuple[float, float]:
    """(G_m, G_r2); G_m vanishes identically.  Not scaled by c_delta."""
    _require_positive_r2(p.r2)
    b = _bivariate(p.m, p.r2, mdl)
    return 0.0, 4.0 * (b.fp2_diff2 + mdl.noise_var * b.fp2)


def effective_drift(p: SummaryPoint, mdl: ModelFunctions) -> tuple[float, float]:
    """Right-hand side (-F_m + G_m, -F_r2 + c_delta * G_r2) of the ballistic ODE."""
    _require_positive_r2(p.r2)
    b = _bivariate(p.m, p.r2, mdl)
    F_m = 2.0 * b.fp_diff_a1
    F_r2 = 4.0 * math.sqrt(p.r2) * b.fp_diff_a2
    G_r2 = 4.0 * (b.fp2_diff2 + mdl.noise_var * b.fp2)
    return -F_m, -F_r2 + mdl.c_delta * G_r2


def population_grad_coeffs(p: SummaryPoint, mdl: ModelFunctions) -> tuple[float, float]:
    """Partial derivatives of the population loss in m and in r2."""
    _require_positive_r2(p.r2)
    b = _bivariate(p.m, p.r2, mdl)
    return 2.0 * b.fp_diff_a1, b.fp_diff_a2 / math.sqrt(p.r2)


def stein_reduced_dm_dt(r2: float, mdl: ModelFunctions) -> float:
    """dm/dt at m = 0 after Stein's lemma: 2 E[f'(a1)] E[f'(a2 r)]."""
    z, w = mdl.rule.nodes, mdl.rule.weights
    e1 = float(w @ mdl.activation.deriv1(z))
    return 2.0 * e1 * _radial(r2, mdl)["fp"]


def _check_centered(mdl: ModelFunctions) -> None:
    a0 = mdl.functionals.a0
    if abs(a0) > A0_TOL:
        raise ClosedFormInapplicableError(
            f"closed form at m=0 needs E[f(Z)] = 0 but a0 = {a0:.3e} for {mdl.activation.label!r}; "
            "use effective_drift instead"
        )


def ode_rhs_m0(r2: float, mdl: ModelFunctions) -> float:
    """Radial ODE right-hand side at m = 0 from one-dimensional expectations.

    At c_delta = 1 this is
        4 E[f'^2](C + ||f||^2 - r2) + 4 E[f'^2 f^2] - 4 r2 E[f'' f].
    """
    _require_positive_r2(r2)
    _check_centered(mdl)
    e = _radial(r2, mdl)
    F = 4.0 * r2 * (e["f_fpp"] + e["fp2"])
    G = 4.0 * e["fp2_f2"] + 4.0 * e["fp2"] * (mdl.functionals.norm_f_sq + mdl.noise_var)
    return -F + mdl.c_delta * G


def _rhs_m0_general(r2: float, mdl: ModelFunctions) -> float:
    try:
        return ode_rhs_m0(r2, mdl)
    except ClosedFormInapplicableError:
        return effective_drift(SummaryPoint(0.0, r2), mdl)[1]


def rescaled_drift_mtilde(m_tilde: float, r2: float, mdl: ModelFunctions) -> float:
    """Drift of m_tilde: -2 m_tilde E[f'(a2 r)^2 + f(a2 r) f''(a2 r)]."""
    _require_positive_r2(r2)
    e = _radial(r2, mdl)
    return -2.0 * m_tilde * (e["fp2"] + e["f_fpp"])


def volatility_sigma11(r2: float, mdl: ModelFunctions, variant: str = "direct") -> float:
    """Surviving volatility entry Sigma_11 of the m_tilde diffusion.

    ``direct`` integrates 4 E[a1^2 f'(a2 r)^2 ((f(a2 r) - f(a1))^2 + C)] on
    the tensor grid.  ``theorem_statement`` and ``proof_form`` are two
    printed closed forms, kept for comparison only:

        theorem_statement: 4 E[f'^2 f^2] + 4 E[f^2](||f||^2 + 2||f'||^2 + 2<f, f''>)
        proof_form:        4 E[f'^2 f^2] + 4 (E[f'^2] + C)(||f||^2 + 2||f'||^2 + 2<f, f''>)

    where the inner expectations are over f(a2 r).
    """
    if variant not in SIGMA_VARIANTS:
        raise ConfigurationError(f"unknown volatility variant {variant!r}; expected one of {SIGMA_VARIANTS}")
    if not r2 >= 0:
        raise DomainError(f"r2 must be nonnegative, got {r2}")
    if variant == "direct":
        X, Y, W = mdl.rule.grid
        u = Y * math.sqrt(r2)
        fu = np.asarray(mdl.activation.eval(u), dtype=float)
        f1 = np.asarray(mdl.activation.deriv1(u), dtype=float)
        diff = fu - mdl._f_on_a1
        val = 4.0 * float(np.sum(W * X * X * f1 * f1 * (diff * diff + mdl.noise_var)))
        if not math.isfinite(val):
            raise EvaluationError(f"non-finite volatility at r2={r2!r}")
        return mdl.c_delta * val
    e = _radial(r2, mdl)
    sf = mdl.functionals
    bracket = sf.norm_f_sq + 2.0 * sf.norm_fprime_sq + 2.0 * sf.inner_f_fpp
    if variant == "theorem_statement":
        val = 4.0 * e["fp2_f2"] + 4.0 * e["f2"] * bracket
    else:
        val = 4.0 * e["fp2_f2"] + 4.0 * (e["fp2"] + mdl.noise_var) * bracket
    return mdl.c_delta * val


def fixed_point(mdl: ModelFunctions, bracket: tuple[float, float] = DEFAULT_BRACKET,
                tol: float = 1e-10, max_iter: int = 200) -> FixedPoint:
    """Zero of the radial right-hand side at m = 0, by bisection.

    Uses the one-dimensional closed form when E[f] = 0 and the bivariate
    effective drift otherwise.
    """
    lo, hi = map(float, bracket)
    if not 0 < lo < hi:
        raise ConfigurationError(f"bracket must satisfy 0 < lo < hi, got {bracket}")
    f_lo = _rhs_m0_general(lo, mdl)
    f_hi = _rhs_m0_general(hi, mdl)
    if f_lo == 0.0:
        return FixedPoint(lo, 0.0)
    if f_hi == 0.0:
        return FixedPoint(hi, 0.0)
    if np.sign(f_lo) == np.sign(f_hi):
        raise NoFixedPointError(
            f"no fixed point bracketed in [{lo:g}, {hi:g}] for {mdl.activation.label!r} "
            f"(C_eps={mdl.noise_var:g}): rhs = {f_lo:.3e} and {f_hi:.3e}"
        )
    best = (lo, f_lo) if abs(f_lo) < abs(f_hi) else (hi, f_hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = _rhs_m0_general(mid, mdl)
        if abs(f_mid) < abs(best[1]):
            best = (mid, f_mid)
        if abs(f_mid) <= tol or mid in (lo, hi):
            break
        if np.sign(f_mid) == np.sign(f_lo):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    if abs(best[1]) > 1e-8:
        raise InvariantViolation(f"bisection stalled with residual {best[1]:.3e} at r2={best[0]:.6g}")
    return FixedPoint(*best)


def ou_params(fp: FixedPoint, mdl: ModelFunctions) -> OUParams:
    """Mean-reversion rate, volatility and stationary variance at a fixed point."""
    e = _radial(fp.r2_star, mdl)
    theta = 2.0 * (e["fp2"] + e["f_fpp"])
    if not theta > 0:
        raise InvariantViolation(
            f"mean-reversion rate theta = {theta:.3e} <= 0 at r2* = {fp.r2_star:g}; "
            "positivity is guaranteed at a fixed point"
        )
    vol = math.sqrt(volatility_sigma11(fp.r2_star, mdl, "direct"))
    return OUParams(theta, vol, vol * vol / (2.0 * theta))
