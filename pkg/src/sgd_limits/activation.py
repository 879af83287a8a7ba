"""
Activations with closed-form derivatives and their Gaussian Hermite analysis.

Hermite polynomials here are the orthonormal probabilists' ones,

    h_0 = 1,  h_1 = x,  h_{k+1} = (x h_k - sqrt(k) h_{k-1}) / sqrt(k + 1),

so that E[h_j(Z) h_k(Z)] = delta_jk for Z ~ N(0, 1).  The k-th Hermite
coefficient of f is a_k(f) = E[f(Z) h_k(Z)], and the information exponent is
the index of the first nonzero a_k with k >= 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, DegeneratePurifierError, ExponentScanError
from .quadrature import QuadratureRule, default_rule, expect_1d

__all__ = [
    "Activation",
    "HermiteCoefficients",
    "ScalarFunctionals",
    "hermite_poly",
    "hermite_table",
    "hermite_coeffs",
    "information_exponent",
    "purify",
    "scalar_functionals",
    "make_activation",
    "BUILTIN_LABELS",
]

HERMITE_MAX_DEGREE = 64
EXPONENT_SCAN_MAX = 16

Fn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Activation:
    """Scalar nonlinearity with first and second derivatives.

    All three callables are vectorised over numpy arrays.  ``bound`` is only
    meaningful when ``bounded`` is true and then satisfies |f| <= bound.
    """

    eval: Fn
    deriv1: Fn
    deriv2: Fn
    bounded: bool = False
    bound: float = math.inf
    label: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.eval(x)

    def __repr__(self) -> str:
        extra = f", params={self.params}" if self.params else ""
        return f"Activation({self.label!r}{extra})"


class HermiteCoefficients(NamedTuple):
    coefficients: np.ndarray
    K: int
    tail_mass: float
    norm_sq: float


class ScalarFunctionals(NamedTuple):
    norm_f_sq: float
    norm_fprime_sq: float
    inner_f_fpp: float
    a0: float


def _check_degree(k: int) -> None:
    if k < 0 or k > HERMITE_MAX_DEGREE:
        raise ConfigurationError(f"Hermite degree must lie in [0, {HERMITE_MAX_DEGREE}], got {k}")


def hermite_table(K: int, x) -> np.ndarray:
    """Rows h_0(x), ..., h_K(x) stacked along a new leading axis."""
    _check_degree(K)
    x = np.asarray(x, dtype=float)
    out = np.empty((K + 1,) + x.shape)
    out[0] = 1.0
    if K >= 1:
        out[1] = x
    for k in range(1, K):
        out[k + 1] = (x * out[k] - math.sqrt(k) * out[k - 1]) / math.sqrt(k + 1)
    return out


def hermite_poly(k: int, x):
    """Orthonormal probabilists' Hermite polynomial h_k evaluated at x."""
    _check_degree(k)
    val = hermite_table(k, x)[k]
    return float(val) if np.ndim(val) == 0 else val


def hermite_coeffs(f: Activation, K: int, rule: QuadratureRule | None = None) -> HermiteCoefficients:
    """Hermite coefficients a_0..a_K of ``f`` and the Bessel tail ||f||^2 - sum a_k^2."""
    rule = rule or default_rule()
    _check_degree(K)
    if rule.kind == "gauss-hermite" and rule.order < K + 10:
        raise ConfigurationError(f"Gauss-Hermite order {rule.order} too low for K={K}; need >= {K + 10}")
    fx = np.asarray(f.eval(rule.nodes), dtype=float)
    expect_1d(lambda x: fx, rule)  # finiteness check with node reporting
    H = hermite_table(K, rule.nodes)
    coeffs = H @ (rule.weights * fx)
    norm_sq = float(rule.weights @ fx**2)
    return HermiteCoefficients(coeffs, K, norm_sq - float(coeffs @ coeffs), norm_sq)


def information_exponent(f: Activation, tol: float = 1e-8, rule: QuadratureRule | None = None) -> int:
    """Smallest k >= 1 with |a_k(f)| > tol, scanning k <= 16."""
    if not tol > 0:
        raise ConfigurationError(f"tol must be positive, got {tol}")
    coeffs = hermite_coeffs(f, EXPONENT_SCAN_MAX, rule).coefficients
    for k in range(1, EXPONENT_SCAN_MAX + 1):
        if abs(coeffs[k]) > tol:
            return k
    raise ExponentScanError(
        f"information exponent of {f.label!r} exceeds scan range: "
        f"|a_k| <= {tol:g} for all 1 <= k <= {EXPONENT_SCAN_MAX}"
    )


def scalar_functionals(f: Activation, rule: QuadratureRule | None = None) -> ScalarFunctionals:
    """(||f||^2, ||f'||^2, <f, f''>, a_0) in L^2 of the standard Gaussian."""
    rule = rule or default_rule()
    return ScalarFunctionals(
        expect_1d(lambda x: f.eval(x) ** 2, rule),
        expect_1d(lambda x: f.deriv1(x) ** 2, rule),
        expect_1d(lambda x: f.eval(x) * f.deriv2(x), rule),
        expect_1d(f.eval, rule),
    )


def _is_odd(g: Activation) -> bool:
    x = np.linspace(0.0, 8.0, 161)
    scale = max(1.0, float(np.max(np.abs(g.eval(x)))))
    return bool(np.max(np.abs(g.eval(x) + g.eval(-x))) <= 1e-12 * scale)


def purify(g1: Activation, g2: Activation, rule: QuadratureRule | None = None) -> Activation:
    """Bounded odd activation g1 - c*g2 with vanishing first Hermite coefficient.

    ``c = a_1(g1) / a_1(g2)`` is computed with ``rule``, so a_1 of the result
    vanishes to roundoff under the same rule.  Oddness makes every even
    coefficient vanish too, hence the information exponent is at least 3.
    """
    rule = rule or default_rule()
    for g in (g1, g2):
        if not g.bounded:
            raise ConfigurationError(f"purify needs bounded components; {g.label!r} is unbounded")
        if not _is_odd(g):
            raise ConfigurationError(f"purify needs odd components; {g.label!r} is not odd")
    a1_g1 = expect_1d(lambda x: x * g1.eval(x), rule)
    a1_g2 = expect_1d(lambda x: x * g2.eval(x), rule)
    if abs(a1_g2) < 1e-10:
        raise DegeneratePurifierError(f"a_1({g2.label}) = {a1_g2:.3e} is too small to purify with")
    c = a1_g1 / a1_g2
    return Activation(
        eval=lambda x: g1.eval(x) - c * g2.eval(x),
        deriv1=lambda x: g1.deriv1(x) - c * g2.deriv1(x),
        deriv2=lambda x: g1.deriv2(x) - c * g2.deriv2(x),
        bounded=True,
        bound=g1.bound + abs(c) * g2.bound,
        label=f"purified({g1.label},{g2.label})",
        params={"g1": g1.label, "g2": g2.label, "c": c},
    )


# --- built-in catalog -------------------------------------------------------

_SQRT2 = math.sqrt(2.0)
_SQRT6 = math.sqrt(6.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _zeros(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def _ones(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _tanh1(x):
    t = np.tanh(x)
    return 1.0 - t * t


def _tanh2(x):
    t = np.tanh(x)
    return -2.0 * t * (1.0 - t * t)


def _erf0(x):
    return erf(np.asarray(x, dtype=float) / _SQRT2)


def _erf1(x):
    x = np.asarray(x, dtype=float)
    return _SQRT_2_OVER_PI * np.exp(-0.5 * x * x)


def _erf2(x):
    x = np.asarray(x, dtype=float)
    return -x * _SQRT_2_OVER_PI * np.exp(-0.5 * x * x)


def _basic(label: str) -> Activation:
    if label == "identity":
        return Activation(lambda x: np.asarray(x, dtype=float) * 1.0, _ones, _zeros, label="identity")
    if label == "h2":
        return Activation(lambda x: (np.asarray(x, dtype=float) ** 2 - 1.0) / _SQRT2,
                          lambda x: _SQRT2 * np.asarray(x, dtype=float),
                          lambda x: _SQRT2 * _ones(x), label="h2")
    if label == "h3":
        return Activation(lambda x: (np.asarray(x, dtype=float) ** 3 - 3.0 * np.asarray(x, dtype=float)) / _SQRT6,
                          lambda x: 3.0 * (np.asarray(x, dtype=float) ** 2 - 1.0) / _SQRT6,
                          lambda x: 6.0 * np.asarray(x, dtype=float) / _SQRT6, label="h3")
    if label == "tanh":
        return Activation(np.tanh, _tanh1, _tanh2, bounded=True, bound=1.0, label="tanh")
    if label == "erf":
        return Activation(_erf0, _erf1, _erf2, bounded=True, bound=1.0, label="erf")
    if label == "zero":
        return Activation(_zeros, _zeros, _zeros, bounded=True, bound=0.0, label="zero")
    raise ConfigurationError(f"unknown activation label {label!r}; expected one of {BUILTIN_LABELS}")


BUILTIN_LABELS = ("identity", "h2", "h3", "tanh", "erf", "zero", "purified")


def make_activation(label: str, rule: QuadratureRule | None = None, **params) -> Activation:
    """Built-in activation by label.

    ``"erf"`` is erf(x / sqrt(2)).  ``"purified"`` accepts ``g1`` and ``g2``
    component labels (defaults ``"tanh"`` and ``"erf"``); it is the canonical
    bounded activation with information exponent 3.
    """
    if label == "purified":
        unknown = set(params) - {"g1", "g2"}
        if unknown:
            raise ConfigurationError(f"unknown purified parameters {sorted(unknown)}")
        return purify(_basic(params.get("g1", "tanh")), _basic(params.get("g2", "erf")), rule)
    if params:
        raise ConfigurationError(f"activation {label!r} takes no parameters, got {sorted(params)}")
    return _basic(label)
