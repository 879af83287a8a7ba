"""
Convergence and goodness-of-fit diagnostics.

* ``sup_deviation``: sup-norm distance between two trajectories on a grid.
* ``ks_test``: one-sample Kolmogorov-Smirnov test, p-value from the
  asymptotic Kolmogorov series.
* ``empirical_moments``: raw moments with jackknife standard errors.
* ``localizability_diagnostics``: Monte Carlo moments of the gradient noise
  H = L - Phi at a fixed summary point, normalised by the powers of N that
  keep them bounded.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .activation import Activation
from .dynamics import ModelFunctions, SummaryPoint, population_grad_coeffs
from .errors import ConfigurationError
from .integrators import Trajectory
from .quadrature import RandomStream
from .sgd import SimConfig

__all__ = [
    "DeviationReport",
    "ScalingTable",
    "sup_deviation",
    "ks_statistic",
    "kolmogorov_sf",
    "ks_test",
    "empirical_moments",
    "localizability_diagnostics",
    "SCALING_COLUMNS",
]


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@dataclass(frozen=True, eq=False)
class DeviationReport:
    grid: np.ndarray
    deviation: np.ndarray  # (len(grid), dim)
    sup_deviation: np.ndarray  # (dim,)
    labels: tuple[str, ...]
    N: int | None = None
    n_seeds: int | None = None

    def sup(self, label: str) -> float:
        return float(self.sup_deviation[self.labels.index(label)])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t"] + [f"dev_{l}" for l in self.labels] + ["N", "n_seeds"])
            for t, row in zip(self.grid, self.deviation):
                w.writerow([_fmt(t)] + [_fmt(v) for v in row] + [_fmt(self.N), _fmt(self.n_seeds)])


def sup_deviation(ensemble_mean: Trajectory, reference: Trajectory, grid: Sequence[float],
                  N: int | None = None, n_seeds: int | None = None) -> DeviationReport:
    """Per-coordinate |a(t) - b(t)| on ``grid`` after linear interpolation, and its max."""
    if ensemble_mean.dim != reference.dim:
        raise ConfigurationError("trajectories have different dimensions")
    grid = np.asarray(grid, dtype=float)
    dev = np.abs(ensemble_mean.interpolate(grid) - reference.interpolate(grid))
    return DeviationReport(grid, dev, dev.max(axis=0), ensemble_mean.labels, N, n_seeds)


def ks_statistic(samples, cdf: Callable) -> float:
    """D = max_i max(i/n - F(x_(i)), F(x_(i)) - (i-1)/n)."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def kolmogorov_sf(lam: float) -> float:
    """P(sqrt(n) D > lam) in the limit: 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lam^2)."""
    if lam <= 0:
        return 1.0
    total = 0.0
    k = 1
    while k < 100_000:
        term = math.exp(-2.0 * k * k * lam * lam)
        total += term if k % 2 else -term
        if term < 1e-12:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * total))


def ks_test(samples, cdf: Callable) -> tuple[float, float]:
    """One-sample KS statistic and asymptotic p-value; needs at least 8 samples."""
    n = np.asarray(samples).size
    if n < 8:
        raise ConfigurationError(f"ks_test needs at least 8 samples, got {n}")
    D = ks_statistic(samples, cdf)
    return D, kolmogorov_sf(math.sqrt(n) * D)


def empirical_moments(samples, k: int) -> tuple[float, float]:
    """k-th raw moment and its jackknife standard error, k in {2, 4, 8}."""
    if k not in (2, 4, 8):
        raise ConfigurationError(f"k must be 2, 4 or 8, got {k}")
    y = np.asarray(samples, dtype=float) ** k
    n = y.size
    total = y.sum()
    est = total / n
    if n < 2:
        return float(est), math.inf
    loo = (total - y) / (n - 1)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return float(est), se


SCALING_COLUMNS = ("grad8_over_N4", "grad_r2_4_over_N2", "grad_mtilde_4_over_N2")


@dataclass(frozen=True, eq=False)
class ScalingTable:
    """Rows keyed by N; ``values[i, c]`` and ``std_err[i, c]`` per column."""

    N: tuple[int, ...]
    values: np.ndarray
    std_err: np.ndarray
    columns: tuple[str, ...] = SCALING_COLUMNS

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def ratios(self, name: str) -> np.ndarray:
        """Consecutive ratios value(N_{i+1}) / value(N_i)."""
        c = self.column(name)
        with np.errstate(divide="ignore", invalid="ignore"):
            return c[1:] / c[:-1]

    @property
    def flags(self) -> dict[str, bool]:
        """True where max/min over N exceeds 4 (growth or decay alike)."""
        out = {}
        for j, name in enumerate(self.columns):
            c = self.values[:, j]
            lo, hi = c.min(), c.max()
            out[name] = bool(hi > 4 * lo) if lo > 0 else bool(hi > 0)
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["N"] + [h for c in self.columns for h in (c, f"{c}_se")])
            for n, v, s in zip(self.N, self.values, self.std_err):
                w.writerow([n] + [_fmt(x) for pair in zip(v, s) for x in pair])


def _pair_mean_se(x: np.ndarray) -> tuple[float, float]:
    # x has shape (2, n_pairs); antithetic pairs are averaged before the SE
    pm = x.mean(axis=0)
    return float(pm.mean()), float(pm.std(ddof=1) / math.sqrt(pm.size))


def localizability_diagnostics(cfg: SimConfig, f: Activation, N_list: Sequence[int], n_samples: int,
                               stream: RandomStream, m: float = 0.0, r2: float = 1.0) -> ScalingTable:
    """Normalised moments of grad H at a point x with (m(x), r2(x)) = (m, r2).

    ``cfg`` supplies the noise law, C_eps and c_delta; its N is ignored.
    Samples use the exact decomposition a = a1 v + a2 e + a_rest with
    |a_rest|^2 ~ chi^2_{N-2}, and label noise enters in antithetic pairs
    (+eps, -eps).
    """
    if n_samples < 4 or n_samples % 2:
        raise ConfigurationError(f"n_samples must be even and >= 4, got {n_samples}")
    if any(N < 32 for N in N_list):
        raise ConfigurationError(f"every N must be >= 32, got {list(N_list)}")
    mdl = ModelFunctions(f, cfg.noise_var, c_delta=cfg.c_delta)
    d_m, d_r2 = population_grad_coeffs(SummaryPoint(m, r2), mdl)
    r = math.sqrt(r2)
    half = n_samples // 2
    vals, ses = [], []
    for i, N in enumerate(N_list):
        s = stream.substream(i) if stream.index == 0 else stream
        a1 = np.tile(s.normal(half), 2)
        a2 = np.tile(s.normal(half), 2)
        w = np.tile(s.chisquare(N - 2, half), 2)
        if cfg.noise_law == "gaussian":
            xi = s.normal(half)
        else:
            xi = 2.0 * s.integers(0, 2, half) - 1.0
        eps = math.sqrt(cfg.noise_var) * np.concatenate([xi, -xi])
        p = m * a1 + r * a2
        g = 2.0 * (f.eval(p) - f.eval(a1) - eps) * f.deriv1(p)
        h_v = g * a1 - d_m
        h_e = g * a2 - 2.0 * r * d_r2
        norm2 = h_v**2 + h_e**2 + g * g * w
        cols = (
            norm2**4 / float(N) ** 4,
            (2.0 * r * h_e) ** 4 / float(N) ** 2,
            h_v**4,  # (sqrt(N) h_v)^4 / N^2
        )
        row = [_pair_mean_se(c.reshape(2, half)) for c in cols]
        vals.append([v for v, _ in row])
        ses.append([e for _, e in row])
    return ScalingTable(tuple(int(n) for n in N_list), np.array(vals), np.array(ses))
