"""Fixed-step ODE/SDE integrators and closed-form Ornstein-Uhlenbeck moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, DomainError, EvaluationError
from .quadrature import RandomStream

__all__ = [
    "Trajectory",
    "rk4",
    "euler",
    "euler_maruyama",
    "euler_maruyama_ensemble",
    "EnsemblePaths",
    "ou_moments",
    "DIVERGENCE_THRESHOLD",
]

DIVERGENCE_THRESHOLD = 1e8
_NOISE_BLOCK = 1024


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time grid starting at 0 with one state vector per time."""

    times: np.ndarray
    states: np.ndarray
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if t.ndim != 1 or len(t) != len(s):
            raise ConfigurationError("times and states must have equal length")
        if len(t) and t[0] != 0.0:
            raise ConfigurationError(f"trajectory must start at t=0, got {t[0]}")
        if np.any(np.diff(t) <= 0):
            raise ConfigurationError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", s)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(f"u{i}" for i in range(s.shape[1])))

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def coord(self, label: str) -> np.ndarray:
        return self.states[:, self.labels.index(label)]

    def interpolate(self, grid: Sequence[float]) -> np.ndarray:
        """Piecewise-linear values on ``grid``, shape (len(grid), dim)."""
        grid = np.asarray(grid, dtype=float)
        lo, hi = self.times[0], self.times[-1]
        span = max(abs(hi), 1.0) * 1e-12
        if grid.size and (grid.min() < lo - span or grid.max() > hi + span):
            raise DomainError(f"grid [{grid.min()}, {grid.max()}] outside trajectory span [{lo}, {hi}]")
        g = np.clip(grid, lo, hi)
        return np.column_stack([np.interp(g, self.times, self.states[:, i]) for i in range(self.dim)])


def _grid(t_end: float, dt: float) -> tuple[int, float]:
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    if not t_end >= dt * (1 - 1e-12):
        raise ConfigurationError(f"t_end must be >= dt, got t_end={t_end}, dt={dt}")
    n = max(1, int(math.ceil(t_end / dt - 1e-9)))
    return n, t_end / n


def _guard(u: np.ndarray, t: float, prev: np.ndarray) -> None:
    if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > DIVERGENCE_THRESHOLD:
        raise DivergenceError(
            f"state left |u| <= {DIVERGENCE_THRESHOLD:g} at t = {t:.6g} (last finite state {prev.tolist()})",
            time=t, state=prev,
        )


def rk4(rhs: Callable[[np.ndarray], np.ndarray], u0, t_end: float, dt: float,
        labels: tuple[str, ...] = ()) -> Trajectory:
    """Classical fourth-order Runge-Kutta on a uniform grid.

    The step is shrunk slightly if needed so the grid ends exactly at
    ``t_end``.  Raises ``DivergenceError`` once any coordinate exceeds
    1e8 in magnitude or becomes non-finite.
    """
    n, h = _grid(t_end, dt)
    u = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
    out = np.empty((n + 1, u.size))
    out[0] = u

    def F(v):
        try:
            with np.errstate(over="raise", invalid="raise"):
                return np.asarray(rhs(v), dtype=float).reshape(u.shape)
        except (FloatingPointError, EvaluationError):
            return np.full(u.shape, np.inf)

    for k in range(n):
        t = k * h
        k1 = F(u)
        k2 = F(u + 0.5 * h * k1)
        k3 = F(u + 0.5 * h * k2)
        k4 = F(u + h * k3)
        new = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        _guard(new, t + h, u)
        u = new
        out[k + 1] = u
    return Trajectory(np.arange(n + 1) * h, out, labels)


def euler(rhs: Callable[[np.ndarray], np.ndarray], u0, t_end: float, dt: float,
          labels: tuple[str, ...] = ()) -> Trajectory:
    """Explicit Euler; the noiseless limit of ``euler_maruyama``."""
    n, h = _grid(t_end, dt)
    u = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
    out = np.empty((n + 1, u.size))
    out[0] = u
    for k in range(n):
        new = u + h * np.asarray(rhs(u), dtype=float).reshape(u.shape)
        _guard(new, (k + 1) * h, u)
        u = new
        out[k + 1] = u
    return Trajectory(np.arange(n + 1) * h, out, labels)


def _apply_vol(vol_val, xi: np.ndarray) -> np.ndarray:
    v = np.asarray(vol_val, dtype=float)
    if v.ndim == xi.ndim + 1:
        return np.einsum("...ij,...j->...i", v, xi)
    return v * xi


def euler_maruyama(drift: Callable, vol: Callable, u0, t_end: float, dt: float,
                   stream: RandomStream, labels: tuple[str, ...] = ()) -> Trajectory:
    """Euler-Maruyama path u_{n+1} = u_n + drift dt + vol sqrt(dt) xi_n.

    ``vol(u)`` returns a (d, d) matrix, or a length-d vector / scalar taken
    as a diagonal.  Noise is drawn in blocks of 1024 steps from ``stream``.
    """
    n, h = _grid(t_end, dt)
    u = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
    d = u.size
    out = np.empty((n + 1, d))
    out[0] = u
    sq = math.sqrt(h)
    noise = None
    for k in range(n):
        j = k % _NOISE_BLOCK
        if j == 0:
            noise = stream.normal((min(_NOISE_BLOCK, n - k), d))
        incr = np.asarray(drift(u), dtype=float).reshape(d) * h + sq * _apply_vol(vol(u), noise[j]).reshape(d)
        new = u + incr
        _guard(new, (k + 1) * h, u)
        u = new
        out[k + 1] = u
    return Trajectory(np.arange(n + 1) * h, out, labels)


@dataclass(frozen=True, eq=False)
class EnsemblePaths:
    """Recorded ensemble: ``values[i, p, :]`` is path ``p`` at ``times[i]``."""

    times: np.ndarray
    values: np.ndarray

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=1)

    def var(self) -> np.ndarray:
        return self.values.var(axis=1, ddof=1)


def euler_maruyama_ensemble(drift: Callable, vol: Callable, u0, t_end: float, dt: float,
                            n_paths: int, stream: RandomStream,
                            record_every: int = 1) -> EnsemblePaths:
    """Independent Euler-Maruyama paths, vectorised across paths.

    ``drift`` and ``vol`` act on arrays of shape (n_paths, d).  Path ``p``
    takes its noise from ``stream.substream(p)`` in blocks of 1024 steps, so
    each path equals a single-path run on that substream up to roundoff.
    """
    if n_paths < 1:
        raise ConfigurationError(f"n_paths must be >= 1, got {n_paths}")
    n, h = _grid(t_end, dt)
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    d = u0.shape[-1]
    U = np.broadcast_to(u0, (n_paths, d)).astype(float).copy()
    subs = [stream.substream(p) for p in range(n_paths)]
    rec_idx = list(range(0, n + 1, record_every))
    if rec_idx[-1] != n:
        rec_idx.append(n)
    out = np.empty((len(rec_idx), n_paths, d))
    out[0] = U
    r = 1
    sq = math.sqrt(h)
    noise = None
    for k in range(n):
        j = k % _NOISE_BLOCK
        if j == 0:
            b = min(_NOISE_BLOCK, n - k)
            noise = np.stack([s.normal((b, d)) for s in subs], axis=1)
        new = U + np.asarray(drift(U), dtype=float) * h + sq * _apply_vol(vol(U), noise[j])
        _guard(new, (k + 1) * h, U)
        U = new
        if r < len(rec_idx) and rec_idx[r] == k + 1:
            out[r] = U
            r += 1
    return EnsemblePaths(np.asarray(rec_idx) * h, out)


def ou_moments(theta: float, vol: float, m0: float, t: float) -> tuple[float, float]:
    """Mean and variance at time t of dX = -theta X dt + vol dB, X_0 = m0."""
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if not t >= 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    decay = math.exp(-theta * t)
    return m0 * decay, vol * vol * (-math.expm1(-2.0 * theta * t)) / (2.0 * theta)
