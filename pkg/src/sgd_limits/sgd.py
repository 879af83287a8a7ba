"""
Online SGD for the single-index teacher-student model.

Data are a ~ N(0, I_N) and y = f(<a, x*>) + eps with x* = e_1.  One step of
size delta = c_delta / N on the loss (y - f(<a, x>))^2 reads

    x <- x - delta * g * a,   g = 2 (f(<a, x>) - y) f'(<a, x>).

Two simulators are provided:

* the full chain on x in R^N (O(N) per step);
* an exact reduced chain on (m, q) = (<x, x*>, |x|^2 - m^2).  Writing
  a1 = <a, x*>, a2 = <a, x_perp>/|x_perp| and w = |a|^2 - a1^2 - a2^2, the
  triple (a1, a2, w) is distributed as N(0,1) x N(0,1) x chi^2_{N-2}
  independently of x by rotational invariance, and

      m' = m - delta g a1
      q' = (r - delta g a2)^2 + (delta g)^2 w,     r = sqrt(q),

  which equals |x'|^2 - m'^2 exactly.  Cost is O(1) per step for any N.

Ensembles are vectorised across seeds.  Seed ``i`` of an ensemble draws
from ``RandomStream(seed).substream(i)`` in fixed-size blocks, so every
member is bitwise identical to a single run on that substream, independent
of batching or thread count.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .activation import Activation
from .dynamics import DEFAULT_BRACKET, ModelFunctions, fixed_point
from .errors import ConfigurationError, DivergenceError, NumericalConsistencyError
from .integrators import DIVERGENCE_THRESHOLD, Trajectory
from .quadrature import RandomStream

__all__ = [
    "SimConfig",
    "FullState",
    "ReducedState",
    "SummaryTrajectory",
    "EnsembleResult",
    "grad_loss",
    "sgd_step_full",
    "reduced_step",
    "initial_sigma2",
    "run_full",
    "run_reduced",
    "run_ensemble",
    "coupled_check",
    "NOISE_LAWS",
]

NOISE_LAWS = ("gaussian", "two_point")
MAX_STEPS = 10**8
_REDUCED_BLOCK = 4096
_FULL_BLOCK_BUDGET = 2**18  # per-seed doubles per block of the full chain


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters; the step size is c_delta / N.

    ``init_sigma2`` sets X_0 ~ N(0, sigma^2/N I_N); with
    ``init_at_fixed_point`` it is replaced by the radial fixed point found
    in ``fixed_point_bracket``.  ``zero_init_correlation`` forces m(0) = 0.
    """

    N: int
    c_delta: float = 1.0
    t_end: float = 1.0
    init_sigma2: float = 1.0
    init_at_fixed_point: bool = False
    noise_var: float = 0.0
    noise_law: str = "gaussian"
    record_stride: int | None = None
    zero_init_correlation: bool = False
    seed: int = 0
    fixed_point_bracket: tuple[float, float] = DEFAULT_BRACKET

    def __post_init__(self):
        if isinstance(self.N, bool) or not isinstance(self.N, (int, np.integer)) or self.N < 8:
            raise ConfigurationError(f"N must be an integer >= 8, got {self.N!r}")
        if not self.c_delta > 0:
            raise ConfigurationError(f"c_delta must be positive, got {self.c_delta}")
        if not self.t_end > 0:
            raise ConfigurationError(f"t_end must be positive, got {self.t_end}")
        if not self.init_sigma2 >= 0:
            raise ConfigurationError(f"init_sigma2 must be >= 0, got {self.init_sigma2}")
        if not self.noise_var >= 0:
            raise ConfigurationError(f"noise_var must be >= 0, got {self.noise_var}")
        if self.noise_law not in NOISE_LAWS:
            raise ConfigurationError(f"noise_law must be one of {NOISE_LAWS}, got {self.noise_law!r}")
        if self.record_stride is not None and self.record_stride < 1:
            raise ConfigurationError(f"record_stride must be >= 1, got {self.record_stride}")
        object.__setattr__(self, "fixed_point_bracket", tuple(float(b) for b in self.fixed_point_bracket))

    @property
    def delta(self) -> float:
        return self.c_delta / self.N

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end * self.N / self.c_delta - 1e-9))

    @property
    def stride(self) -> int:
        return self.record_stride or max(1, self.N // 100)

    def record_steps(self) -> np.ndarray:
        steps = np.arange(0, self.n_steps + 1, self.stride)
        if steps[-1] != self.n_steps:
            steps = np.append(steps, self.n_steps)
        return steps

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "SimConfig":
        kw = asdict(self)
        kw.update(changes)
        return SimConfig(**kw)


@dataclass
class FullState:
    x: np.ndarray
    x_star: np.ndarray = field(default=None)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x_star is None:
            self.x_star = np.zeros_like(self.x)
            self.x_star[0] = 1.0

    @property
    def m(self) -> float:
        return float(self.x[0])

    @property
    def q(self) -> float:
        return float(self.x[1:] @ self.x[1:])


class ReducedState(NamedTuple):
    m: float
    q: float


@dataclass(frozen=True, eq=False)
class SummaryTrajectory:
    """Recorded (m, r2, m_tilde) of one SGD run on the macroscopic clock."""

    times: np.ndarray
    m: np.ndarray
    r2: np.ndarray
    N: int
    seed: int | None = None
    stream_index: int | None = None
    config_digest: str = ""

    @property
    def m_tilde(self) -> np.ndarray:
        return math.sqrt(self.N) * self.m

    def as_trajectory(self) -> Trajectory:
        return Trajectory(self.times, np.column_stack([self.m, self.r2]), ("m", "r2"))


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Per-seed records: ``m[i, s]`` is seed ``s`` at ``times[i]``."""

    times: np.ndarray
    m: np.ndarray
    r2: np.ndarray
    N: int
    mode: str
    seed: int
    config_digest: str = ""

    @property
    def n_seeds(self) -> int:
        return self.m.shape[1]

    @property
    def m_tilde(self) -> np.ndarray:
        return math.sqrt(self.N) * self.m

    def mean(self, name: str) -> np.ndarray:
        return getattr(self, name).mean(axis=1)

    def var(self, name: str) -> np.ndarray:
        return getattr(self, name).var(axis=1, ddof=1)

    def std_err(self, name: str) -> np.ndarray:
        return np.sqrt(self.var(name) / self.n_seeds)

    def mean_trajectory(self) -> Trajectory:
        return Trajectory(self.times, np.column_stack([self.mean("m"), self.mean("r2")]), ("m", "r2"))

    def member(self, s: int) -> SummaryTrajectory:
        return SummaryTrajectory(self.times, self.m[:, s], self.r2[:, s], self.N, self.seed, s + 1,
                                 self.config_digest)

    def at(self, t: float) -> int:
        """Index of the record closest to time ``t``."""
        return int(np.argmin(np.abs(self.times - t)))


# --- single steps -----------------------------------------------------------

def grad_loss(x, a, y: float, f: Activation) -> np.ndarray:
    """Gradient in x of (y - f(<a, x>))^2."""
    a = np.asarray(a, dtype=float)
    p = float(a @ np.asarray(x, dtype=float))
    return -2.0 * (y - float(f.eval(p))) * float(f.deriv1(p)) * a


def sgd_step_full(state: FullState, sample: tuple, cfg: SimConfig, f: Activation) -> FullState:
    """One SGD step on the full parameter; ``sample = (a, eps)``."""
    a, eps = sample
    a = np.asarray(a, dtype=float)
    y = float(f.eval(float(a @ state.x_star))) + eps
    return FullState(state.x - cfg.delta * grad_loss(state.x, a, y, f), state.x_star)


def reduced_step(state: ReducedState, draws: tuple, cfg: SimConfig, f: Activation) -> ReducedState:
    """One step of the summary-statistic chain; ``draws = (a1, a2, w, eps)``."""
    a1, a2, w, eps = draws
    if w < 0 or state.q < 0:
        raise ConfigurationError(f"need w >= 0 and q >= 0, got w={w}, q={state.q}")
    r = math.sqrt(state.q)
    p = state.m * a1 + r * a2
    g = 2.0 * (float(f.eval(p)) - float(f.eval(a1)) - eps) * float(f.deriv1(p))
    dg = cfg.delta * g
    if dg == 0.0:
        return state
    t = r - dg * a2
    q = t * t + dg * dg * w
    if q < -1e-12:  # unreachable with the sum-of-squares form; kept as a guard
        raise NumericalConsistencyError(f"negative r2 = {q}")
    return ReducedState(state.m - dg * a1, max(q, 0.0))


# --- ensemble engines ------------------------------------------------------

def initial_sigma2(cfg: SimConfig, f: Activation) -> float:
    if not cfg.init_at_fixed_point:
        return cfg.init_sigma2
    mdl = ModelFunctions(f, cfg.noise_var, c_delta=cfg.c_delta)
    return fixed_point(mdl, cfg.fixed_point_bracket).r2_star


def _noise(stream: RandomStream, cfg: SimConfig, size: int) -> np.ndarray:
    if cfg.noise_law == "gaussian":
        return math.sqrt(cfg.noise_var) * stream.normal(size)
    return math.sqrt(cfg.noise_var) * (2.0 * stream.integers(0, 2, size) - 1.0)


def _diverged(m: np.ndarray, q: np.ndarray, t: float, what: str) -> None:
    bad = ~(np.isfinite(m) & np.isfinite(q)) | (np.abs(m) > DIVERGENCE_THRESHOLD) | (q > DIVERGENCE_THRESHOLD)
    if bad.any():
        s = int(np.flatnonzero(bad)[0])
        raise DivergenceError(f"{what} diverged by t = {t:.6g} (member {s})", time=t,
                              state=np.array([m[s], q[s]]))


def _reduced_engine(cfg: SimConfig, f: Activation, streams: list[RandomStream], sigma2: float):
    N, delta = cfg.N, cfg.delta
    S = len(streams)
    m = np.empty(S)
    q = np.empty(S)
    for i, s in enumerate(streams):
        z = s.normal()
        chi = s.chisquare(N - 1)
        m[i] = 0.0 if cfg.zero_init_correlation else math.sqrt(sigma2 / N) * z
        q[i] = sigma2 / N * chi
    rec = cfg.record_steps()
    M = np.empty((len(rec), S))
    Q = np.empty((len(rec), S))
    M[0], Q[0] = m, q
    r_i = 1
    n = cfg.n_steps
    k = 0
    with np.errstate(all="ignore"):
        while k < n:
            B = min(_REDUCED_BLOCK, n - k)
            blocks = [(s.normal(B), s.normal(B), s.chisquare(N - 2, B), _noise(s, cfg, B)) for s in streams]
            A1 = np.stack([b[0] for b in blocks], axis=1)
            A2 = np.stack([b[1] for b in blocks], axis=1)
            Wc = np.stack([b[2] for b in blocks], axis=1)
            Y = np.asarray(f.eval(A1), dtype=float) + np.stack([b[3] for b in blocks], axis=1)
            for j in range(B):
                a1 = A1[j]
                a2 = A2[j]
                r = np.sqrt(q)
                p = m * a1 + r * a2
                dg = (2.0 * delta) * (f.eval(p) - Y[j]) * f.deriv1(p)
                m = m - dg * a1
                t = r - dg * a2
                q = t * t + dg * dg * Wc[j]
                k += 1
                if r_i < len(rec) and rec[r_i] == k:
                    _diverged(m, q, k * delta, "reduced SGD chain")
                    M[r_i], Q[r_i] = m, q
                    r_i += 1
    return rec * delta, M, Q


def _full_engine(cfg: SimConfig, f: Activation, streams: list[RandomStream], sigma2: float):
    N, delta = cfg.N, cfg.delta
    S = len(streams)
    X = np.stack([math.sqrt(sigma2 / N) * s.normal(N) for s in streams])
    if cfg.zero_init_correlation:
        X[:, 0] = 0.0
    rec = cfg.record_steps()
    M = np.empty((len(rec), S))
    Q = np.empty((len(rec), S))
    M[0] = X[:, 0]
    Q[0] = np.einsum("ij,ij->i", X[:, 1:], X[:, 1:])
    r_i = 1
    n = cfg.n_steps
    B0 = max(1, _FULL_BLOCK_BUDGET // N)
    k = 0
    with np.errstate(all="ignore"):
        while k < n:
            B = min(B0, n - k)
            blocks = [(s.normal((B, N)), _noise(s, cfg, B)) for s in streams]
            A = np.stack([b[0] for b in blocks], axis=1)  # (B, S, N)
            Y = np.asarray(f.eval(A[:, :, 0]), dtype=float) + np.stack([b[1] for b in blocks], axis=1)
            for j in range(B):
                a = A[j]
                p = np.einsum("ij,ij->i", a, X)
                dg = (2.0 * delta) * (f.eval(p) - Y[j]) * f.deriv1(p)
                X -= dg[:, None] * a
                k += 1
                if r_i < len(rec) and rec[r_i] == k:
                    M[r_i] = X[:, 0]
                    Q[r_i] = np.einsum("ij,ij->i", X[:, 1:], X[:, 1:])
                    _diverged(M[r_i], Q[r_i], k * delta, "full SGD chain")
                    r_i += 1
    return rec * delta, M, Q


_ENGINES = {"reduced": _reduced_engine, "full": _full_engine}
_FULL_CHUNK = 16


def _run(cfg: SimConfig, f: Activation, streams: list[RandomStream], mode: str, threads: int = 1,
         sigma2: float | None = None):
    if mode not in _ENGINES:
        raise ConfigurationError(f"mode must be 'full' or 'reduced', got {mode!r}")
    if cfg.n_steps > MAX_STEPS:
        raise ConfigurationError(f"{cfg.n_steps} steps exceed the guard of {MAX_STEPS}")
    if sigma2 is None:
        sigma2 = initial_sigma2(cfg, f)
    engine = _ENGINES[mode]
    chunk = _FULL_CHUNK if mode == "full" else max(1, math.ceil(len(streams) / max(threads, 1)))
    parts = [streams[i:i + chunk] for i in range(0, len(streams), chunk)]
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda ss: engine(cfg, f, ss, sigma2), parts))
    else:
        results = [engine(cfg, f, ss, sigma2) for ss in parts]
    times = results[0][0]
    M = np.concatenate([r[1] for r in results], axis=1)
    Q = np.concatenate([r[2] for r in results], axis=1)
    return times, M, Q


def _single(cfg, f, stream, mode) -> SummaryTrajectory:
    times, M, Q = _run(cfg, f, [stream], mode)
    return SummaryTrajectory(times, M[:, 0], Q[:, 0], cfg.N, stream.seed, stream.index, cfg.digest())


def run_full(cfg: SimConfig, f: Activation, stream: RandomStream) -> SummaryTrajectory:
    """Simulate the full N-dimensional chain and record summary statistics."""
    return _single(cfg, f, stream, "full")


def run_reduced(cfg: SimConfig, f: Activation, stream: RandomStream) -> SummaryTrajectory:
    """Simulate the exact reduced chain; same law as ``run_full``."""
    return _single(cfg, f, stream, "reduced")


def run_ensemble(cfg: SimConfig, f: Activation, n_seeds: int, mode: str = "reduced",
                 threads: int = 1) -> EnsembleResult:
    """``n_seeds`` independent runs on substreams 0..n_seeds-1 of ``cfg.seed``."""
    if n_seeds < 2:
        raise ConfigurationError(f"n_seeds must be >= 2, got {n_seeds}")
    root = RandomStream(cfg.seed)
    streams = [root.substream(i) for i in range(n_seeds)]
    times, M, Q = _run(cfg, f, streams, mode, threads)
    return EnsembleResult(times, M, Q, cfg.N, mode, cfg.seed, cfg.digest())


def coupled_check(cfg: SimConfig, f: Activation, stream: RandomStream, n_steps: int) -> float:
    """Drive the reduced chain with statistics extracted from full-chain draws.

    Returns the largest |m_full - m_red| + |q_full - q_red| over ``n_steps``.
    """
    if cfg.N > 4096:
        raise ConfigurationError(f"coupled_check needs N <= 4096, got {cfg.N}")
    N = cfg.N
    sigma2 = initial_sigma2(cfg, f)
    x = math.sqrt(sigma2 / N) * stream.normal(N)
    if cfg.zero_init_correlation:
        x[0] = 0.0
    full = FullState(x)
    red = ReducedState(full.m, full.q)
    worst = 0.0
    for _ in range(n_steps):
        a = stream.normal(N)
        eps = float(_noise(stream, cfg, 1)[0])
        xp = full.x[1:]
        r = math.sqrt(float(xp @ xp))
        a1 = float(a[0])
        a2 = float(a[1:] @ xp) / r if r > 0 else float(a[1])
        w = max(float(a @ a) - a1 * a1 - a2 * a2, 0.0)
        full = sgd_step_full(full, (a, eps), cfg, f)
        red = reduced_step(red, (a1, a2, w, eps), cfg, f)
        worst = max(worst, abs(full.m - red.m) + abs(full.q - red.q))
    return worst
