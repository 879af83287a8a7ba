"""Experiment configuration: TOML (or manifest JSON) to a validated dataclass.

Example::

    experiment = "compare"
    noise_var = 0.25
    N_list = [250, 2000]
    t_end = 5.0
    n_seeds = 400

    [activation]
    label = "purified"
    g1 = "tanh"
    g2 = "erf"

Every key is optional except where a subcommand needs it; unknown keys are
rejected before any computation starts.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .activation import BUILTIN_LABELS, Activation, make_activation
from .dynamics import SIGMA_VARIANTS, ModelFunctions
from .errors import ConfigurationError
from .quadrature import QuadratureRule, gh_rule, grid_rule
from .sgd import NOISE_LAWS, SimConfig

__all__ = ["EXPERIMENTS", "ExperimentConfig", "load_config"]

EXPERIMENTS = ("hermite", "ode", "sde", "sgd", "compare", "fixed-point", "ou-check", "diagnose")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str | None = None
    activation: dict = field(default_factory=lambda: {"label": "purified"})
    noise_var: float = 0.0
    noise_law: str = "gaussian"
    N: int = 1024
    N_list: tuple[int, ...] = (250, 2000)
    c_delta: float = 1.0
    t_end: float = 5.0
    dt: float = 1e-3
    n_seeds: int = 100
    seed: int = 0
    mode: str = "reduced"
    quadrature: str = "grid"
    quadrature_order: int = 385
    sigma_variant: str = "direct"
    init_sigma2: float = 1.0
    init_at_fixed_point: bool = False
    zero_init_correlation: bool = False
    record_stride: int | None = None
    u0: tuple[float, float] | None = None
    bracket: tuple[float, float] = (1e-4, 25.0)
    checkpoints: tuple[float, ...] = (1.0, 2.0, 5.0)
    K: int = 8
    n_samples: int = 100_000
    point_m: float = 0.0
    point_r2: float = 1.0
    output_dir: str = "out"

    def __post_init__(self):
        def bad(msg):
            raise ConfigurationError(msg)

        if self.experiment is not None and self.experiment not in EXPERIMENTS:
            bad(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        act = dict(self.activation)
        if "label" not in act:
            bad("[activation] needs a 'label'")
        if act["label"] not in BUILTIN_LABELS:
            bad(f"unknown activation label {act['label']!r}; expected one of {BUILTIN_LABELS}")
        extra = set(act) - {"label"} - ({"g1", "g2"} if act["label"] == "purified" else set())
        if extra:
            bad(f"unknown [activation] keys {sorted(extra)} for label {act['label']!r}")
        for k in ("noise_var", "c_delta", "t_end", "dt", "init_sigma2", "point_m", "point_r2"):
            v = getattr(self, k)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                bad(f"{k} must be a finite number, got {v!r}")
        for k in ("N", "n_seeds", "seed", "quadrature_order", "K", "n_samples"):
            v = getattr(self, k)
            if isinstance(v, bool) or not isinstance(v, int):
                bad(f"{k} must be an integer, got {v!r}")
        if self.noise_var < 0:
            bad(f"noise_var must be >= 0, got {self.noise_var}")
        if self.noise_law not in NOISE_LAWS:
            bad(f"noise_law must be one of {NOISE_LAWS}, got {self.noise_law!r}")
        if self.N < 8 or any((not isinstance(n, int)) or n < 8 for n in self.N_list):
            bad("N and every N_list entry must be integers >= 8")
        if not self.N_list:
            bad("N_list must not be empty")
        if self.c_delta <= 0 or self.t_end <= 0 or self.dt <= 0:
            bad("c_delta, t_end and dt must be positive")
        if self.dt > self.t_end:
            bad(f"dt={self.dt} exceeds t_end={self.t_end}")
        if self.n_seeds < 2:
            bad(f"n_seeds must be >= 2, got {self.n_seeds}")
        if not 0 <= self.seed < 2**64:
            bad(f"seed must fit in 64 unsigned bits, got {self.seed}")
        if self.mode not in ("reduced", "full"):
            bad(f"mode must be 'reduced' or 'full', got {self.mode!r}")
        if self.quadrature not in ("grid", "gauss-hermite"):
            bad(f"quadrature must be 'grid' or 'gauss-hermite', got {self.quadrature!r}")
        if self.sigma_variant not in SIGMA_VARIANTS:
            bad(f"sigma_variant must be one of {SIGMA_VARIANTS}, got {self.sigma_variant!r}")
        if self.init_sigma2 < 0:
            bad(f"init_sigma2 must be >= 0, got {self.init_sigma2}")
        if self.record_stride is not None and (not isinstance(self.record_stride, int) or self.record_stride < 1):
            bad(f"record_stride must be a positive integer, got {self.record_stride!r}")
        if self.u0 is not None and (len(self.u0) != 2 or not self.u0[1] > 0):
            bad(f"u0 must be [m, r2] with r2 > 0, got {self.u0!r}")
        if len(self.bracket) != 2 or not 0 < self.bracket[0] < self.bracket[1]:
            bad(f"bracket must be [lo, hi] with 0 < lo < hi, got {self.bracket!r}")
        # ou-check runs to max(checkpoints); t_end does not bound them
        if not self.checkpoints or any(not c > 0 for c in self.checkpoints):
            bad(f"checkpoints must be positive times, got {self.checkpoints!r}")
        if self.K < 0 or self.n_samples < 4 or self.n_samples % 2:
            bad("K must be >= 0 and n_samples even and >= 4")
        if self.point_r2 <= 0:
            bad(f"point_r2 must be positive, got {self.point_r2}")

    # --- derived objects ---

    def rule(self) -> QuadratureRule:
        if self.quadrature == "gauss-hermite":
            return gh_rule(self.quadrature_order)
        return grid_rule(self.quadrature_order)

    def make_activation(self) -> Activation:
        act = dict(self.activation)
        return make_activation(act.pop("label"), rule=self.rule(), **act)

    def model(self, f: Activation | None = None) -> ModelFunctions:
        return ModelFunctions(f or self.make_activation(), float(self.noise_var), self.rule(), float(self.c_delta))

    def sim(self, N: int | None = None) -> SimConfig:
        return SimConfig(
            N=int(N or self.N), c_delta=float(self.c_delta), t_end=float(self.t_end),
            init_sigma2=float(self.init_sigma2), init_at_fixed_point=self.init_at_fixed_point,
            noise_var=float(self.noise_var), noise_law=self.noise_law, record_stride=self.record_stride,
            zero_init_correlation=self.zero_init_correlation, seed=self.seed,
            fixed_point_bracket=tuple(self.bracket),
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        d = asdict(self)
        d.update(changes)
        return ExperimentConfig(**d)


_TUPLE_KEYS = {"N_list", "u0", "bracket", "checkpoints"}
_FLOAT_KEYS = {"noise_var", "c_delta", "t_end", "dt", "init_sigma2", "point_m", "point_r2"}


def _from_mapping(raw: dict) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
    kw = {}
    for k, v in raw.items():
        if k in _TUPLE_KEYS and v is not None:
            if not isinstance(v, (list, tuple)):
                raise ConfigurationError(f"{k} must be a list, got {v!r}")
            v = tuple(v)
        if k in _FLOAT_KEYS and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if k == "activation" and not isinstance(v, dict):
            raise ConfigurationError("[activation] must be a table")
        kw[k] = v
    return ExperimentConfig(**kw)


def load_config(path: str | Path | None) -> ExperimentConfig:
    """Read a TOML config or a run manifest (JSON with a ``config`` entry)."""
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if path.suffix == ".json":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
        if isinstance(raw, dict) and "config" in raw and "artifact_version" in raw:
            raw = raw["config"]
    else:
        try:
            raw = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a table")
    return _from_mapping(raw)
