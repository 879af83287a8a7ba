"""
Command-line experiments.

    sgd-limits <subcommand> [--config PATH] [--out DIR] [--threads K] [--seed S] [--svg]

Subcommands: hermite, ode, sde, sgd, compare, fixed-point, ou-check,
diagnose.  Every run writes ``manifest.json`` next to its CSV outputs; the
manifest is itself a valid ``--config`` and reproduces the CSV files
byte for byte.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence,
4 statistical acceptance failure.

CSV schemas (fixed per subcommand):

    hermite.csv            k, a_k
    ode.csv                t, m, r2
    sde.csv                t, mtilde_mean, mtilde_var, r2, n_paths
    trajectory*.csv        t, m_mean, m_var, r2_mean, r2_var, mtilde_mean, mtilde_var, n_seeds, N
    deviation_N*.csv       t, dev_m, dev_r2, N, n_seeds
    compare_summary.csv    N, n_seeds, sup_dev_m, sup_dev_r2
    fixed_point.csv        quantity, value
    ou_check.csv           t, D, p_value, emp_mean, emp_var, pred_mean, pred_var,
                           pred_var_theorem_statement, pred_var_proof_form
    ou_summary.csv         quantity, value
    diagnose.csv           N, <column>, <column>_se for each moment column
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np
from scipy.stats import norm

from . import __version__
from .activation import hermite_coeffs, information_exponent
from .analysis import SCALING_COLUMNS, ks_test, localizability_diagnostics, sup_deviation
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .dynamics import (
    SIGMA_VARIANTS,
    SummaryPoint,
    effective_drift,
    fixed_point,
    ode_rhs_m0,
    ou_params,
    rescaled_drift_mtilde,
    volatility_sigma11,
)
from .errors import (
    ClosedFormInapplicableError,
    ConfigurationError,
    DivergenceError,
    ExponentScanError,
    NoFixedPointError,
)
from .integrators import euler_maruyama_ensemble, ou_moments, rk4
from .quadrature import RandomStream
from .sgd import EnsembleResult, run_ensemble
from .svg import line_chart

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_STATS = 0, 2, 3, 4
OU_P_THRESHOLD = 0.01
OU_VAR_TOL = 0.20


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class _Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, cmd: str, cfg: ExperimentConfig, svg: bool):
        self.cmd = cmd
        self.cfg = cfg
        self.svg = svg
        self.out = Path(cfg.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []
        self.write_manifest()

    def write_manifest(self) -> None:
        manifest = {
            "artifact_version": __version__,
            "subcommand": self.cmd,
            "seed": self.cfg.seed,
            "config": self.cfg.to_dict(),
            "outputs": sorted(self.files),
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    def csv(self, name: str, header, rows) -> Path:
        path = self.out / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        if name not in self.files:
            self.files.append(name)
        self.write_manifest()
        return path

    def chart(self, name: str, x, series: dict, title: str) -> None:
        if self.svg:
            line_chart(self.out / name, x, series, title)
            if name not in self.files:
                self.files.append(name)
            self.write_manifest()


def _say(msg: str = "") -> None:
    print(msg, flush=True)


def _trajectory_rows(E: EnsembleResult):
    mv, rv, tv = E.var("m"), E.var("r2"), E.var("m_tilde")
    mm, rm, tm = E.mean("m"), E.mean("r2"), E.mean("m_tilde")
    for i, t in enumerate(E.times):
        yield (float(t), mm[i], mv[i], rm[i], rv[i], tm[i], tv[i], E.n_seeds, E.N)


TRAJ_HEADER = ["t", "m_mean", "m_var", "r2_mean", "r2_var", "mtilde_mean", "mtilde_var", "n_seeds", "N"]


def _ode(cfg: ExperimentConfig, mdl, t_end: float | None = None):
    u0 = cfg.u0 if cfg.u0 is not None else (0.0, cfg.init_sigma2)
    return rk4(lambda u: np.array(effective_drift(SummaryPoint(u[0], u[1]), mdl)),
               list(u0), t_end or cfg.t_end, cfg.dt, labels=("m", "r2"))


def _divergence_report(run: _Run, exc: DivergenceError, what: str) -> int:
    state = [] if exc.state is None else np.atleast_1d(exc.state).tolist()
    run.csv("divergence.csv", ["what", "time", "last_state"], [(what, float(exc.time), " ".join(map(repr, state)))])
    print(f"divergence: {what} blew up at t = {exc.time:.6g}: {exc}", file=sys.stderr)
    return EXIT_DIVERGENCE


# --- subcommands ------------------------------------------------------------

def cmd_hermite(run: _Run, threads: int) -> int:
    cfg = run.cfg
    f = cfg.make_activation()
    rule = cfg.rule()
    hc = hermite_coeffs(f, cfg.K, rule)
    run.csv("hermite.csv", ["k", "a_k"], ((k, float(a)) for k, a in enumerate(hc.coefficients)))
    _say(f"activation {f.label}")
    for k, a in enumerate(hc.coefficients):
        _say(f"  a_{k:<2d} = {a: .12e}")
    _say(f"  ||f||^2 = {hc.norm_sq:.12e}   tail mass beyond K={cfg.K}: {hc.tail_mass:.3e}")
    try:
        k = information_exponent(f, rule=rule)
    except ExponentScanError as exc:
        raise ConfigurationError(f"activation {f.label!r}: {exc}") from exc
    _say(f"information exponent: {k}")
    return EXIT_OK


def cmd_ode(run: _Run, threads: int) -> int:
    cfg = run.cfg
    mdl = cfg.model()
    try:
        traj = _ode(cfg, mdl)
    except DivergenceError as exc:
        return _divergence_report(run, exc, f"ODE for {mdl.activation.label}")
    run.csv("ode.csv", ["t", "m", "r2"], ((t, u[0], u[1]) for t, u in zip(traj.times, traj.states)))
    run.chart("ode.svg", traj.times, {"m": traj.coord("m"), "r2": traj.coord("r2")}, "ballistic ODE")
    _say(f"ODE to t={cfg.t_end}: m = {traj.final[0]:.8g}, r2 = {traj.final[1]:.8g}")
    return EXIT_OK


def _radial_rhs(mdl, r2: float) -> float:
    try:
        return ode_rhs_m0(r2, mdl)
    except ClosedFormInapplicableError:
        return effective_drift(SummaryPoint(0.0, r2), mdl)[1]


def cmd_sde(run: _Run, threads: int) -> int:
    cfg = run.cfg
    mdl = cfg.model()
    sigma2 = cfg.init_sigma2
    root = RandomStream(cfg.seed)
    n = cfg.n_seeds
    u0 = np.column_stack([math.sqrt(sigma2) * root.normal(n), np.full(n, sigma2)])

    def drift(U):
        r2 = float(U[0, 1])
        return np.column_stack([rescaled_drift_mtilde(1.0, r2, mdl) * U[:, 0], np.full(len(U), _radial_rhs(mdl, r2))])

    def vol(U):
        s = math.sqrt(volatility_sigma11(float(U[0, 1]), mdl, cfg.sigma_variant))
        return np.column_stack([np.full(len(U), s), np.zeros(len(U))])

    every = max(1, int(round(0.01 / cfg.dt)))
    try:
        ens = euler_maruyama_ensemble(drift, vol, u0, cfg.t_end, cfg.dt, n, root, record_every=every)
    except DivergenceError as exc:
        return _divergence_report(run, exc, "diffusive SDE")
    mt = ens.values[:, :, 0]
    rows = ((t, mt[i].mean(), mt[i].var(ddof=1), ens.values[i, 0, 1], n) for i, t in enumerate(ens.times))
    run.csv("sde.csv", ["t", "mtilde_mean", "mtilde_var", "r2", "n_paths"], rows)
    run.chart("sde.svg", ens.times, {"var(mtilde)": mt.var(axis=1, ddof=1)}, "diffusive SDE")
    _say(f"SDE ensemble of {n} paths to t={cfg.t_end}: var(mtilde) = {mt[-1].var(ddof=1):.6g}")
    return EXIT_OK


def _ensemble(cfg: ExperimentConfig, f, N: int, threads: int) -> EnsembleResult:
    return run_ensemble(cfg.sim(N), f, cfg.n_seeds, cfg.mode, threads)


def cmd_sgd(run: _Run, threads: int) -> int:
    cfg = run.cfg
    f = cfg.make_activation()
    try:
        E = _ensemble(cfg, f, cfg.N, threads)
    except DivergenceError as exc:
        return _divergence_report(run, exc, f"SGD at N={cfg.N}")
    run.csv("trajectory.csv", TRAJ_HEADER, _trajectory_rows(E))
    run.chart("trajectory.svg", E.times, {"mean m": E.mean("m"), "mean r2": E.mean("r2")}, f"SGD, N={cfg.N}")
    i = -1
    _say(f"SGD N={cfg.N}, {E.n_seeds} seeds: mean m = {E.mean('m')[i]:.6g}, mean r2 = {E.mean('r2')[i]:.6g}, "
         f"var mtilde = {E.var('m_tilde')[i]:.6g}")
    return EXIT_OK


def cmd_compare(run: _Run, threads: int) -> int:
    cfg = run.cfg
    mdl = cfg.model()
    f = mdl.activation
    # SGD takes whole steps, so its last record may sit slightly past t_end
    horizon = max(cfg.sim(N).n_steps * cfg.sim(N).delta for N in cfg.N_list)
    try:
        ode = _ode(cfg, mdl, max(horizon, cfg.t_end))
    except DivergenceError as exc:
        return _divergence_report(run, exc, f"ODE for {f.label}")
    run.csv("ode.csv", ["t", "m", "r2"], ((t, u[0], u[1]) for t, u in zip(ode.times, ode.states)))
    summary = []
    for N in cfg.N_list:
        try:
            E = _ensemble(cfg, f, N, threads)
        except DivergenceError as exc:
            return _divergence_report(run, exc, f"SGD at N={N}")
        rep = sup_deviation(E.mean_trajectory(), ode, E.times, N, E.n_seeds)
        run.csv(f"trajectory_N{N}.csv", TRAJ_HEADER, _trajectory_rows(E))
        run.csv(f"deviation_N{N}.csv", ["t", "dev_m", "dev_r2", "N", "n_seeds"],
                ((t, d[0], d[1], N, E.n_seeds) for t, d in zip(rep.grid, rep.deviation)))
        summary.append((N, E.n_seeds, rep.sup("m"), rep.sup("r2")))
        run.csv("compare_summary.csv", ["N", "n_seeds", "sup_dev_m", "sup_dev_r2"], summary)
        run.chart(f"compare_N{N}.svg", E.times, {"SGD mean r2": E.mean("r2"),
                                                "ODE r2": ode.interpolate(E.times)[:, 1]}, f"N={N}")
        _say(f"N={N:>7d}  sup|m - m_ode| = {rep.sup('m'):.4e}  sup|r2 - r2_ode| = {rep.sup('r2'):.4e}")
    _say("(deviation decay with N is an empirical expectation; the limit theorem gives no rate)")
    if len(summary) > 1:
        dec = all(b[2] < a[2] and b[3] < a[3] for a, b in zip(summary, summary[1:]))
        if not dec:
            print("deviations do not decrease along N_list", file=sys.stderr)
            return EXIT_STATS
    return EXIT_OK


def _fixed_point_or_guidance(cfg, mdl):
    try:
        return fixed_point(mdl, tuple(cfg.bracket))
    except NoFixedPointError as exc:
        raise ConfigurationError(
            f"{exc}. Choose a 'bracket' where the radial right-hand side changes sign, or a smaller "
            "noise_var; unbounded activations such as h3 may have no fixed point at all."
        ) from exc


def _variant_table(r2: float, mdl) -> dict[str, float]:
    return {v: volatility_sigma11(r2, mdl, v) for v in SIGMA_VARIANTS}


def cmd_fixed_point(run: _Run, threads: int) -> int:
    cfg = run.cfg
    mdl = cfg.model()
    fp = _fixed_point_or_guidance(cfg, mdl)
    ou = ou_params(fp, mdl)
    sig = _variant_table(fp.r2_star, mdl)
    rows = [("r2_star", fp.r2_star), ("residual", fp.residual), ("theta", ou.theta), ("vol", ou.vol),
            ("stationary_var", ou.stationary_var)] + [(f"sigma11_{k}", v) for k, v in sig.items()]
    run.csv("fixed_point.csv", ["quantity", "value"], rows)
    for k, v in rows:
        _say(f"{k:>28s} = {v:.12g}")
    return EXIT_OK


def cmd_ou_check(run: _Run, threads: int) -> int:
    cfg = run.cfg
    mdl = cfg.model()
    f = mdl.activation
    fp = _fixed_point_or_guidance(cfg, mdl)
    ou = ou_params(fp, mdl)
    sig = _variant_table(fp.r2_star, mdl)
    sigma2 = fp.r2_star
    _say(f"r2* = {fp.r2_star:.10g} (residual {fp.residual:.2e})")
    _say(f"theta = {ou.theta:.10g}  vol = {ou.vol:.10g}  stationary_var = vol^2/(2 theta) = {ou.stationary_var:.10g}")
    for k, v in sig.items():
        rel = (v - sig["direct"]) / sig["direct"] if sig["direct"] else float("nan")
        _say(f"  Sigma11[{k:<17s}] = {v:.10g}  relative to direct: {rel:+.3e}")

    def pred_var(var_sigma11: float, t: float) -> float:
        vol = math.sqrt(max(var_sigma11, 0.0))
        return sigma2 * math.exp(-2.0 * ou.theta * t) + ou_moments(ou.theta, vol, 0.0, t)[1]

    sim_cfg = cfg.replace(init_at_fixed_point=True, t_end=float(max(cfg.checkpoints)))
    try:
        E = run_ensemble(sim_cfg.sim(cfg.N).replace(init_at_fixed_point=False, init_sigma2=sigma2),
                         f, cfg.n_seeds, cfg.mode, threads)
    except DivergenceError as exc:
        return _divergence_report(run, exc, f"SGD at N={cfg.N}")
    rows = []
    for t in cfg.checkpoints:
        i = E.at(t)
        x = E.m_tilde[i]
        pv = pred_var(sig[cfg.sigma_variant], t)
        D, p = ks_test(x, lambda z, s=math.sqrt(pv): norm.cdf(z, scale=s))
        rows.append((float(E.times[i]), D, p, float(x.mean()), float(x.var(ddof=1)), 0.0, pv,
                     pred_var(sig["theorem_statement"], t), pred_var(sig["proof_form"], t)))
        _say(f"t={E.times[i]:<6.3g} D={D:.4f} p={p:.4f} var(mtilde)={x.var(ddof=1):.6g} predicted={pv:.6g}")
    run.csv("ou_check.csv", ["t", "D", "p_value", "emp_mean", "emp_var", "pred_mean", "pred_var",
                             "pred_var_theorem_statement", "pred_var_proof_form"], rows)
    n_pass = sum(r[2] > OU_P_THRESHOLD for r in rows)
    rel_err = abs(rows[-1][4] / rows[-1][6] - 1.0)
    ok = n_pass >= min(2, len(rows)) and rel_err <= OU_VAR_TOL
    run.csv("ou_summary.csv", ["quantity", "value"], [
        ("r2_star", fp.r2_star), ("theta", ou.theta), ("vol", ou.vol), ("stationary_var", ou.stationary_var),
        ("vol2_over_2theta", ou.vol**2 / (2 * ou.theta)), ("sigma_variant", cfg.sigma_variant),
        ("checkpoints_passing_ks", n_pass), ("final_var_rel_err", rel_err), ("passed", int(ok))])
    _say(f"KS passes at {n_pass}/{len(rows)} checkpoints; final variance relative error {rel_err:.3f}")
    return EXIT_OK if ok else EXIT_STATS


def cmd_diagnose(run: _Run, threads: int) -> int:
    cfg = run.cfg
    f = cfg.make_activation()
    table = localizability_diagnostics(cfg.sim(max(cfg.N_list)), f, cfg.N_list, cfg.n_samples,
                                       RandomStream(cfg.seed), cfg.point_m, cfg.point_r2)
    table.to_csv(run.out / "diagnose.csv")
    run.files.append("diagnose.csv")
    run.write_manifest()
    for N, row in zip(table.N, table.values):
        _say(f"N={N:>6d}  " + "  ".join(f"{c}={v:.4e}" for c, v in zip(table.columns, row)))
    for c in SCALING_COLUMNS:
        _say(f"  {c}: consecutive ratios {np.round(table.ratios(c), 3).tolist()}  flag={table.flags[c]}")
    return EXIT_OK


COMMANDS = {
    "hermite": cmd_hermite,
    "ode": cmd_ode,
    "sde": cmd_sde,
    "sgd": cmd_sgd,
    "compare": cmd_compare,
    "fixed-point": cmd_fixed_point,
    "ou-check": cmd_ou_check,
    "diagnose": cmd_diagnose,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sgd-limits", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML config or run manifest (JSON)")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for ensembles")
        p.add_argument("--seed", type=int, help="base seed (overrides config)")
        p.add_argument("--svg", action="store_true", help="also write SVG line charts")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args.config)
        if cfg.experiment is not None and cfg.experiment != args.command:
            raise ConfigurationError(f"config is for experiment {cfg.experiment!r}, not {args.command!r}")
        changes = {"experiment": args.command}
        if args.out:
            changes["output_dir"] = args.out
        if args.seed is not None:
            changes["seed"] = args.seed
        cfg = cfg.replace(**changes)
        if args.threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {args.threads}")
        run = _Run(args.command, cfg, args.svg)
        return COMMANDS[args.command](run, args.threads)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
