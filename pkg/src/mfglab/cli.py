"""Experiment harness tying the laboratory together.

One experiment per invocation: a subcommand selects the experiment, a
schema of typed keys configures it, and every run leaves behind

* ``metrics.csv``     - the quantities of interest, one header row,
                        floats with 17 significant digits,
* ``run-manifest.txt``- the fully resolved configuration, seed,
                        package version and active backend,
* checkpoints         - for training runs.

Configuration values resolve in three layers: schema defaults, then a
``key = value`` config file (section per subcommand), then explicit
command-line flags.  Unknown keys anywhere are rejected with exit code
1.  Exit codes: 0 success, 1 configuration error, 2 numerical abort.
The default output directory comes from MFGLAB_OUTDIR when set.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__, backends
from .dynamics import make_toy
from .dynamics.weak_error import TEST_FUNCTIONS, weak_error_table
from .fdr import (SchedulerState, fdr1_gap, fdr2_gap, sample_sde_trajectory,
                  scripted_scheduler_run)
from .gancore import (LOG4, GridDensity, gan_value, js_divergence,
                      optimal_discriminator)
from .mfg import (NumericalAbort, SolverConfig, TRACE_COLUMNS,
                  make_test_problem, train_mfgan)
from .nets import save_checkpoint

ENV_OUTDIR = "MFGLAB_OUTDIR"

TOY_NAMES = ("bilinear", "linear", "quadratic", "coupled")


class ConfigError(Exception):
    """A configuration key, value or file is invalid."""


def _float_list(text):
    try:
        values = tuple(float(tok) for tok in str(text).split(",") if tok.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated floats, got {text!r}")
    if not values:
        raise ConfigError(f"expected at least one float in {text!r}")
    return values


@dataclass(frozen=True)
class Key:
    """One typed entry of a subcommand's configuration schema."""

    parse: type
    default: object
    help: str
    choices: tuple = ()
    aliases: tuple = ()


SCHEMAS = {
    "mfg-train": {
        "dim": Key(int, 1, "problem dimension", choices=(1, 4)),
        "outer_iters": Key(int, 20_000, "outer iterations", aliases=("--outer",)),
        "n_theta": Key(int, 1, "value-net inner steps per outer iteration"),
        "n_omega": Key(int, 1, "density-net inner steps per outer iteration"),
        "batch_d": Key(int, 128, "density-phase sample batch size"),
        "batch_g": Key(int, 128, "value-phase sample batch size"),
        "beta_d": Key(float, 1.0, "weight of the coupled residual in the density loss"),
        "beta_g": Key(float, 1.0, "weight of the boundary term in the value loss"),
        "lambda_u": Key(float, 1.0, "weight of the level pins (mean of u, mean of log-density)"),
        "rate_d": Key(float, 1e-3, "density-net learning rate"),
        "rate_g": Key(float, 1e-3, "value-net learning rate"),
        "optimizer": Key(str, "adam", "parameter update rule",
                         choices=("adam", "plain")),
        "depth": Key(int, 3, "hidden layers per network"),
        "width": Key(int, 50, "units per hidden layer"),
        "eval_grid": Key(int, 256, "1D evaluation grid size"),
        "eval_points": Key(int, 10_000, "evaluation sample count for dim > 1"),
        "eval_every": Key(int, 100, "iterations between metric rows"),
        "checkpoint_every": Key(int, 0, "iterations between checkpoints (0 = final only)"),
        "seed": Key(int, 0, "master seed"),
    },
    "sde-compare": {
        "toy": Key(str, "linear", "toy problem", choices=TOY_NAMES),
        "mode": Key(str, "both", "update scheme(s) to compare",
                    choices=("alt", "sml", "both")),
        "etas": Key(_float_list, (0.05, 0.02, 0.01), "learning rates, comma-separated"),
        "replicas": Key(int, 100_000, "independent chains per learning rate"),
        "horizon": Key(float, 1.0, "time horizon of the comparison"),
        "test_function": Key(str, "theta", "observable",
                             choices=tuple(sorted(TEST_FUNCTIONS))),
        "batch_size": Key(int, 2, "minibatch size of the discrete updates"),
        "dt_ratio": Key(int, 50, "SDE substeps per discrete step"),
        "seed": Key(int, 0, "master seed"),
    },
    "fdr-probe": {
        "toy": Key(str, "quadratic", "toy problem", choices=TOY_NAMES),
        "mode": Key(str, "alt", "dynamics to sample", choices=("alt", "sml")),
        "steps": Key(int, 50_000, "integrator steps per trajectory"),
        "dt": Key(float, 0.01, "integrator step size"),
        "chains": Key(int, 8, "parallel chains"),
        "etas": Key(_float_list, (0.04, 0.02, 0.01), "learning rates, comma-separated"),
        "beta": Key(float, 800.0, "inverse temperature (0 = derive 2B/eta)"),
        "batch_size": Key(int, 2, "batch size entering the derived beta"),
        "seed": Key(int, 0, "master seed"),
    },
    "schedule-demo": {
        "eta0": Key(float, 0.2, "initial learning rate"),
        "epsilon": Key(float, 0.05, "trigger tolerance around ratio 1"),
        "delta": Key(float, 0.1, "decay factor per trigger"),
        "batch_size": Key(int, 2, "batch size entering beta"),
        "stream": Key(str, "linear:3:1:100",
                      "scripted ratio stream, linear:a:b:n or const:r:n"),
        "seed": Key(int, 0, "master seed (recorded; stream is deterministic)"),
    },
    "gan-demo": {
        "pr": Key(str, "0:0.5,1:0.5", "real density as atom:mass pairs"),
        "pg": Key(str, "0:0.5,1:0.5", "generated density as atom:mass pairs"),
        "seed": Key(int, 0, "master seed (recorded; computation is closed-form)"),
    },
}


class _Parser(argparse.ArgumentParser):
    """argparse with configuration-error exit code 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--outdir", default=None,
                        help="output directory (default: $%s or ./mfglab-runs/<subcommand>)"
                        % ENV_OUTDIR)
    common.add_argument("--config", default=None,
                        help="key = value config file with a section per subcommand")
    common.add_argument("--backend", default=None,
                        choices=("auto", "compiled", "python"),
                        help="jet kernel backend override")
    parser = _Parser(prog="mfglab",
                     description="numerical laboratory for adversarial "
                                 "mean-field-game solvers and GAN training dynamics")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, parents=[common])
        for key, spec in schema.items():
            flags = ("--" + key.replace("_", "-"),) + spec.aliases
            kwargs = {"dest": key, "default": None, "help": spec.help}
            if spec.choices:
                if spec.parse in (int, float):
                    kwargs["type"] = spec.parse
                kwargs["choices"] = spec.choices
            elif spec.parse is _float_list:
                kwargs["type"] = str
            else:
                kwargs["type"] = spec.parse
            p.add_argument(*flags, **kwargs)
    return parser


def _parse_value(key, spec, raw):
    if isinstance(raw, str):
        try:
            value = spec.parse(raw)
        except ConfigError:
            raise
        except (TypeError, ValueError):
            raise ConfigError(f"invalid value for key '{key}': {raw!r}")
    else:
        value = raw
    if spec.choices and value not in spec.choices:
        raise ConfigError(f"invalid value for key '{key}': {value!r} "
                          f"(choose from {', '.join(map(str, spec.choices))})")
    return value


def _read_config_file(path, subcommand, schema):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    read = cp.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    for section in cp.sections():
        if section not in SCHEMAS:
            raise ConfigError(f"unknown config section '{section}' in {path}")
    values = {}
    if cp.has_section(subcommand):
        for key, raw in cp.items(subcommand):
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' in section "
                                  f"'{subcommand}' of {path}")
            values[key] = _parse_value(key, schema[key], raw)
    return values


def resolve_config(subcommand, args):
    """Layer defaults, config file and explicit flags into one dict."""
    schema = SCHEMAS[subcommand]
    resolved = {key: spec.default for key, spec in schema.items()}
    if args.config is not None:
        resolved.update(_read_config_file(args.config, subcommand, schema))
    for key, spec in schema.items():
        raw = getattr(args, key)
        if raw is not None:
            resolved[key] = _parse_value(key, spec, raw)
    return resolved


def _fmt_metric(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_metrics(path, columns, rows):
    """Comma-separated metrics with one header row, 17-digit floats."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            if isinstance(row, dict):
                row = [row[c] for c in columns]
            fh.write(",".join(_fmt_metric(v) for v in row) + "\n")


def _fmt_manifest(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_fmt_manifest(v) for v in value)
    return str(value)


def write_manifest(outdir, subcommand, resolved):
    lines = [
        "mfglab run manifest",
        f"version = {__version__}",
        f"backend = {backends.active()}",
        f"subcommand = {subcommand}",
        f"outdir = {outdir}",
    ]
    for key in sorted(resolved):
        lines.append(f"{key} = {_fmt_manifest(resolved[key])}")
    path = os.path.join(outdir, "run-manifest.txt")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _parse_density(text, label):
    atoms, weights = [], []
    for token in str(text).split(","):
        token = token.strip()
        if not token:
            continue
        atom, sep, mass = token.partition(":")
        if not sep:
            raise ConfigError(f"invalid value for key '{label}': token {token!r} "
                              "is not atom:mass")
        try:
            atoms.append(int(atom) if atom.strip().lstrip("+-").isdigit()
                         else float(atom))
            weights.append(float(mass))
        except ValueError:
            raise ConfigError(f"invalid value for key '{label}': token {token!r}")
    if not atoms:
        raise ConfigError(f"invalid value for key '{label}': no atoms in {text!r}")
    try:
        return GridDensity.from_weights(atoms, weights)
    except ValueError as exc:
        raise ConfigError(f"invalid value for key '{label}': {exc}")


def _run_mfg_train(outdir, cfg):
    solver_cfg = SolverConfig(**{k: v for k, v in cfg.items()})
    problem, oracle = make_test_problem(solver_cfg.dim)
    write_manifest(outdir, "mfg-train", cfg)
    metrics_path = os.path.join(outdir, "metrics.csv")
    try:
        result = train_mfgan(problem, solver_cfg, oracle=oracle, outdir=outdir)
    except NumericalAbort as exc:
        write_metrics(metrics_path, TRACE_COLUMNS, [])
        print(f"numerical abort: {exc}", file=sys.stderr)
        print(f"checkpoint: {os.path.join(outdir, 'u_abort.ckpt')}", file=sys.stderr)
        print(f"checkpoint: {os.path.join(outdir, 'm_abort.ckpt')}", file=sys.stderr)
        return 2
    write_metrics(metrics_path, TRACE_COLUMNS, result.trace)
    save_checkpoint(os.path.join(outdir, "u_final.ckpt"), result.u_net, result.theta)
    m_params = np.concatenate([result.omega, [result.hbar]])
    save_checkpoint(os.path.join(outdir, "m_final.ckpt"), result.m_net, m_params,
                    extra_scalars=1)
    if result.trace:
        last = result.trace[-1]
        print("iterations %d  rel_l2_u %.4g  rel_l2_m %.4g  hbar %.6g  (%.1f s)"
              % (last["outer_iter"], last["rel_l2_u"], last["rel_l2_m"],
                 last["hbar"], result.seconds))
    else:
        print("no iterations requested; wrote manifest and empty metrics")
    print(f"wrote {metrics_path}")
    return 0


def _run_sde_compare(outdir, cfg):
    write_manifest(outdir, "sde-compare", cfg)
    toy = make_toy(cfg["toy"])
    modes = ("sml", "alt") if cfg["mode"] == "both" else (cfg["mode"],)
    rows, curves = [], []
    for mode in modes:
        result = weak_error_table(
            toy, cfg["test_function"], etas=cfg["etas"],
            replicas=cfg["replicas"], mode=mode, horizon=cfg["horizon"],
            batch_size=cfg["batch_size"], dt_ratio=cfg["dt_ratio"],
            seed=cfg["seed"])
        for eta, error, se in result.rows:
            rows.append((mode, eta, error, se, result.slope))
        for det in result.details:
            for t, md, ms in zip(det["times"], det["discrete_mean"],
                                 det["sde_mean"]):
                curves.append((mode, det["eta"], t, md, ms))
        flag = "  INCONCLUSIVE (errors within 3 standard errors of zero)" \
            if result.inconclusive else ""
        print("mode %s  slope %.3f +- %.3f%s"
              % (mode, result.slope, result.slope_se, flag))
        for eta, error, se in result.rows:
            print("  eta %-7g max weak error %.6g +- %.2g" % (eta, error, se))
    metrics_path = os.path.join(outdir, "metrics.csv")
    write_metrics(metrics_path,
                  ("mode", "eta", "max_weak_error", "std_error", "slope"), rows)
    write_metrics(os.path.join(outdir, "weak_error_curves.csv"),
                  ("mode", "eta", "time", "discrete_mean", "sde_mean"), curves)
    print(f"wrote {metrics_path}")
    return 0


FDR_COLUMNS = ("row", "relation", "eta", "lhs", "lhs_se", "rhs_beta_term",
               "rhs_beta_se", "rhs_eta_term", "rhs_eta_se", "gap", "gap_se",
               "ratio", "n_samples", "drift_detected")


def _run_fdr_probe(outdir, cfg):
    write_manifest(outdir, "fdr-probe", cfg)
    toy = make_toy(cfg["toy"])
    mode = cfg["mode"]
    rows = []
    for e_idx, eta in enumerate(cfg["etas"]):
        beta = cfg["beta"] if cfg["beta"] > 0 else 2.0 * cfg["batch_size"] / eta
        rng = np.random.default_rng([cfg["seed"], 37, e_idx])
        samples = sample_sde_trajectory(
            toy, mode, eta=eta, n_steps=cfg["steps"], dt=cfg["dt"],
            chains=cfg["chains"], rng=rng, batch_size=cfg["batch_size"],
            beta=beta)
        est1 = fdr1_gap(samples, toy, eta=eta if mode == "alt" else 0.0,
                        beta=beta)
        est2 = fdr2_gap(samples, toy, beta=beta)
        for relation, est in (("fdr1", est1), ("fdr2", est2)):
            rows.append((len(rows), relation, eta, est.lhs, est.lhs_se,
                         est.rhs_beta_term, est.rhs_beta_se, est.rhs_eta_term,
                         est.rhs_eta_se, est.gap, est.gap_se, est.ratio,
                         est.n_samples, est.drift_detected))
            print("%s eta %-6g lhs %10.4g rhs %10.4g gap %10.3g +- %.3g "
                  "ratio %.4f%s"
                  % (relation, eta, est.lhs,
                     est.rhs_beta_term + est.rhs_eta_term, est.gap, est.gap_se,
                     est.ratio, "  DRIFT" if est.drift_detected else ""))
    metrics_path = os.path.join(outdir, "metrics.csv")
    write_metrics(metrics_path, FDR_COLUMNS, rows)
    print(f"wrote {metrics_path}")
    return 0


def _parse_stream(text):
    parts = str(text).split(":")
    try:
        if parts[0] == "linear" and len(parts) == 4:
            a, b, n = float(parts[1]), float(parts[2]), int(parts[3])
            return np.linspace(a, b, n)
        if parts[0] == "const" and len(parts) == 3:
            return np.full(int(parts[2]), float(parts[1]))
    except ValueError:
        pass
    raise ConfigError(f"invalid value for key 'stream': {text!r} "
                      "(expected linear:a:b:n or const:r:n)")


def _run_schedule_demo(outdir, cfg):
    write_manifest(outdir, "schedule-demo", cfg)
    ratios = _parse_stream(cfg["stream"])
    state = SchedulerState(eta0=cfg["eta0"], epsilon=cfg["epsilon"],
                           delta=cfg["delta"], batch_size=cfg["batch_size"])
    final, events = scripted_scheduler_run(state, ratios)
    rows = [(e["step"], e["ratio"], e["triggered"], e["eta_after"])
            for e in events]
    metrics_path = os.path.join(outdir, "metrics.csv")
    write_metrics(metrics_path, ("step", "ratio", "triggered", "eta"), rows)
    triggers = [e["step"] for e in events if e["triggered"]]
    print("steps %d  triggers %d  first trigger %s  final eta %.10g "
          "(= eta0 * (1-delta)^%d)"
          % (len(events), final.trigger_count,
             triggers[0] if triggers else "none", final.eta,
             final.trigger_count))
    print(f"wrote {metrics_path}")
    return 0


def _run_gan_demo(outdir, cfg):
    write_manifest(outdir, "gan-demo", cfg)
    pr = _parse_density(cfg["pr"], "pr")
    pg = _parse_density(cfg["pg"], "pg")
    disc = optimal_discriminator(pr, pg)
    value = gan_value(disc, pr, pg)
    js = js_divergence(pr, pg)
    identity = -LOG4 + 2.0 * js
    rows = [(0, value, identity, js)]
    print("quantity                         value")
    print("value at optimal discriminator   %.12f" % value)
    print("-log 4 + 2 JS                    %.12f" % identity)
    print("JS divergence                    %.12f" % js)
    print("-log 4                           %.12f" % -LOG4)
    metrics_path = os.path.join(outdir, "metrics.csv")
    write_metrics(metrics_path,
                  ("row", "gan_value", "minus_log4_plus_2js", "js_divergence"),
                  rows)
    print(f"wrote {metrics_path}")
    return 0


RUNNERS = {
    "mfg-train": _run_mfg_train,
    "sde-compare": _run_sde_compare,
    "fdr-probe": _run_fdr_probe,
    "schedule-demo": _run_schedule_demo,
    "gan-demo": _run_gan_demo,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.backend is not None:
            backends.set_backend(args.backend)
        cfg = resolve_config(args.subcommand, args)
        outdir = args.outdir
        if outdir is None:
            outdir = os.environ.get(ENV_OUTDIR) \
                or os.path.join("mfglab-runs", args.subcommand)
        os.makedirs(outdir, exist_ok=True)
    except (ConfigError, RuntimeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        return RUNNERS[args.subcommand](outdir, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
