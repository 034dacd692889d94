"""Command-line harness: config-driven experiment execution.

Config files are flat INI sections; every key has a default and unknown
keys are rejected.  Command-line overrides use repeated
``--set section.key=value``.  Methods: simulate (one trajectory dump), mc,
is, ce, validate (oracle identity suite plus the zero-variance check) and
reproduce (the benchmark comparison grid).

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__, ce, estimate, measure, models, oracle
from . import _dispatch
from .core import RngStream, State

_DEFAULTS = {
    "run": {
        "method": "mc",            # mc | is | ce | validate | reproduce | simulate
        "n_sim": "10000",
        "seed": "1",
        "workers": "0",            # 0: all available cores
        "output_dir": "",          # empty: $PDMPIS_OUTDIR or ./out
    },
    "model": {
        "name": "heated_room",     # heated_room | tiny_ctmc
        "step": "0.01",
        # heated_room parameters
        "x_min": "0.5", "x_max": "5.5", "x_e": "-1.5",
        "beta1": "0.1", "beta2": "5.0", "gamma": "0.01",
        "fail_a": "0.0021", "fail_b": "0.00015", "repair_rate": "0.2",
        "t_f": "100.0", "x0": "7.5", "failures_apply_to": "all",
        # tiny_ctmc parameters
        "a": "0.1", "b": "1.0", "n_comp": "2", "tiny_t_f": "2.0",
    },
    "scheme": {
        "alpha1": "0.915",
        "alpha2": "1.197",
        "theta": "0.0",
    },
    "ce": {
        "alpha0": "0.5,0.5",
        "n_ce": "100",
        "eps": "0.12",
        "max_iters": "20",
        "max_draws_per_step": "1000000",
        "restarts": "1",
    },
    "simulate": {
        "sample_dt": "0.1",        # trajectory.csv output grid
    },
    "reproduce": {
        "is_sizes": "1000,10000,100000",
        "mc_sizes": "1000000",
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    values: dict[str, dict[str, str]] = field(default_factory=dict)

    def get(self, section, key):
        return self.values[section][key]

    def getfloat(self, section, key):
        try:
            return float(self.values[section][key])
        except ValueError as e:
            raise ConfigError(f"[{section}] {key}: {e}") from e

    def getint(self, section, key):
        try:
            return int(self.values[section][key])
        except ValueError as e:
            raise ConfigError(f"[{section}] {key}: {e}") from e

    def to_json(self):
        return json.dumps(self.values, indent=2, sort_keys=True)


def load_config(path=None, overrides=()) -> RunConfig:
    values = {s: dict(kv) for s, kv in _DEFAULTS.items()}
    if path:
        cp = configparser.ConfigParser()
        read = cp.read(path)
        if not read:
            raise ConfigError(f"cannot read config file {path}")
        for section in cp.sections():
            if section not in values:
                raise ConfigError(f"unknown config section [{section}]")
            for key, val in cp.items(section):
                if key not in values[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                values[section][key] = val
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {ov!r}")
        dotted, val = ov.split("=", 1)
        section, key = dotted.split(".", 1)
        if section not in values or key not in values[section]:
            raise ConfigError(f"unknown override target {dotted!r}")
        values[section][key] = val
    return RunConfig(values)


def build_model(cfg: RunConfig):
    name = cfg.get("model", "name")
    if name == "heated_room":
        params = models.HeatedRoomParams(
            x_min=cfg.getfloat("model", "x_min"),
            x_max=cfg.getfloat("model", "x_max"),
            x_e=cfg.getfloat("model", "x_e"),
            beta1=cfg.getfloat("model", "beta1"),
            beta2=cfg.getfloat("model", "beta2"),
            gamma=cfg.getfloat("model", "gamma"),
            fail_a=cfg.getfloat("model", "fail_a"),
            fail_b=cfg.getfloat("model", "fail_b"),
            repair_rate=cfg.getfloat("model", "repair_rate"),
            t_f=cfg.getfloat("model", "t_f"),
            x0=cfg.getfloat("model", "x0"),
            step=cfg.getfloat("model", "step"),
            failures_apply_to=cfg.get("model", "failures_apply_to"),
        )
        return models.heated_room_model(params)
    if name == "tiny_ctmc":
        return models.tiny_ctmc_model(
            cfg.getfloat("model", "a"), cfg.getfloat("model", "b"),
            cfg.getint("model", "n_comp"), cfg.getfloat("model", "tiny_t_f"),
            step=cfg.getfloat("model", "step"),
        )
    raise ConfigError(f"unknown model {name!r}")


def build_scheme(cfg: RunConfig, model):
    if isinstance(model, models.HeatedRoomModel):
        return models.heated_room_scheme(
            model, cfg.getfloat("scheme", "alpha1"), cfg.getfloat("scheme", "alpha2"))
    return models.TiltScheme(model, cfg.getfloat("scheme", "theta"))


def _outdir(cfg: RunConfig):
    out = cfg.get("run", "output_dir") or os.environ.get("PDMPIS_OUTDIR", "out")
    os.makedirs(out, exist_ok=True)
    return out


def _write(out, name, text):
    path = os.path.join(out, name)
    with open(path, "w") as fh:
        fh.write(text)
    return path


def _workers(cfg):
    w = cfg.getint("run", "workers")
    return w if w > 0 else (os.cpu_count() or 1)


def _method_simulate(cfg, model, out):
    rng = RngStream(cfg.getint("run", "seed"), 0)
    res = _dispatch.simulate(model, None, rng)
    sk = res.skeleton
    dt = cfg.getfloat("simulate", "sample_dt")
    rows = ["time,x,mode,h1,h2,h3,md"]
    t_abs = 0.0
    from . import _pyengine

    for e in sk.entries:
        n = max(1, int(math.ceil(e.duration / dt)))
        for i in range(n):
            t_loc = min(i * dt, e.duration)
            x = _pyengine.flow_to(model, e.state.m, e.state.x, t_loc)
            names = (models.heater_statuses(e.state.m)
                     if isinstance(model, models.HeatedRoomModel) else (0, 0, 0))
            rows.append(f"{t_abs + t_loc:.17g},{x[0]:.17g},{e.state.m},"
                        f"{names[0]},{names[1]},{names[2]},{int(e.state.md)}")
        t_abs += e.duration
    _write(out, "trajectory.csv", "\n".join(rows) + "\n")
    summary = {
        "n_jumps": sk.n_jumps, "hit_failure": sk.hit_failure,
        "kinds": [e.kind for e in sk.entries],
    }
    _write(out, "report.json", json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _method_estimate(cfg, model, out, biased):
    seed = cfg.getint("run", "seed")
    n = cfg.getint("run", "n_sim")
    workers = _workers(cfg)
    if biased:
        scheme = build_scheme(cfg, model)
        rep = estimate.importance_sampling(model, scheme, n, RngStream(seed, 0),
                                           workers=workers)
        estimate.write_weights_csv(os.path.join(out, "weights.csv"),
                                   rep.fail_weights)
    else:
        rep = estimate.crude_mc(model, n, RngStream(seed, 0), workers=workers)
    _write(out, "report.json", rep.to_json())
    estimate.append_runs_csv(os.path.join(out, "runs.csv"), rep)
    print(f"{rep.method}: p_hat={rep.p_hat:.6g} ci=({rep.ci95[0]:.6g},"
          f"{rep.ci95[1]:.6g}) n={rep.n_sim} hits={rep.n_hits} "
          f"t_sim={rep.t_sim:.3e}s eff={rep.efficiency:.3e}")
    return 0


def _method_ce(cfg, model, out):
    if not isinstance(model, models.HeatedRoomModel):
        family = models.TiltFamily(model)
        alpha0 = [cfg.getfloat("scheme", "theta")]
    else:
        family = models.HeatedRoomFamily(model)
        alpha0 = [float(v) for v in cfg.get("ce", "alpha0").split(",")]
    cecfg = ce.CeConfig(
        alpha0=np.array(alpha0),
        n_ce=cfg.getint("ce", "n_ce"),
        eps=cfg.getfloat("ce", "eps"),
        max_iters=cfg.getint("ce", "max_iters"),
        max_draws_per_step=cfg.getint("ce", "max_draws_per_step"),
    )
    restarts = cfg.getint("ce", "restarts")
    best = None
    seed = cfg.getint("run", "seed")
    rows = ["restart,iter,n_drawn,n_hits,objective," +
            ",".join(f"alpha{i}" for i in range(len(alpha0)))]
    for r in range(max(1, restarts)):
        trace = ce.ce_optimize(model, family, cecfg, RngStream(seed, r * 10**6))
        for i, it in enumerate(trace.iterations):
            rows.append(f"{r},{i},{it.n_drawn},{it.n_hits},{it.objective:.17g},"
                        + ",".join(f"{a:.17g}" for a in it.alpha))
        if best is None or (trace.converged and not best.converged):
            best = trace
    _write(out, "ce_iters.csv", "\n".join(rows) + "\n")
    _write(out, "report.json", best.to_json())
    print(f"ce: final_alpha={best.final_alpha} converged={best.converged} "
          f"({best.message})")
    return 0


def _method_validate(cfg, model, out):
    tiny = models.tiny_ctmc_model(0.1, 1.0, 2, 2.0)
    table = oracle.compute_ustar_dp(tiny, 1e-3)
    report = oracle.check_ustar_identities(tiny, table)
    scheme = oracle.exact_optimal_scheme(table)
    rep = estimate.importance_sampling(tiny, scheme, 1000, RngStream(314, 0))
    p = scheme.u_cell(0, 0.0)
    w = np.asarray(rep.fail_weights)
    zv_ok = bool(len(w) and np.max(np.abs(w / p - 1.0)) < 1e-5)
    report.add("zero-variance-weights", float(np.max(np.abs(w / p - 1.0))),
               0.0, 1e-5, zv_ok)
    if isinstance(model, models.HeatedRoomModel):
        hr = oracle.check_ustar_identities(
            model, None, RngStream(cfg.getint("run", "seed"), 0), heavy=True)
        report.results.extend(hr.results)
    lines = [str(r) for r in report.results]
    print("\n".join(lines))
    _write(out, "report.json", json.dumps(
        [r.__dict__ for r in report.results], indent=2, sort_keys=True))
    return 0 if report.passed else 3


def _method_reproduce(cfg, model, out):
    if not isinstance(model, models.HeatedRoomModel):
        raise ConfigError("reproduce targets the heated_room benchmark")
    seed = cfg.getint("run", "seed")
    workers = _workers(cfg)
    scheme = build_scheme(cfg, model)
    rows = []
    print(f"{'method':>6} {'N_sim':>9} {'p_hat':>12} {'var_hat':>12} "
          f"{'ci':>28} {'t_sim':>10} {'eff':>10}")
    stream = 0
    for n in [int(v) for v in cfg.get("reproduce", "is_sizes").split(",") if v]:
        rep = estimate.importance_sampling(model, scheme, n,
                                           RngStream(seed, stream), workers=workers)
        stream += n
        rows.append(rep)
    for n in [int(v) for v in cfg.get("reproduce", "mc_sizes").split(",") if v]:
        rep = estimate.crude_mc(model, n, RngStream(seed, stream), workers=workers)
        stream += n
        rows.append(rep)
    for rep in rows:
        estimate.append_runs_csv(os.path.join(out, "comparison.csv"), rep)
        ci = f"[{rep.ci95[0]:.4e},{rep.ci95[1]:.4e}]"
        print(f"{rep.method:>6} {rep.n_sim:>9} {rep.p_hat:>12.4e} "
              f"{rep.var_hat:>12.3e} {ci:>28} {rep.t_sim:>10.2e} "
              f"{rep.efficiency:>10.3e}")
    effs = {r.method: r.efficiency for r in rows}
    if "is" in effs and "mc" in effs and math.isfinite(effs["mc"]):
        print(f"efficiency ratio is/mc: {effs['is'] / effs['mc']:.1f}")
    _write(out, "report.json", json.dumps(
        [json.loads(r.to_json()) for r in rows], indent=2))
    return 0


def run(cfg: RunConfig) -> int:
    """Execute the configured method; returns the process exit code."""
    out = _outdir(cfg)
    _write(out, "resolved_config.json", cfg.to_json())
    model = build_model(cfg)
    method = cfg.get("run", "method")
    if method == "simulate":
        return _method_simulate(cfg, model, out)
    if method == "mc":
        return _method_estimate(cfg, model, out, biased=False)
    if method == "is":
        return _method_estimate(cfg, model, out, biased=True)
    if method == "ce":
        return _method_ce(cfg, model, out)
    if method == "validate":
        return _method_validate(cfg, model, out)
    if method == "reproduce":
        return _method_reproduce(cfg, model, out)
    raise ConfigError(f"unknown method {method!r}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="pdmpis",
        description="PDMP simulation and rare-event importance sampling")
    ap.add_argument("config", nargs="?", help="INI config file")
    ap.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                    help="override one config value (repeatable)")
    ap.add_argument("--method", help="shortcut for --set run.method=...")
    ap.add_argument("--n-sim", help="shortcut for --set run.n_sim=...")
    ap.add_argument("--seed", help="shortcut for --set run.seed=...")
    ap.add_argument("--workers", help="shortcut for --set run.workers=...")
    ap.add_argument("--output-dir", help="shortcut for --set run.output_dir=...")
    ap.add_argument("--version", action="version", version=__version__)
    args = ap.parse_args(argv)
    overrides = list(args.set)
    for key in ("method", "n_sim", "seed", "workers", "output_dir"):
        val = getattr(args, key)
        if val is not None:
            overrides.append(f"run.{key}={val}")
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (ce.InitializationTooWeakError, measure.SupportViolationError,
            ArithmeticError, RuntimeError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
