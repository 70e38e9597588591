"""Command-line experiment runner: ``conc-lab <command> [--config FILE] [flags]``.

A JSON config (validated against a per-command schema, unknown keys
rejected) is merged with command-line flags, flags winning. Every run
writes its artifacts plus ``manifest.json`` into the output directory.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path as FsPath
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import io
from .concentration import (
    LipschitzFunctional,
    martingale_concentration_check,
    thm1_experiment,
)
from .domain import PolyhedralDomain, chamber
from .errors import ConcLabError, ConfigError
from .geometry import certificate, spacing_min_singular
from .paths import MetricKind, PathMetric, make_grid, pairwise_distances
from .rng import STREAM_SAMPLES, member_generator
from .sde import (
    RankModelSpec,
    SdeSystem,
    SimConfig,
    euler_maruyama,
    rank_controls,
    simulate_rank_model,
    synchronous_couple,
)
from .selftest import run_selftest
from .skorokhod import rank_local_times
from .transport import (
    entropy_girsanov,
    orlicz_norm,
    qtci_constant_1d,
    qtci_constants,
    qtci_verify,
    rank_entropy_closed_form,
    wasserstein_exact,
    young_phi,
)

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "localtimes", "certify", "transport", "concentrate", "selftest")
# independent companion ensembles use master_seed + this offset
COMPANION_SEED_OFFSET = 1_000_003

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}
_vec = {"type": "array", "items": {"type": "number"}, "minItems": 1}
_COMMON = {
    "schema_version": {"const": SCHEMA_VERSION},
    "command": {"type": "string"},
    "seed": {"type": "integer", "minimum": 0},
    "out": {"type": "string"},
}
_GRID = {"T": _pos, "dt": _pos, "paths": _count}
_METRICS = [k.value for k in MetricKind]

_SPECIFIC = {
    "simulate": {
        "model": {"enum": ["brownian", "rank"]},
        "n": _count,
        "drift": {"oneOf": [_num, _vec]},
        "sigma": _pos,
        "deltas": _vec,
        "x0": _vec,
        "layout": {"enum": ["wide", "shards"]},
        **_GRID,
    },
    "localtimes": {
        "n": {"type": "integer", "minimum": 2},
        "deltas": _vec,
        "x0": _vec,
        "method": {"enum": ["sp", "occupation", "both"]},
        "eps": _pos,
        **_GRID,
    },
    "certify": {"n": _count, "domain": {"type": "string"}},
    "transport": {
        "task": {"enum": ["wasserstein", "entropy", "orlicz", "qtci-verify", "constants"]},
        "n": _count,
        "drift": _num,
        "drift_a": {"oneOf": [_num, _vec]},
        "drift_b": {"oneOf": [_num, _vec]},
        "sigma": _pos,
        "deltas": _vec,
        "p": {"enum": [1, 2]},
        "metric": {"enum": _METRICS},
        "samples": _count,
        "dump_cost": {"type": "boolean"},
        "K1": {"type": "number", "minimum": 0},
        "K2": {"type": "number", "minimum": 0},
        "K": {"type": "number", "minimum": 0},
        "kappa": _pos,
        **_GRID,
    },
    "concentrate": {
        "statistic": {"enum": ["thm1", "brownian-sup"]},
        "n": _count,
        "deltas": _vec,
        "r_grid": _vec,
        "method": {"enum": ["sp", "occupation"]},
        "eps": _pos,
        "threshold_scale": _pos,
        "C": _pos,
        **_GRID,
    },
    "selftest": {},
}

DEFAULTS = {
    "simulate": {"model": "brownian", "n": 1, "drift": 0.0, "sigma": 1.0, "layout": "wide",
                 "T": 1.0, "dt": 0.01, "paths": 100},
    "localtimes": {"n": 2, "method": "both", "eps": 0.01, "T": 1.0, "dt": 1e-3, "paths": 1000},
    "certify": {},
    "transport": {"task": "qtci-verify", "n": 1, "drift": 0.5, "drift_a": 0.0, "drift_b": 0.5,
                  "sigma": 1.0, "p": 2, "samples": 100_000, "dump_cost": False,
                  "K1": 0.0, "K2": 0.0, "K": 0.0, "kappa": 1.0, "T": 1.0, "dt": 0.01, "paths": 200},
    "concentrate": {"statistic": "brownian-sup", "n": 2, "method": "sp", "eps": 0.01,
                    "T": 1.0, "dt": 1e-3, "paths": 5000},
    "selftest": {},
}


def schema_for(command: str) -> dict:
    return {
        "type": "object",
        "properties": {**_COMMON, **_SPECIFIC[command]},
        "additionalProperties": False,
    }


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="conc-lab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", help="output directory")
        s.add_argument("--n", type=int)
        s.add_argument("--paths", type=int)
        s.add_argument("--T", type=float)
        s.add_argument("--dt", type=float)
        s.add_argument("--deltas", help="comma-separated drifts by rank")
        s.add_argument("--method")
        s.add_argument("--eps", type=float)
        s.add_argument("--layout")
        s.add_argument("--model")
        s.add_argument("--task")
        s.add_argument("--domain", help="domain JSON file (certify)")
        s.add_argument("--samples", type=int)
        s.add_argument("--thm1", action="store_true", help="run the gap-local-time tail experiment")
    return p


_OVERRIDES = ("seed", "out", "n", "paths", "T", "dt", "method", "eps", "layout", "model",
              "task", "domain", "samples")


def resolve_config(args: argparse.Namespace) -> dict:
    config: dict = {"schema_version": SCHEMA_VERSION}
    if args.config:
        try:
            loaded = json.loads(FsPath(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        if "schema_version" not in loaded:
            raise ConfigError("config needs a schema_version")
        config.update(loaded)
    for key in _OVERRIDES:
        value = getattr(args, key)
        if value is not None:
            config[key] = value
    if args.deltas is not None:
        try:
            config["deltas"] = [float(v) for v in args.deltas.split(",")]
        except ValueError as exc:
            raise ConfigError(f"--deltas must be comma-separated numbers: {exc}") from exc
    if args.thm1:
        config["statistic"] = "thm1"
    if config.get("command", args.command) != args.command:
        raise ConfigError(f"config is for command {config['command']!r}, not {args.command!r}")
    try:
        jsonschema.validate(config, schema_for(args.command))
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    resolved = {**DEFAULTS[args.command], **config}
    resolved["command"] = args.command
    resolved.setdefault("seed", 0)
    resolved.setdefault("out", f"conc-lab-out/{args.command}")
    return resolved


def _vector(value, n: int, name: str) -> np.ndarray:
    v = np.broadcast_to(np.asarray(value, dtype=float), (n,)) if np.ndim(value) == 0 else np.asarray(value, dtype=float)
    if v.shape != (n,):
        raise ConfigError(f"{name} needs {n} entries, got {len(v)}")
    return v.copy()


def _grid_config(cfg: dict, seed: Optional[int] = None) -> SimConfig:
    return SimConfig(make_grid(cfg["T"], cfg["dt"]), cfg["paths"], cfg["seed"] if seed is None else seed)


def _rank_spec(cfg: dict) -> RankModelSpec:
    n = cfg["n"]
    deltas = _vector(cfg.get("deltas", 0.0), n, "deltas")
    x0 = _vector(cfg.get("x0", 0.0), n, "x0")
    return RankModelSpec(deltas, x0)


# ---------------------------------------------------------------------------
# commands; each returns the list of files written


def cmd_simulate(cfg: dict, out: FsPath) -> list:
    sim = _grid_config(cfg)
    n = cfg["n"]
    if cfg["model"] == "rank":
        ens = simulate_rank_model(_rank_spec(cfg), sim).raw
    else:
        if "deltas" in cfg:
            raise ConfigError("deltas apply to the rank model; use drift for brownian")
        system = SdeSystem.brownian(_vector(cfg["drift"], n, "drift"), cfg["sigma"], _vector(cfg.get("x0", 0.0), n, "x0"))
        ens = euler_maruyama(system, sim)
    return io.write_ensemble(ens, out, "paths", cfg["layout"])


def cmd_localtimes(cfg: dict, out: FsPath) -> list:
    spec = _rank_spec(cfg)
    re = simulate_rank_model(spec, _grid_config(cfg))
    methods = ["sp", "occupation"] if cfg["method"] == "both" else [cfg["method"]]
    files, summary = [], {}
    header = ["member"] + [f"L{j + 1}{j + 2}" for j in range(spec.n - 1)]
    for method in methods:
        L = rank_local_times(re, chamber(spec.n), method=method, eps=cfg["eps"]).terminal()
        rows = ([m] + [io.fmt(v) for v in row] for m, row in enumerate(L))
        files.append(io._write_rows(out / f"local_times_{method}.csv", header, rows))
        summary[method] = {"mean_terminal": [float(v) for v in L.mean(axis=0)],
                           "mean_max": float(L.max(axis=1).mean())}
    files.append(io.write_json(summary, out / "summary.json"))
    return files


def cmd_certify(cfg: dict, out: FsPath) -> list:
    if "domain" in cfg:
        try:
            domain = PolyhedralDomain.from_dict(json.loads(FsPath(cfg["domain"]).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot read domain file: {exc}") from exc
        u = json.loads(FsPath(cfg["domain"]).read_text()).get("u")
        cert = certificate(domain, u)
        return [io.write_json(cert.to_dict(), out / "certificate.json")]
    if "n" not in cfg:
        raise ConfigError("certify needs --n or --domain")
    n = cfg["n"]
    cert = certificate(chamber(n))
    files = [io.write_json(cert.to_dict(), out / "certificate.json")]
    if n >= 2:
        files.append(io.write_json(spacing_min_singular(n).to_dict(), out / "spacing.json"))
    return files


def _metric(cfg: dict, n: int) -> PathMetric:
    kind = cfg.get("metric", "uniform" if n == 1 else "averaged_uniform")
    return PathMetric.from_dict({"kind": kind})


def cmd_transport(cfg: dict, out: FsPath) -> list:
    task, n = cfg["task"], cfg["n"]
    files = []
    if task == "constants":
        c = qtci_constants(cfg["K1"], cfg["K2"], cfg["K"], cfg["kappa"], cfg["T"], n)
        return [io.write_json(c.to_dict(), out / "constants.json")]
    if task == "orlicz":
        rng = member_generator(cfg["seed"], 0, STREAM_SAMPLES)
        x = np.abs(rng.standard_normal(cfg["samples"]))
        res = orlicz_norm(x)
        report = {"norm_phi": res.norm_phi, "norm_1": res.norm_1, "residual": res.residual,
                  "mean_phi_at_1": float(np.mean(young_phi(x))), "samples": cfg["samples"]}
        return [io.write_json(report, out / "orlicz.json")]
    if task == "entropy":
        spec = _rank_spec(cfg)
        re = simulate_rank_model(spec, _grid_config(cfg))
        report = {"H_simulated": entropy_girsanov(rank_controls(re)),
                  "H_closed_form": rank_entropy_closed_form(spec.deltas, cfg["T"])}
        return [io.write_json(report, out / "entropy.json")]
    metric = _metric(cfg, n)
    if task == "wasserstein":
        a = euler_maruyama(SdeSystem.brownian(_vector(cfg["drift_a"], n, "drift_a"), cfg["sigma"]), _grid_config(cfg))
        b_cfg = _grid_config(cfg, cfg["seed"] + COMPANION_SEED_OFFSET)
        b = euler_maruyama(SdeSystem.brownian(_vector(cfg["drift_b"], n, "drift_b"), cfg["sigma"]), b_cfg)
        dist = pairwise_distances(metric, a, b)
        w, plan = wasserstein_exact(a, b, cfg["p"], distances=dist)
        files.append(io.write_json({"w": w, "metric": metric.to_dict(), "plan": plan.to_dict()}, out / "wasserstein.json"))
        files.append(io._write_rows(out / "plan.csv", ["member", "partner", "distance"],
                                    ((i, int(j), io.fmt(dist[i, j])) for i, j in enumerate(plan.assignment))))
        if cfg["dump_cost"]:
            files.append(io.write_cost_matrix(dist ** cfg["p"], out / "cost_matrix.csv"))
        return files
    # qtci-verify: Brownian motion against its constant-drift shift, synchronously coupled
    c, sigma, T = cfg["drift"], cfg["sigma"], cfg["T"]
    P = SdeSystem.brownian(np.zeros(n), sigma)
    Q = SdeSystem.brownian(np.full(n, c), sigma)
    sim = _grid_config(cfg)
    p_ens, q_ens = synchronous_couple(P, Q, sim)
    baseline = euler_maruyama(P, _grid_config(cfg, cfg["seed"] + COMPANION_SEED_OFFSET))
    C = qtci_constant_1d(0.0, 0.0, sigma, T)
    H = n * c * c * T / (2.0 * sigma * sigma)
    rep = qtci_verify(p_ens, q_ens, C, H, cfg["p"], metric, baseline)
    report = rep.to_dict()
    report["synchronous_distance"] = abs(c) * T
    files.append(io.write_json(report, out / "slack_report.json"))
    if cfg["dump_cost"]:
        files.append(io.write_cost_matrix(pairwise_distances(metric, p_ens, q_ens) ** cfg["p"], out / "cost_matrix.csv"))
    return files


def cmd_concentrate(cfg: dict, out: FsPath) -> list:
    n, T = cfg["n"], cfg["T"]
    sim = _grid_config(cfg)
    if cfg["statistic"] == "thm1":
        deltas = _vector(cfg.get("deltas", 0.0), n, "deltas")
        rep = thm1_experiment(n, deltas, T, sim, cfg.get("r_grid"), cfg["method"], cfg["eps"],
                              cfg.get("threshold_scale"))
    else:
        # sup_t |W_1(t)| for n-dimensional Brownian motion; Lipschitz sqrt(n) under the averaged metric
        ens = euler_maruyama(SdeSystem.brownian(np.zeros(n)), sim)
        f = LipschitzFunctional(lambda w: float(np.max(np.abs(w.values[:, 0]))), math.sqrt(n),
                                PathMetric.averaged_uniform())
        C = cfg.get("C", 4.0 * T / n)
        rep = martingale_concentration_check(f, ens, C, cfg.get("r_grid"))
    files = [
        io.write_json(rep.to_dict(), out / "tail_report.json"),
        io.write_tail_csv(rep, out / "tail_report.csv"),
        io._write_rows(out / "samples.csv", ["member", "value"],
                       ((i, io.fmt(v)) for i, v in enumerate(rep.samples))),
    ]
    return files


def cmd_selftest(cfg: dict, out: FsPath) -> list:
    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    path = io.write_json({"checks": [r.__dict__ for r in results],
                          "passed": all(r.passed for r in results)}, out / "selftest.json")
    if not all(r.passed for r in results):
        raise _SelftestFailed([path])
    return [path]


class _SelftestFailed(ConcLabError):
    exit_code = 3

    def __init__(self, files):
        super().__init__("selftest failed")
        self.files = files


HANDLERS = {
    "simulate": cmd_simulate,
    "localtimes": cmd_localtimes,
    "certify": cmd_certify,
    "transport": cmd_transport,
    "concentrate": cmd_concentrate,
    "selftest": cmd_selftest,
}


def run(command: str, argv: Sequence[str]) -> int:
    return main([command, *argv])


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        out = FsPath(cfg["out"])
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
        try:
            files = HANDLERS[args.command](cfg, out)
        except _SelftestFailed as exc:
            io.write_manifest(out, args.command, cfg, cfg["seed"], exc.files)
            raise
        except ValueError as exc:
            if isinstance(exc, ConcLabError):
                raise
            raise ConfigError(str(exc)) from exc
        io.write_manifest(out, args.command, cfg, cfg["seed"], files)
    except ConcLabError as exc:
        print(f"conc-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"wrote {len(files)} file(s) and manifest.json to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
