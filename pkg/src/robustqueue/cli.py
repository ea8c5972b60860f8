"""Command-line driver: ``robustqueue {solve,simulate,mcp,classes,converge}``.

Every subcommand reads one YAML/JSON config and writes into
``OUT/<hash>/`` where ``<hash>`` is derived from the effective config.
Exit codes: 0 success, 2 config error, 3 solver non-convergence.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .hjb import HJBConvergenceError, StructureError, solve_hjb, two_mode_threshold
from .mcp_sim import estimate_mcp_value
from .queue_sim import (SCHEDULERS, Feedback, IIDRandom, Static, SystemConfig, mean_ci,
                        normalize_costs, run_replications, simulate, replication_rng)
from .uncertainty import (class_from_config, decision_regions, gamma_limit_class,
                          hausdorff_distance)

log = logging.getLogger("robustqueue")

EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(ValueError):
    def __init__(self, field_name, msg):
        super().__init__(f"config field '{field_name}': {msg}")
        self.field = field_name


@dataclass
class ExperimentConfig:
    classes: list
    h: tuple
    order: tuple
    cost_scale: float
    scheduler: str = "cmu"
    adversaries: list = field(default_factory=lambda: [{"kind": "feedback"}])
    n_list: list = field(default_factory=lambda: [100, 400, 1600])
    replications: int = 200
    seed: int = 0
    x_max: float = 20.0
    step: float = 1e-3
    tol: float = 1e-6
    T: float = 25.0
    h_euler: float = 1e-3
    w0: float = 0.0
    mcp_replications: int = 2000
    raw: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def system(self, n: int) -> SystemConfig:
        return SystemConfig(n, tuple(self.classes), self.h, self.T, self.seed)


def _get(d, key, kind, default=None, required=False):
    if key not in d:
        if required:
            raise ConfigError(key, "missing")
        return default
    try:
        return kind(d[key])
    except (TypeError, ValueError) as e:
        raise ConfigError(key, str(e)) from None


def load_config(path, seed=None) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError("<file>", str(e)) from None
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    if seed is not None:
        raw["seed"] = int(seed)

    if not isinstance(raw.get("classes"), list) or not raw["classes"]:
        raise ConfigError("classes", "must be a nonempty list")
    classes = []
    for i, c in enumerate(raw["classes"]):
        try:
            classes.append(class_from_config(c))
        except KeyError as e:
            raise ConfigError(f"classes[{i}].{e.args[0]}", "missing") from None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"classes[{i}]", str(e)) from None
    h = raw.get("h", [1.0] * len(classes))
    if not isinstance(h, list) or len(h) != len(classes):
        raise ConfigError("h", "need one holding cost per class")
    if any(not isinstance(x, (int, float)) or x <= 0 for x in h):
        raise ConfigError("h", "holding costs must be positive numbers")
    classes, h, order, scale = normalize_costs(classes, [float(x) for x in h])
    if abs(sum(1.0 / c.mu for c in classes) - 1.0) > 1e-12:
        raise ConfigError("classes", "heavy traffic requires sum of 1/mu equal to 1")

    scheduler = raw.get("scheduler", "cmu")
    if scheduler not in SCHEDULERS:
        raise ConfigError("scheduler", f"must be one of {SCHEDULERS}")
    adv = raw.get("adversary", {"kind": "feedback"})
    adversaries = adv if isinstance(adv, list) else [adv]
    for a in adversaries:
        if not isinstance(a, dict) or a.get("kind") not in ("feedback", "static", "iid"):
            raise ConfigError("adversary", "kind must be feedback, static or iid")
    n_list = raw.get("n_list", [100, 400, 1600])
    if (not isinstance(n_list, list) or not n_list
            or any(not isinstance(n, int) or n < 1 for n in n_list)
            or n_list != sorted(n_list)):
        raise ConfigError("n_list", "must be a nonempty ascending list of positive integers")
    solver = raw.get("solver", {}) or {}
    sim = raw.get("sim", {}) or {}
    cfg = ExperimentConfig(
        classes=list(classes), h=h, order=order, cost_scale=scale,
        scheduler=scheduler, adversaries=adversaries, n_list=n_list,
        replications=_get(raw, "replications", int, 200),
        seed=_get(raw, "seed", int, 0),
        x_max=_get(solver, "x_max", float, 20.0),
        step=_get(solver, "step", float, 1e-3),
        tol=_get(solver, "tol", float, 1e-6),
        T=_get(sim, "T", float, 25.0),
        h_euler=_get(sim, "h_euler", float, 1e-3),
        w0=_get(sim, "w0", float, 0.0),
        mcp_replications=_get(sim, "mcp_replications", int, 2000),
        raw=raw,
    )
    if cfg.replications < 2:
        raise ConfigError("replications", "need at least 2")
    if not (cfg.x_max > 0 and 0 < cfg.step <= cfg.x_max / 100 and cfg.tol > 0):
        raise ConfigError("solver", "need x_max > 0, 0 < step <= x_max/100, tol > 0")
    if not (cfg.T > 0 and cfg.h_euler > 0 and cfg.w0 >= 0):
        raise ConfigError("sim", "need T > 0, h_euler > 0, w0 >= 0")
    return cfg


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for r in rows:
            f.write(",".join(_fmt(x) for x in r) + "\n")


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _solve(cfg):
    return solve_hjb(cfg.classes, cfg.x_max, cfg.step, cfg.tol)


def _threshold(sol, cfg):
    out = {}
    for l, c in enumerate(cfg.classes):
        if len(c.points) == 2 and c.points[0].b != c.points[1].b:
            try:
                out[str(l + 1)] = two_mode_threshold(sol, c, l)
            except StructureError as e:
                out[str(l + 1)] = f"structure error: {e}"
    return out


def _adversary(spec, cfg, sol):
    kind = spec["kind"]
    if kind == "feedback":
        return Feedback(sol, cfg.classes)
    # points/weights are given in the config's original type order
    pts = [spec["points"][i] for i in cfg.order]
    if kind == "static":
        return Static(pts)
    return IIDRandom(pts, [spec["weights"][i] for i in cfg.order])


def _adversary_label(spec):
    if spec["kind"] == "static":
        return "static:" + ";".join(f"{p[0]}/{p[1]}" for p in spec["points"])
    return spec["kind"]


def cmd_solve(cfg, out: Path, jobs=1):
    sol = _solve(cfg)
    sol.to_csv(out / "hjb.csv")
    summary = {"u0": sol.u0, "residual": sol.residual, "iterations": sol.iterations,
               "x_max": sol.x_max, "step": sol.step}
    w_star = _threshold(sol, cfg)
    if w_star:
        summary["w_star"] = w_star
    _write_json(out / "solve.json", summary)
    return summary


def _sim_summary(cfg, n, adversary, jobs):
    system = cfg.system(n)
    runs = run_replications(system, adversary, cfg.scheduler, cfg.replications, jobs)
    est = mean_ci([r.cost for r in runs])
    return {
        "n": n,
        "cost_mean": est.mean,
        "cost_ci95": est.ci95,
        "rsp_gap_median": float(np.median([r.rsp_gap.max() for r in runs])),
        "high_priority_sup_median": float(np.median([r.high_priority_sup for r in runs])),
        "clamp_count": int(sum(r.clamp_count for r in runs)),
    }


def cmd_simulate(cfg, out: Path, jobs=1):
    sol = _solve(cfg) if any(a["kind"] == "feedback" for a in cfg.adversaries) else None
    adversary = _adversary(cfg.adversaries[0], cfg, sol)
    summaries = []
    for n in cfg.n_list:
        path = simulate(cfg.system(n), adversary, cfg.scheduler, replication_rng(cfg.seed, 0))
        path.to_csv(out / f"path_n{n}.csv")
        s = _sim_summary(cfg, n, adversary, jobs)
        _write_json(out / f"summary_n{n}.json", s)
        summaries.append(s)
    return summaries


def cmd_mcp(cfg, out: Path, jobs=1):
    sol = _solve(cfg)
    est = estimate_mcp_value(sol, cfg.classes, cfg.w0, cfg.mcp_replications, cfg.seed,
                             cfg.h_euler, cfg.T)
    summary = {"w0": cfg.w0, "mean": est.mean, "ci95": est.ci95, "h": cfg.h_euler,
               "T": cfg.T, "replications": cfg.mcp_replications, "u_w0": float(sol.value(cfg.w0))}
    _write_json(out / "mcp.json", summary)
    return summary


def cmd_classes(cfg, out: Path, jobs=1, grid=41):
    report = []
    g = np.linspace(0.0, 1.0, grid)
    v = np.array([(a, b) for a in g for b in g if a > 0 or b > 0])
    for l, c in enumerate(cfg.classes):
        entry = {
            "type": l + 1,
            "mu": c.mu,
            "points": len(c.points),
            "hull_vertices": [list(p) for p in c.hull_vertices],
            "dominating": [list(p) for p in c.dominating],
            "extreme_dominating": [list(p) for p in c.extreme_dominating],
        }
        if c.family == "gamma" and c.meta:
            m = c.meta
            finer = gamma_limit_class(c.mu, m["beta1"], m["beta2"], m["alpha1"], m["alpha2"],
                                      2 * m["resolution"], m["b_range"])
            entry["hausdorff_r_2r"] = hausdorff_distance(c.points, finer.points)
        report.append(entry)
        labels = decision_regions(c, v)
        ed = c.extreme_dominating
        _write_csv(out / f"regions_type{l + 1}.csv", ["v1", "v2", "label", "b", "q"],
                   [(a, b, int(k), ed[k].b, ed[k].q) for (a, b), k in zip(v, labels)])
    _write_json(out / "classes.json", report)
    return report


def cmd_converge(cfg, out: Path, jobs=1):
    sol = _solve(cfg)
    u0 = sol.u0
    rows = []
    for spec in cfg.adversaries:
        adversary = _adversary(spec, cfg, sol)
        for n in cfg.n_list:
            s = _sim_summary(cfg, n, adversary, jobs)
            rows.append((_adversary_label(spec), n, s["cost_mean"], s["cost_ci95"],
                         abs(s["cost_mean"] - u0), s["rsp_gap_median"],
                         s["high_priority_sup_median"]))
    mcp = estimate_mcp_value(sol, cfg.classes, 0.0, cfg.mcp_replications, cfg.seed,
                             cfg.h_euler, cfg.T)
    rows.append(("mcp", "inf", mcp.mean, mcp.ci95, abs(mcp.mean - u0), "", ""))
    header = ["adversary", "n", "cost_mean", "cost_ci95", "abs_err_u0",
              "rsp_gap_median", "high_priority_sup_median"]
    _write_csv(out / "converge.csv", header, rows)
    _write_json(out / "converge.json", {"u0": u0, "rows": [dict(zip(header, r)) for r in rows]})
    return rows


COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "mcp": cmd_mcp,
    "classes": cmd_classes,
    "converge": cmd_converge,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="robustqueue",
        description="Solve, simulate and cross-check the robust multitype queue game.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="YAML or JSON experiment config")
        s.add_argument("--out", default="runs", help="output root directory")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--jobs", type=int, default=1, help="parallel replication workers")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out) / cfg.digest
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.raw)
    try:
        COMMANDS[args.command](cfg, out, args.jobs)
    except HJBConvergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except (KeyError, IndexError, TypeError, ValueError) as e:
        print(f"error: invalid configuration for {args.command}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
