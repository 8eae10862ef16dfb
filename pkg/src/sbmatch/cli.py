"""
Command-line interface.

Subcommands: ``gen``, ``match``, ``fluid``, ``critical``, ``online`` and
``reproduce``. Results go to ``--out`` (JSON, or CSV for graphs and
trajectories) and a JSON summary is printed on stdout. Failures print
``{"code", "message", "context"}`` on stderr and exit nonzero.

The exact matcher accepts bipartite graphs up to 2,000,000 vertices and
general graphs up to 20,000 (``--cap`` overrides either limit).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import criticality, experiments, fluid, io, matcher, online
from .model import ModelError, load_model, sample_sbm

__all__ = ["RunConfig", "run", "main", "build_parser"]

EXIT_USAGE = 2
EXIT_FAILURE = 1


@dataclass
class RunConfig:
    """Parsed command line."""

    subcommand: str
    model: str | None = None
    n: int | None = None
    seed: int = 0
    reps: int = 1
    algo: str = "ks"
    policy: str = "greedy"
    suite: str | None = None
    dt: float = 1e-4
    tol: float = 1e-12
    max_iter: int = 10**6
    cap: int | None = None
    jobs: int | None = None
    out: str | None = None
    graph: str | None = None
    labels: str | None = None
    trajectory: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.reps < 1:
            raise ValueError("--reps must be at least 1")
        if self.n is not None and self.n < 1:
            raise ValueError("--n must be positive")
        if not 0 < self.dt <= 1e-2:
            raise ValueError("--dt must lie in (0, 1e-2]")
        if not 0 < self.tol < 1:
            raise ValueError("--tol must lie in (0, 1)")
        if self.jobs is not None and self.jobs < 1:
            raise ValueError("--jobs must be at least 1")
        if self.out and self.out != "-":
            parent = Path(self.out).resolve().parent
            if not parent.is_dir() or not os.access(parent, os.W_OK):
                raise ValueError(f"output directory {parent} is not writable")


class CLIError(Exception):
    def __init__(self, code: str, message: str, context=None, status=EXIT_FAILURE):
        super().__init__(message)
        self.code, self.message, self.context, self.status = code, message, context or {}, status


def _need(cfg: RunConfig, *names):
    for nm in names:
        if getattr(cfg, nm) is None:
            raise CLIError("missing-argument", f"--{nm.replace('_', '-')} is required",
                           {"subcommand": cfg.subcommand}, EXIT_USAGE)


def _emit(obj, cfg: RunConfig, out_is_json=True) -> str:
    text = io.write_json(obj, cfg.out if out_is_json else None)
    sys.stdout.write(text)
    return text


def _load(cfg: RunConfig):
    _need(cfg, "model")
    return load_model(cfg.model)


def _seed_list(cfg: RunConfig) -> list[int]:
    return [cfg.seed + k for k in range(cfg.reps)]


def _stats(xs) -> tuple[float, float]:
    xs = np.asarray(xs, float)
    se = float(xs.std(ddof=1) / math.sqrt(xs.size)) if xs.size > 1 else 0.0
    return float(xs.mean()), se


def cmd_gen(cfg: RunConfig):
    model = _load(cfg)
    _need(cfg, "n", "out")
    g = sample_sbm(model, cfg.n, np.random.SeedSequence((cfg.seed, 0)))
    gpath, lpath = io.write_graph_csv(g, cfg.out, cfg.labels)
    sys.stdout.write(io.write_json({"n": g.n, "m": g.m, "seed": cfg.seed, "graph_csv": str(gpath),
                                    "labels_csv": str(lpath)}))


class _MatchJob:
    def __init__(self, cfg: RunConfig, model, fixed_graph):
        self.algo, self.model, self.n, self.graph, self.cap = cfg.algo, model, cfg.n, fixed_graph, cfg.cap

    def __call__(self, seed):
        g = self.graph
        if g is None:
            g = sample_sbm(self.model, self.n, np.random.SeedSequence((seed, 0)))
        ms = np.random.SeedSequence((seed, 1))
        if self.algo == "ks":
            r = matcher.karp_sipser(g, ms)
        elif self.algo == "laks":
            r = matcher.label_aware_karp_sipser(g, self.model, ms)
        else:
            k = matcher.exact_matching_number(g, cap=self.cap)
            return {"pairs": k, "n": g.n}
        return {"pairs": r.size, "n": g.n, "phase1_steps": r.phase1_steps,
                "phase2_steps": r.phase2_steps, "isolated_in_phase2": r.isolated_in_phase2}


def cmd_match(cfg: RunConfig):
    if cfg.algo not in ("ks", "laks", "exact"):
        raise CLIError("invalid-argument", f"unknown algorithm {cfg.algo!r}", {"algo": cfg.algo}, EXIT_USAGE)
    model = load_model(cfg.model) if cfg.model else None
    graph = None
    if cfg.graph:
        graph = io.read_graph_csv(cfg.graph, cfg.labels)
    else:
        _need(cfg, "model", "n")
    seeds = _seed_list(cfg)
    runs = experiments.replicate(_MatchJob(cfg, model, graph), seeds, cfg.jobs)
    frac = [2 * r["pairs"] / r["n"] for r in runs]
    mean, se = _stats(frac)
    _emit({"algo": cfg.algo, "n": runs[0]["n"], "seeds": seeds, "mean_matched": mean, "stderr": se,
           "units": "matched-vertex fraction", "runs": runs}, cfg)


def cmd_fluid(cfg: RunConfig):
    model = _load(cfg)
    traj = fluid.integrate_phase1(model, dt=cfg.dt)
    summary = {"tau": traj.tau, "reason": traj.reason, "matched_pairs": traj.matched_pairs,
               "matched_vertex_fraction": traj.matched_vertex_fraction,
               "isolated_fraction": traj.isolated_fraction, "final_F": traj.final.F.tolist()}
    if cfg.out:
        csv_path, side = io.write_trajectory_csv(traj, cfg.out)
        summary["trajectory_csv"] = str(csv_path)
        summary["sidecar"] = str(side)
    sys.stdout.write(io.write_json(summary))


def cmd_critical(cfg: RunConfig):
    model = _load(cfg)
    rep = criticality.is_subcritical(model, tol=cfg.tol, max_iter=cfg.max_iter)
    d = rep.to_dict()
    d["sufficient_condition"] = criticality.sufficient_condition(model)
    _emit(d, cfg)


def cmd_online(cfg: RunConfig):
    model = _load(cfg)
    _need(cfg, "n")
    inst = online.OnlineInstance.from_model(model, cfg.n)
    pol = online.parse_policy(cfg.policy)
    if pol.kind == "brute":
        pol = online.brute(io.cached_dp(inst))
    seeds = _seed_list(cfg)
    counts = online.simulate_many(inst, pol, seeds)
    mean, se = _stats(counts / inst.n)
    out = {"policy": pol.name, "n": inst.n, "seeds": seeds, "mean_matched": mean, "stderr": se,
           "right_sizes": inst.right_sizes.tolist()}
    if cfg.trajectory:
        r = online.simulate(inst, pol, seeds[0], record=True)
        path = Path(cfg.trajectory)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write("t," + ",".join(f"u_{j}" for j in range(inst.q_right)) + "\n")
            np.savetxt(fh, np.column_stack([np.arange(inst.n + 1), r.trajectory]), fmt="%d", delimiter=",")
        out["trajectory_csv"] = str(path)
    _emit(out, cfg)


def cmd_reproduce(cfg: RunConfig):
    _need(cfg, "suite")
    if cfg.suite not in experiments.SUITES:
        raise CLIError("invalid-argument", f"unknown suite {cfg.suite!r}",
                       {"choices": list(experiments.SUITES)}, EXIT_USAGE)
    kwargs = dict(n=cfg.n, reps=cfg.extra.get("reps"), seed=cfg.seed, jobs=cfg.jobs, dt=cfg.dt, tol=cfg.tol)
    kwargs.update({k: v for k, v in cfg.extra.items() if k != "reps"})
    report = experiments.run_suite(cfg.suite, **kwargs)
    for c in report["criteria"]:
        value = report["timing"].get("measured_s") if c["name"] == "runtime_s" else c["value"]
        sys.stderr.write(f"{'PASS' if c['passed'] else 'FAIL'}  {cfg.suite}: {c['name']}  "
                         f"value={value} target={c['target']} tol={c['tolerance']}\n")
    _emit(report, cfg)
    return 0 if report["passed"] else EXIT_FAILURE


COMMANDS = {"gen": cmd_gen, "match": cmd_match, "fluid": cmd_fluid, "critical": cmd_critical,
            "online": cmd_online, "reproduce": cmd_reproduce}


def run(cfg: RunConfig) -> int:
    """Dispatch a validated config. Returns the exit status."""
    try:
        cfg.validate()
        status = COMMANDS[cfg.subcommand](cfg)
        return int(status or 0)
    except CLIError as e:
        err = {"code": e.code, "message": e.message, "context": e.context}
        status = e.status
    except ModelError as e:
        err = {"code": "invalid-model", "message": str(e), "context": {"model": cfg.model}}
        status = EXIT_USAGE
    except fluid.DomainError as e:
        err = {"code": "domain-error", "message": str(e), "context": {"class": e.klass}}
        status = EXIT_FAILURE
    except matcher.OracleSizeError as e:
        err = {"code": "oracle-size", "message": str(e), "context": {"cap": cfg.cap}}
        status = EXIT_FAILURE
    except online.DPMemoryError as e:
        err = {"code": "memory-cap", "message": str(e), "context": {"n": cfg.n}}
        status = EXIT_FAILURE
    except (ValueError, KeyError) as e:
        err = {"code": "invalid-argument", "message": str(e), "context": {"subcommand": cfg.subcommand}}
        status = EXIT_USAGE
    except OSError as e:
        err = {"code": "io-error", "message": str(e), "context": {"path": getattr(e, "filename", None)}}
        status = EXIT_FAILURE
    except criticality.NonConvergence as e:
        err = {"code": "non-convergence", "message": str(e), "context": {"iterations": e.iterations}}
        status = EXIT_FAILURE
    sys.stderr.write(json.dumps(err, default=str) + "\n")
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sbmatch", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)

    def common(sp, n=True):
        sp.add_argument("--model", help="model JSON file")
        if n:
            sp.add_argument("--n", type=int, help="vertex count (arrivals for online)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", help="output path ('-' for stdout only)")
        sp.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")
        return sp

    common(sub.add_parser("gen", help="sample a block-model graph to CSV"))
    sp = common(sub.add_parser("match", help="run a matcher"))
    sp.add_argument("--algo", choices=["ks", "laks", "exact"], default="ks")
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--graph", help="graph CSV (u,v) instead of sampling")
    sp.add_argument("--labels", help="labels CSV (vertex,class); default <graph>.labels.csv")
    sp.add_argument("--cap", type=int, default=None, help="exact-oracle vertex cap")
    sp = common(sub.add_parser("fluid", help="integrate the Phase-1 ODE"), n=False)
    sp.add_argument("--dt", type=float, default=1e-4)
    sp = common(sub.add_parser("critical", help="fixed-point subcriticality report"), n=False)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--max-iter", type=int, default=10**6)
    sp = common(sub.add_parser("online", help="simulate an online policy"))
    sp.add_argument("--policy", default="greedy",
                    help="greedy|degreedy|shortsighted|brute|switch:<T>:<class>")
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--trajectory", help="CSV of remaining right vertices for the first seed")
    sp = common(sub.add_parser("reproduce", help="run a reproduction suite"))
    sp.add_argument("--suite", required=True, choices=list(experiments.SUITES))
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--dt", type=float, default=1e-4)
    sp.add_argument("--tol", type=float, default=1e-12)
    sp.add_argument("--q", type=int, default=None, help="games suite: type count")
    sp.add_argument("--c", type=float, default=None, help="games suite: mean offspring")
    sp.add_argument("--T", type=float, default=None, help="fig5 suite: switch fraction")
    sp.add_argument("--depth", type=int, default=None, help="games suite: recursion depth")
    return p


def _config(ns: argparse.Namespace) -> RunConfig:
    d = vars(ns).copy()
    cfg = RunConfig(subcommand=d.pop("subcommand"))
    extra = {}
    for k, v in d.items():
        k = k.replace("-", "_")
        if cfg.subcommand == "reproduce" and k in ("reps", "q", "c", "T", "depth"):
            if v is not None:
                extra[k] = v
        elif hasattr(cfg, k):
            setattr(cfg, k, v)
    cfg.extra = extra
    if cfg.reps is None:
        cfg.reps = 1
    return cfg


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return run(_config(ns))


if __name__ == "__main__":
    sys.exit(main())
