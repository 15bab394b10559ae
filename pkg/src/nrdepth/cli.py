"""Command-line entry point: ``nrdepth {synth,solve,eval,segment,rankcheck,gradcheck}``.

Exit codes: 0 success, 2 usage, 3 configuration, 4 dimension/domain, 5 input,
6 degenerate geometry or weights, 7 file format, 8 solver divergence,
9 a check ran but found violations, 1 any other package error.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import synth as synth_mod
from .bundle import load_depths, load_embeddings, load_scene, save_scene, save_solution
from .embedding import MotionSegmenter
from .exceptions import ConfigurationError, InputError, NRDepthError
from .io import read_json, write_csv, write_json, write_pgm
from .metrics import DEPTH_METRIC_NAMES, depth_metrics, global_median_scale, mean_depth_metrics, median_scale, seg_metrics
from .priors import rank_check
from .solver.config import PRIORS, SolverConfig
from .solver.estimator import NonRigidDepthSolver
from .solver.gradcheck import run_gradcheck

logger = logging.getLogger("nrdepth")

EXIT_CHECK_FAILED = 9
SYNTH_BUILDERS = {
    "rigid": synth_mod.make_rigid_scene,
    "multibody": synth_mod.make_multibody_scene,
    "isometric": synth_mod.make_isometric_scene,
    "lowrank": synth_mod.make_lowrank_scene,
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a subcommand needs; parsed from one JSON document."""

    solver: SolverConfig = field(default_factory=SolverConfig)
    prior: str = "arap"
    scene: str | None = None
    solution: str | None = None
    out: str = "nrdepth_out"
    depth_cap: float | None = None
    threshold: float = 0.1
    border_width: float = 10.0
    scale_mode: str = "per_view"
    static_mode: str = "sequence"
    synth: dict = field(default_factory=lambda: {"scenario": "rigid"})

    RUN_KEYS = ("prior", "scene", "solution", "out", "depth_cap", "threshold", "border_width",
                "scale_mode", "static_mode", "synth")

    def __post_init__(self):
        if self.prior not in PRIORS:
            raise ConfigurationError(f"prior must be one of {PRIORS}, got {self.prior!r}")
        if not self.threshold > 0:
            raise ConfigurationError("threshold must be positive")
        if self.border_width < 0:
            raise ConfigurationError("border_width must be nonnegative")
        if self.depth_cap is not None and not self.depth_cap > 0:
            raise ConfigurationError("depth_cap must be positive")
        if self.scale_mode not in ("per_view", "global"):
            raise ConfigurationError("scale_mode must be 'per_view' or 'global'")
        if self.static_mode not in ("sequence", "pair"):
            raise ConfigurationError("static_mode must be 'sequence' or 'pair'")
        if not isinstance(self.synth, dict) or self.synth.get("scenario", "rigid") not in SYNTH_BUILDERS:
            raise ConfigurationError(f"synth.scenario must be one of {sorted(SYNTH_BUILDERS)}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigurationError("config must be a JSON object")
        solver_keys = set(SolverConfig.field_names())
        unknown = set(data) - solver_keys - set(cls.RUN_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        solver = SolverConfig.from_dict({k: v for k, v in data.items() if k in solver_keys})
        return cls(solver=solver, **{k: v for k, v in data.items() if k in cls.RUN_KEYS})

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.RUN_KEYS}
        out.update(self.solver.to_dict())
        return out

    def replace(self, **changes) -> "RunConfig":
        solver_changes = {k: changes.pop(k) for k in list(changes) if k in SolverConfig.field_names()}
        solver = dataclasses.replace(self.solver, **solver_changes) if solver_changes else self.solver
        return dataclasses.replace(self, solver=solver, **changes)


def _flag_overrides(args) -> dict:
    mapping = {"seed": "seed", "prior": "prior", "tau": "tau", "beta": "beta_reg", "reg_sign": "reg_sign",
               "sample_size": "sample_size", "threshold": "threshold", "depth_cap": "depth_cap",
               "out": "out", "scene": "scene", "solution": "solution"}
    changes = {dst: getattr(args, src) for src, dst in mapping.items() if getattr(args, src, None) is not None}
    if args.deterministic:
        changes["deterministic"] = True
    return changes


def load_run_config(args) -> RunConfig:
    data = {}
    if args.config is not None:
        data = read_json(args.config)
    cfg = RunConfig.from_dict(data).replace(**_flag_overrides(args))
    for name in ("scene", "solution"):
        path = getattr(cfg, name)
        if path is not None and not Path(path).is_dir():
            raise InputError(f"{name} directory {path} does not exist")
    if Path(cfg.out).exists() and not Path(cfg.out).is_dir():
        raise InputError(f"output path {cfg.out} exists and is not a directory")
    return cfg


def _thread_limit(cfg: RunConfig):
    env = os.environ.get("NRDEPTH_THREADS")
    limit = None
    if env:
        try:
            limit = int(env)
        except ValueError:
            raise ConfigurationError(f"NRDEPTH_THREADS must be an integer, got {env!r}") from None
        if limit < 1:
            raise ConfigurationError("NRDEPTH_THREADS must be at least 1")
    if cfg.solver.deterministic:
        limit = 1  # BLAS reductions are only reproducible single-threaded
    return threadpool_limits(limits=limit) if limit else contextlib.nullcontext()


# --- subcommands ------------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> int:
    params = dict(cfg.synth)
    scenario = params.pop("scenario", "rigid")
    if args.scenario:
        scenario = args.scenario
    params.setdefault("seed", cfg.solver.seed)
    try:
        result = SYNTH_BUILDERS[scenario](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad synth parameters for {scenario}: {exc}") from exc
    out = Path(cfg.out)
    if scenario == "lowrank":
        write_json(out / "lowrank.json", {"basis": result.basis.tolist(),
                                           "projections": [p.tolist() for p in result.projections]})
    else:
        save_scene(out, result)
    print(f"wrote {scenario} scene to {out}")
    return 0


def _require(value, what):
    if value is None:
        raise InputError(f"{what} is required (flag or config key)")
    return value


def cmd_solve(cfg: RunConfig, args) -> int:
    scene = load_scene(_require(cfg.scene, "--scene"))
    est = NonRigidDepthSolver.from_config(cfg.solver, cfg.prior).fit(scene.views, scene.corrs)
    save_solution(cfg.out, est.depths_, est.weights_, est.embeddings_, est.log_, cfg.to_dict())
    last = est.log_[-1] if est.log_ else {}
    print(f"solved {len(scene.views)} views with the {cfg.prior} prior; final total {last.get('total', float('nan')):.6g}")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    scene = load_scene(_require(cfg.scene, "--scene"))
    if scene.gt_depths is None:
        raise InputError("the scene has no ground-truth depth column")
    preds = load_depths(_require(cfg.solution, "--solution"))
    if len(preds) != len(scene.gt_depths):
        raise InputError(f"{len(preds)} predicted views for {len(scene.gt_depths)} ground-truth views")
    if cfg.scale_mode == "global":
        scaled, s = global_median_scale(preds, scene.gt_depths)
        scales = [s] * len(preds)
    else:
        scaled, scales = zip(*(median_scale(p, g) for p, g in zip(preds, scene.gt_depths)))
    rows = [depth_metrics(p, g, cfg.depth_cap) for p, g in zip(scaled, scene.gt_depths)]
    mean = mean_depth_metrics(rows)
    header = ("view",) + DEPTH_METRIC_NAMES + ("n_evaluated", "scale")
    table = [[k] + [repr(getattr(r, n)) for n in DEPTH_METRIC_NAMES] + [r.n_evaluated, repr(float(s))]
             for k, (r, s) in enumerate(zip(rows, scales))]
    table.append(["mean"] + [repr(getattr(mean, n)) for n in DEPTH_METRIC_NAMES] + [mean.n_evaluated, ""])
    write_csv(Path(cfg.out) / "metrics.csv", header, table)
    print(f"abs_rel {mean.abs_rel:.6f}  delta1 {mean.delta1:.4f}  over {len(rows)} views")
    return 0


def cmd_segment(cfg: RunConfig, args) -> int:
    scene = load_scene(_require(cfg.scene, "--scene"))
    fields = load_embeddings(_require(cfg.solution, "--solution"))
    size = (scene.intrinsics.width, scene.intrinsics.height)
    layout = [(scene.views[f.view_pair[0]].pixels, size) for f in fields]
    seg = MotionSegmenter(cfg.threshold, cfg.border_width)
    if cfg.static_mode == "sequence":
        seg.fit(fields, layout)
    rows = []
    out = Path(cfg.out)
    for f, lay in zip(fields, layout):
        k, l = f.view_pair
        if cfg.static_mode == "pair":
            seg.fit(f, lay)
        mask = seg.segment(f)
        write_pgm(out / f"mask_{k}-{l}.pgm", mask.labels)
        if scene.body_ids is not None:
            m = seg_metrics(mask, scene.body_ids != 0)
            rows.append([f"{k}-{l}", repr(m.accuracy), repr(m.iou), m.tp, m.fp, m.fn, m.tn])
    if rows:
        write_csv(out / "seg_metrics.csv", ("pair", "accuracy", "iou", "tp", "fp", "fn", "tn"), rows)
        print(f"mean accuracy {np.mean([float(r[1]) for r in rows]):.4f}  mean IoU {np.mean([float(r[2]) for r in rows]):.4f}")
    print(f"wrote {len(fields)} masks to {out}")
    return 0


def cmd_rankcheck(cfg: RunConfig, args) -> int:
    seed = cfg.solver.seed
    structure = synth_mod.make_lowrank_scene(args.b, args.points, args.views, seed)
    report = rank_check(structure)
    doc = dict(report.to_dict(), b=args.b, m=args.views, n=args.points, seed=seed)
    write_json(Path(cfg.out) / "rank_report.json", doc)
    print(json.dumps(doc, sort_keys=True))
    return 0 if report.ok else EXIT_CHECK_FAILED


def cmd_gradcheck(cfg: RunConfig, args) -> int:
    report = run_gradcheck(args.cases, cfg.solver.seed)
    write_json(Path(cfg.out) / "gradcheck.json", report.to_dict())
    print(f"max relative error {report.max_rel_error:.3e} over {report.n_components} components "
          f"in {report.n_cases} configurations; {report.n_failures} failures")
    return 0 if report.ok else EXIT_CHECK_FAILED


COMMANDS = {"synth": cmd_synth, "solve": cmd_solve, "eval": cmd_eval, "segment": cmd_segment,
            "rankcheck": cmd_rankcheck, "gradcheck": cmd_gradcheck}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output directory")
    common.add_argument("--prior", choices=PRIORS)
    common.add_argument("--tau", type=float)
    common.add_argument("--beta", type=float, help="weight regularization coefficient")
    common.add_argument("--reg-sign", type=int, choices=(1, -1), dest="reg_sign")
    common.add_argument("--sample-size", type=int, dest="sample_size")
    common.add_argument("--threshold", type=float, help="segmentation distance threshold")
    common.add_argument("--depth-cap", type=float, dest="depth_cap")
    common.add_argument("--deterministic", action="store_true")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="nrdepth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("synth", parents=[common], help="generate a synthetic scene bundle")
    p.add_argument("--scenario", choices=sorted(SYNTH_BUILDERS))
    p = sub.add_parser("solve", parents=[common], help="recover per-view depth")
    p.add_argument("--scene")
    p = sub.add_parser("eval", parents=[common], help="depth metrics against ground truth")
    p.add_argument("--scene")
    p.add_argument("--solution")
    p = sub.add_parser("segment", parents=[common], help="static/dynamic masks from embeddings")
    p.add_argument("--scene")
    p.add_argument("--solution")
    p = sub.add_parser("rankcheck", parents=[common], help="validate the low-rank EDM bounds")
    p.add_argument("--b", type=int, default=2)
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--points", type=int, default=20)
    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    p.add_argument("--cases", type=int, default=200)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_run_config(args)
        with _thread_limit(cfg):
            return COMMANDS[args.command](cfg, args)
    except NRDepthError as exc:
        print(f"nrdepth {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except IndexError as exc:
        print(f"nrdepth {args.command}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
