"""Command-line entry point: ``nodefrag <subcommand> [flags]``.

Precedence for every setting is: explicit flag, then environment
(``NODEFRAG_SEED``, ``NODEFRAG_WORKERS``), then ``--config`` file
(``key = value`` lines, keys named like the long flags), then defaults.

Exit status: 0 on success, 1 if any verification check fails or a
mechanism is not admissible, 2 on usage or domain errors.
"""
from __future__ import annotations

import argparse
import csv
import inspect
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exponent import Stable, check_admissible, truncate
from .fragmentation import assign_cut_times, forest_fragments_at, forest_timeline
from .measure_file import load_measure
from .sampler import RngStream
from .tree import DEFAULT_NODE_CAP, excursion_path, grow_forest
from . import verify as V

SCHEMA_VERSION = 1
ENV_SEED = "NODEFRAG_SEED"
ENV_WORKERS = "NODEFRAG_WORKERS"

TREES_COLUMNS = ["tree_id", "sigma", "n_nodes", "max_delta", "oversize_flag"]
FRAGMENTS_COLUMNS = ["tree_id", "theta", "rank", "mass", "dust", "tagged"]
EVENTS_COLUMNS = ["tree_id", "theta", "parent_mass", "child_rank", "child_mass", "cut_delta"]
REPORTS_COLUMNS = ["check", "target", "estimate", "stderr", "tolerance", "pass"]
DRAWS_COLUMNS = ["pipeline", "draw_id", "r", "window", "eta", "parent_mass", "x1",
                 "weight", "n_children_above_0.05"]


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    alpha: Optional[float] = 1.5
    measure: Optional[str] = None
    eps: float = 1e-2
    delta: float = 1e-6
    theta: float = 1.0
    thetas: list = field(default_factory=list)
    n: Optional[int] = None
    seed: int = 0
    node_cap: int = DEFAULT_NODE_CAP
    out_dir: str = "."
    lambda_grid: list = field(default_factory=lambda: [0.5, 1.0, 2.0, 4.0])
    checks: list = field(default_factory=lambda: list(V.CHECKS))
    workers: int = 1
    tree_index: int = 0
    bonferroni: bool = True

    def mechanism(self):
        if self.measure:
            return load_measure(self.measure)
        return Stable(self.alpha)

    def validate(self) -> None:
        if self.measure is None and not (self.alpha is not None and 1 < self.alpha < 2):
            raise UsageError("--alpha must lie strictly between 1 and 2")
        if self.measure is not None and not Path(self.measure).is_file():
            raise UsageError(f"measure file not found: {self.measure}")
        if not self.eps > 0:
            raise UsageError("--eps must be positive")
        if not 0 < self.delta < 1:
            raise UsageError("--delta must lie in (0, 1)")
        if not self.theta >= 0 or any(t < 0 for t in self.thetas):
            raise UsageError("theta values must be non-negative")
        if self.n is not None and self.n < 0:
            raise UsageError("--n must be non-negative")
        if self.node_cap < 1:
            raise UsageError("--node-cap must be positive")
        if any(lam < 0 for lam in self.lambda_grid):
            raise UsageError("--lambda-grid values must be non-negative")
        unknown = [c for c in self.checks if c not in V.CHECKS]
        if unknown:
            raise UsageError(f"unknown checks {unknown}; choose from {sorted(V.CHECKS)}")
        if self.workers < 1:
            raise UsageError("--workers must be positive")
        if self.tree_index < 0:
            raise UsageError("--tree-index must be non-negative")

    def echo(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {v}")
        return "\n".join(lines) + "\n"


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _names(text: str) -> list:
    return [x.strip() for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


_CONVERTERS = {"alpha": float, "measure": str, "eps": float, "delta": float, "theta": float,
               "thetas": _floats, "n": int, "seed": int, "node_cap": int, "out_dir": str,
               "lambda_grid": _floats, "checks": _names, "workers": int, "tree_index": int,
               "bonferroni": _bool}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines (``#`` comments allowed) into typed values."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _CONVERTERS[key](value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise UsageError(f"{path}:{lineno}: {exc}")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("mechanism")
    g.add_argument("--alpha", type=float, help="stable index in (1, 2) (default 1.5)")
    g.add_argument("--measure", help="tabulated Lévy measure file (overrides --alpha)")
    common.add_argument("--eps", type=float, help="jump cutoff (default 1e-2)")
    common.add_argument("--delta", type=float, help="subordinator small-jump cutoff (default 1e-6)")
    common.add_argument("--theta", type=float, help="cutting time (default 1)")
    common.add_argument("--n", type=int, help="number of trees or samples")
    common.add_argument("--seed", type=int, help=f"root seed (env {ENV_SEED}; default 0)")
    common.add_argument("--node-cap", type=int, dest="node_cap",
                        help=f"reject trees above this many nodes (default {DEFAULT_NODE_CAP})")
    common.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")
    common.add_argument("--workers", type=int, help=f"parallel workers (env {ENV_WORKERS}; "
                        "default: available cores)")
    common.add_argument("--config", help="key = value file; flags override it")

    p = argparse.ArgumentParser(prog="nodefrag",
                                description="Simulate and verify fragmentation at nodes of Lévy trees.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", parents=[common], help="check admissibility of the mechanism")
    sub.add_parser("tree", parents=[common], help="simulate trees, write trees.csv")
    fr = sub.add_parser("fragment", parents=[common], help="write fragments.csv on a theta grid")
    fr.add_argument("--thetas", type=_floats, help="comma-separated theta grid (default: --theta)")
    sub.add_parser("timeline", parents=[common], help="write events.csv of tagged-fragment splits")
    ve = sub.add_parser("verify", parents=[common], help="run named checks, write reports.csv")
    ve.add_argument("--checks", type=_names, help=f"comma-separated subset of {','.join(V.CHECKS)}")
    ve.add_argument("--lambda-grid", type=_floats, dest="lambda_grid",
                    help="Laplace arguments for eq9 (default 0.5,1,2,4)")
    ve.add_argument("--bonferroni", type=_bool,
                    help="apply the family-wise threshold floor (default true)")
    sub.add_parser("dislocation-compare", parents=[common],
                   help="tree-side vs subordinator-side dislocations, write draws.csv")
    pr = sub.add_parser("profile", parents=[common], help="write a tree's height profile")
    pr.add_argument("--tree-index", type=int, dest="tree_index", help="which tree (default 0)")
    return p


def resolve_config(args: argparse.Namespace, env=None) -> RunConfig:
    env = os.environ if env is None else env
    values: dict = {"workers": os.cpu_count() or 1}
    if args.config:
        values.update(read_config_file(args.config))
    for key, var in (("seed", ENV_SEED), ("workers", ENV_WORKERS)):
        if env.get(var):
            try:
                values[key] = int(env[var])
            except ValueError:
                raise UsageError(f"{var} must be an integer")
    for key in _CONVERTERS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    if args.measure is not None or "measure" in values:
        values.setdefault("alpha", None)
    cfg = RunConfig(command=args.command, **values)
    if not cfg.thetas:
        cfg.thetas = [cfg.theta]
    cfg.validate()
    return cfg


def _writer(path: Path, name: str, columns: Sequence[str]):
    fh = open(path, "w", newline="")
    fh.write(f"# nodefrag {name} schema v{SCHEMA_VERSION}\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(columns)
    return fh, w


def _num(x) -> str:
    return repr(float(x))


def _grow(cfg: RunConfig, trunc, default_n: int):
    n = default_n if cfg.n is None else cfg.n
    st = RngStream(cfg.seed, 0)
    f = grow_forest(trunc, st.child(0), n, cfg.node_cap)
    return assign_cut_times(f, st.child(1))


def cmd_validate(cfg: RunConfig, out: Path) -> int:
    rep = check_admissible(cfg.mechanism())
    text = (f"admissible: {rep.ok}\nmoment: {rep.moment!r}\n"
            f"divergence_verified_to: {float(rep.divergence_verified_to)!r}\n"
            f"divergence_assumed_below: {rep.divergence_assumed_below}\nmessage: {rep.message}\n")
    (out / "validate.txt").write_text(text)
    sys.stdout.write(text)
    return 0 if rep.ok else 1


def cmd_tree(cfg: RunConfig, out: Path) -> int:
    trunc = truncate(cfg.mechanism(), cfg.eps)
    f = _grow(cfg, trunc, 1000)
    counts = np.bincount(f.tree, minlength=f.n_trees)
    fh, w = _writer(out / "trees.csv", "trees.csv", TREES_COLUMNS)
    with fh:
        for i, (s, k, m) in enumerate(zip(f.sigmas, counts, f.max_delta)):
            w.writerow([i, _num(s), int(k), _num(m), 0])
    sys.stdout.write(f"trees: {f.n_trees}  oversize rejected: {f.oversize_rejected}\n")
    (out / "summary.txt").write_text(f"trees = {f.n_trees}\noversize_rejected = "
                                     f"{f.oversize_rejected}\n")
    return 0


def cmd_fragment(cfg: RunConfig, out: Path) -> int:
    trunc = truncate(cfg.mechanism(), cfg.eps)
    f = _grow(cfg, trunc, 1000)
    fh, w = _writer(out / "fragments.csv", "fragments.csv", FRAGMENTS_COLUMNS)
    with fh:
        for th in cfg.thetas:
            s = forest_fragments_at(f, th)
            order = np.lexsort((-s.masses, s.frag_tree))
            tree_ids = s.frag_tree[order]
            first = np.searchsorted(tree_ids, tree_ids, side="left")
            rank = np.arange(order.size) - first + 1
            has = np.zeros(f.n_trees, bool)
            has[tree_ids] = True
            k = 0
            for i in range(f.n_trees):
                if not has[i]:
                    w.writerow([i, _num(th), 0, _num(0.0), _num(s.dust[i]), 0])
                    continue
                while k < order.size and tree_ids[k] == i:
                    j = order[k]
                    tagged = int(s.top[j] == f.root[i])
                    w.writerow([i, _num(th), int(rank[k]), _num(s.masses[j]),
                                _num(s.dust[i]), tagged])
                    k += 1
    return 0


def cmd_timeline(cfg: RunConfig, out: Path) -> int:
    trunc = truncate(cfg.mechanism(), cfg.eps)
    f = _grow(cfg, trunc, 1000)
    tl = forest_timeline(f)
    fh, w = _writer(out / "events.csv", "events.csv", EVENTS_COLUMNS)
    with fh:
        for k in range(tl.n_events):
            pieces = tl.pieces(k)
            row = [int(tl.tree[k]), _num(tl.time[k]), _num(tl.parent_mass[k])]
            if pieces.size == 0:
                w.writerow(row + [0, _num(0.0), _num(tl.cut_delta[k])])
            for r, m in enumerate(pieces, 1):
                w.writerow(row + [r, _num(m), _num(tl.cut_delta[k])])
    if tl.ties:
        sys.stderr.write(f"warning: {tl.ties} tied cut times\n")
    return 0


def _check_kwargs(name: str, cfg: RunConfig) -> dict:
    params = inspect.signature(V.CHECKS[name]).parameters
    kw = {"eps": cfg.eps, "theta": cfg.theta, "node_cap": cfg.node_cap}
    if cfg.n is not None:
        kw["n"] = cfg.n
    if name == "eq9":
        kw["lambdas"] = tuple(cfg.lambda_grid)
    return {k: v for k, v in kw.items() if k in params}


def _run_one(job):
    name, mech, seed, th, kwargs = job
    return V.CHECKS[name](mech, seed=seed, th=th, **kwargs)


def _write_reports(out: Path, reports) -> None:
    fh, w = _writer(out / "reports.csv", "reports.csv", REPORTS_COLUMNS)
    with fh:
        for rep in reports:
            for row in rep.rows:
                w.writerow(row.as_csv())


def _run_reports(cfg: RunConfig, names: Sequence[str]):
    mech = cfg.mechanism()
    if cfg.bonferroni:
        th = V.Thresholds.bonferroni(sum(V._GATING_ESTIMATE[k] for k in names))
    else:
        th = V.NOMINAL
    jobs = [(k, mech, cfg.seed, th, _check_kwargs(k, cfg)) for k in names]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers, len(jobs))) as ex:
            reports = list(ex.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]
    return reports, th


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    if any(k == "cor93" for k in cfg.checks) and cfg.measure:
        raise UsageError("cor93 needs a stable mechanism")
    reports, th = _run_reports(cfg, cfg.checks)
    _write_reports(out, reports)
    text = "\n".join(r.text() for r in reports)
    text += f"\nthresholds: p > {th.p_min:g}, bands {th.z:.3g} SE\n"
    (out / "reports.txt").write_text(text)
    sys.stdout.write(text)
    return 0 if all(r.passed for r in reports) else 1


def cmd_dislocation_compare(cfg: RunConfig, out: Path) -> int:
    reports, th = _run_reports(cfg, ["thm91"])
    rep = reports[0]
    _write_reports(out, reports)
    fh, w = _writer(out / "draws.csv", "draws.csv", DRAWS_COLUMNS)
    with fh:
        for side in ("tree", "subordinator"):
            d = rep.data[side]
            for i in range(d["x1"].size):
                w.writerow([side, i, _num(rep.notes["r"]), _num(rep.notes["window"]),
                            _num(rep.notes["eta"]), _num(d["parent_mass"][i]), _num(d["x1"][i]),
                            _num(d["weight"][i]), int(d["n_above"][i])])
    sys.stdout.write(rep.text() + "\n")
    return 0 if rep.passed else 1


def cmd_profile(cfg: RunConfig, out: Path) -> int:
    trunc = truncate(cfg.mechanism(), cfg.eps)
    n = max(cfg.tree_index + 1, cfg.n or 1)
    f = grow_forest(trunc, RngStream(cfg.seed, 0).child(0), n, cfg.node_cap)
    prof = excursion_path(f.tree_at(cfg.tree_index))
    with open(out / "profile.dat", "w") as fh:
        fh.write(f"# nodefrag profile schema v{SCHEMA_VERSION}\n# time height\n")
        for t, h in zip(prof.times, prof.heights):
            fh.write(f"{float(t)!r} {int(h)}\n")
    return 0


COMMANDS = {"validate": cmd_validate, "tree": cmd_tree, "fragment": cmd_fragment,
            "timeline": cmd_timeline, "verify": cmd_verify,
            "dislocation-compare": cmd_dislocation_compare, "profile": cmd_profile}


def run(argv: Optional[Sequence[str]] = None, env=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args, env)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.txt").write_text(cfg.echo())
        return COMMANDS[cfg.command](cfg, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"nodefrag: error: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"nodefrag: error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
