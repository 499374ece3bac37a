"""Command-line front end.

Exit codes: 0 success (or solved), 2 solve failed, 1 usage or I/O error.
Set ``BUBBLE_LOG`` to a logging level name (DEBUG, INFO, ...) for verbosity.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import guide as gd
from .export import plot_svg, trajectory_csv
from .level import LevelError, Placement, load_placement, read_level
from .physics import InfeasiblePlacementError, simulate
from .solver import DEFAULT_BUDGET, solve

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2
LEVELS_DIR = Path(__file__).parent / "levels"

log = logging.getLogger("bubblesolver")


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; usage errors are 1 here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bubblesolver", description="Physics puzzle solver.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="solve one level")
    s.add_argument("level")
    s.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--mode", choices=("grid", "random"), default="grid")
    s.add_argument("--out", help="report JSON path (default: stdout)")
    s.add_argument("--placement-out", help="write the final placement JSON here")
    s.add_argument("--csv", help="write the final trajectory CSV here")

    m = sub.add_parser("simulate", help="run one trial")
    m.add_argument("level")
    m.add_argument("--placement", help="placement JSON (default: empty)")
    m.add_argument("--out", help="trajectory CSV path (default: stdout)")

    g = sub.add_parser("plan", help="guide path as SVG")
    g.add_argument("level")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="SVG path (default: stdout)")

    b = sub.add_parser("bench", help="solve every level in a directory")
    b.add_argument("dir")
    b.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--jobs", type=int, default=1)

    t = sub.add_parser("plot", help="SVG overlay of a solve report")
    t.add_argument("report")
    t.add_argument("--level", help="level file (default: bundled level named in the report)")
    t.add_argument("--out", help="SVG path (default: stdout)")
    return p


def _emit(text: str, path: Optional[str]):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_solve(a) -> int:
    level = read_level(a.level)
    rep = solve(level, budget=a.budget, seed=a.seed, jobs=a.jobs, mode=a.mode)
    final = simulate(level, rep.placement)
    if a.csv:
        Path(a.csv).write_text(trajectory_csv(final))
        rep.trajectory_csv = a.csv
    if a.placement_out:
        Path(a.placement_out).write_text(json.dumps(rep.placement.to_dict(), indent=2) + "\n")
    _emit(rep.to_json(), a.out)
    for cg, fg in rep.timings:
        log.info("region CG %.3f s FG %.3f s", cg, fg)
    print(f"{level.name}: {rep.status} in {rep.trials} trial(s), {rep.n_regions} region(s)"
          + (f" ({rep.reason})" if rep.reason else ""), file=sys.stderr)
    return EXIT_OK if rep.solved else EXIT_FAILED


def cmd_simulate(a) -> int:
    level = read_level(a.level)
    placement = load_placement(a.placement) if a.placement else Placement()
    tr = simulate(level, placement)
    _emit(trajectory_csv(tr), a.out)
    print(f"outcome: {tr.outcome}" + (f" at k={tr.tau}" if tr.tau is not None else ""), file=sys.stderr)
    return EXIT_OK


def cmd_plan(a) -> int:
    level = read_level(a.level)
    path = gd.plan_guide_path(level, seed=a.seed)
    _emit(plot_svg(level, guide=path.waypoints), a.out)
    return EXIT_OK


def bench_rows(directory: Path, budget: int = DEFAULT_BUDGET, seed: int = 0, jobs: int = 1) -> list[dict]:
    rows = []
    for f in sorted(directory.glob("*.json")):
        level = read_level(f)
        t0 = time.perf_counter()
        rep = solve(level, budget=budget, seed=seed, jobs=jobs)
        rows.append({"level": level.name or f.stem,
                     "cg": sum(c for c, _ in rep.timings), "fg": sum(g for _, g in rep.timings),
                     "trials": rep.trials, "regions": rep.n_regions, "blocks": len(rep.placement),
                     "status": rep.status, "wall": time.perf_counter() - t0})
    return rows


def format_table(rows: Sequence[dict]) -> str:
    head = f"{'level':<10} {'CG [s]':>8} {'FG [s]':>8} {'trials':>6} {'regions':>7} {'blocks':>6}  status"
    lines = [head, "-" * len(head)]
    for r in rows:
        lines.append(f"{r['level']:<10} {r['cg']:>8.3f} {r['fg']:>8.3f} {r['trials']:>6d} {r['regions']:>7d} "
                     f"{r['blocks']:>6d}  {r['status']}")
    return "\n".join(lines) + "\n"


def cmd_bench(a) -> int:
    d = Path(a.dir)
    if not d.is_dir():
        raise FileNotFoundError(f"not a directory: {d}")
    rows = bench_rows(d, a.budget, a.seed, a.jobs)
    sys.stdout.write(format_table(rows))
    solved = sum(r["status"] == "solved" for r in rows)
    print(f"solved {solved}/{len(rows)} in {sum(r['wall'] for r in rows):.1f} s", file=sys.stderr)
    return EXIT_OK


def cmd_plot(a) -> int:
    rep = json.loads(Path(a.report).read_text())
    level_path = a.level or LEVELS_DIR / f"{rep['level']}.json"
    level = read_level(level_path)
    placement = Placement.from_dict(rep["placement"])
    first = simulate(level, Placement())
    final = simulate(level, placement)
    svg = plot_svg(level, placement, guide=[tuple(p) for p in rep.get("guide", [])],
                   trajectories=[[(s.pos.x, s.pos.y) for s in first.trajectory],
                                 [(s.pos.x, s.pos.y) for s in final.trajectory]],
                   regions=[tuple(r["rect"]) for r in rep.get("regions", [])])
    _emit(svg, a.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "simulate": cmd_simulate, "plan": cmd_plan, "bench": cmd_bench, "plot": cmd_plot}


def _configure_logging():
    name = os.environ.get("BUBBLE_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def run(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_ERROR
    try:
        return COMMANDS[args.command](args)
    except (OSError, LevelError, InfeasiblePlacementError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
