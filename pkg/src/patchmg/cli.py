"""Command-line benchmark harness.

Examples
--------
Iteration counts of the W-cycle with the additive smoother::

    patchmg --scenario unit_square --p 2..8 --levels 4..7

Multigrid-preconditioned CG on the L-shape, markdown table::

    patchmg --scenario l_shape --mode pcg --p 2..8 --levels 4..6 --format markdown

Approximation errors of the tensor projector::

    patchmg --scenario projector_study --p 1..6 --levels 2..8
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass

from .geometry import TopologyError, build_topology
from .geometry_io import GeometryFileError, read_geometry, save_geometry
from .multigrid import CYCLES, COARSEST_RULES, ConvergenceError, MGConfig, build_hierarchy, solve_mg, solve_pcg
from .projectors import FunctionSample, error_2d, error_norms, project_2d_tensor, seminorm_h2_2d, sine_sample
from .scenarios import SCENARIOS, Scenario
from .bspline import SplineSpace

SCENARIO_NAMES = ("unit_square", "l_shape", "projector_study", "from_file")
CSV_COLUMNS = ["scenario", "p", "level", "cycle", "smoother", "nu", "tau", "iterations", "rate", "seconds"]

EXIT_OK, EXIT_DIVERGED, EXIT_INPUT = 0, 1, 2


def parse_range(text):
    """``"4..7"`` -> ``[4, 5, 6, 7]``; ``"2,5,8"`` and ``"3"`` also accepted."""
    text = text.strip()
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid range {text!r} (use a..b or a,b,c)") from None


@dataclass
class RunConfig:
    scenario: str = "unit_square"
    degrees: tuple = (2,)
    levels: tuple = (4,)
    cycle: str = "W"
    smoother: str = "additive"
    nu_pre: int = 1
    nu_post: int = 1
    tau: float | None = None
    sigma_scale: float = 5.0
    rho: float = 0.95
    eps: float = 1e-8
    mode: str = "iterative"
    geometry: str | None = None
    out: str | None = None
    format: str = "csv"
    coarsest: str = "fine_smoothing"
    quantity: str = "iterations"

    @property
    def damping(self):
        if self.tau is not None:
            return self.tau
        return 1.0 if self.smoother == "boosted" else 0.95

    def mg_config(self):
        return MGConfig(self.cycle, self.smoother, self.nu_pre, self.nu_post, self.damping,
                        self.sigma_scale, self.rho, self.coarsest)


def load_scenario(cfg):
    if cfg.scenario == "from_file":
        if not cfg.geometry:
            raise GeometryFileError("scenario from_file needs --geometry")
        patches, boundary = read_geometry(cfg.geometry)
        if boundary is not None:
            topo = build_topology(patches, SplineSpace(1, 1))
            if sorted(topo.boundary_sides) != sorted(boundary):
                raise GeometryFileError("boundary list in the file does not match the patch layout")
        return Scenario("from_file", patches)
    return SCENARIOS[cfg.scenario]()


def run_cell(sc, p, ell, cfg):
    """One solver run; returns the CSV record."""
    hier = build_hierarchy(sc.patches, p, ell, cfg.mg_config())
    system = hier.system(sc.f, sc.g)
    solver = solve_pcg if cfg.mode == "pcg" else solve_mg
    rep = solver(hier, system.f, cfg.eps)
    rec = dict(scenario=sc.name, p=p, level=ell, cycle=cfg.cycle, smoother=cfg.smoother,
               nu=f"{cfg.nu_pre}+{cfg.nu_post}", tau=cfg.damping, iterations=rep.iterations,
               rate=round(rep.rate, 4), seconds=round(rep.seconds, 3))
    if cfg.quantity == "error":
        lev = hier.finest
        grad = sc.grad_g
        f = FunctionSample(sc.g, lambda x, y: grad(x, y)[0], lambda x, y: grad(x, y)[1])
        l2, h1 = error_norms(sc.patches, lev.space, lev.dofmap, system.extend(rep.solution), f)
        rec.update(l2_error=l2, h1_error=h1)
    return rec


def run_sweep(cfg):
    """Run every ``(level, p)`` cell; returns (records, diverged flag)."""
    if cfg.scenario == "projector_study":
        return projector_study(cfg), False
    sc = load_scenario(cfg)
    records, diverged = [], False
    for ell in cfg.levels:
        for p in cfg.degrees:
            try:
                records.append(run_cell(sc, p, ell, cfg))
            except ConvergenceError:
                diverged = True
                records.append(dict(scenario=sc.name, p=p, level=ell, cycle=cfg.cycle, smoother=cfg.smoother,
                                    nu=f"{cfg.nu_pre}+{cfg.nu_post}", tau=cfg.damping, iterations="div",
                                    rate="", seconds=""))
    return records, diverged


def projector_study(cfg):
    """``|u - Π̂u|_{H1}`` against the bound ``2h|u|_{H2}`` for ``u = sin(πx) sin(πy)``."""
    f = sine_sample()
    semi = seminorm_h2_2d(f)
    records = []
    for ell in cfg.levels:
        for p in cfg.degrees:
            space = SplineSpace(p, 2 ** ell)
            C = project_2d_tensor(space, f)
            _, h1 = error_2d(space, C, f)
            bound = 2 * space.h * semi
            records.append(dict(scenario="projector_study", p=p, level=ell, error=h1, bound=bound, ratio=h1 / bound))
    return records


def format_csv(records):
    if not records:
        return ""
    cols = list(records[0].keys()) if records[0].get("scenario") == "projector_study" else \
        CSV_COLUMNS + [k for k in records[0] if k not in CSV_COLUMNS]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(records)
    return buf.getvalue()


def format_markdown(records, value="iterations"):
    """Table with one row per level and one column per degree."""
    if records and records[0].get("scenario") == "projector_study":
        value = "ratio"
    levels = sorted({r["level"] for r in records})
    degrees = sorted({r["p"] for r in records})
    cell = {(r["level"], r["p"]): r[value] for r in records}

    def show(v):
        return f"{v:.3g}" if isinstance(v, float) else str(v)

    lines = ["| ℓ \\ p | " + " | ".join(str(p) for p in degrees) + " |",
             "|---|" + "---:|" * len(degrees)]
    for ell in levels:
        lines.append(f"| {ell} | " + " | ".join(show(cell[(ell, p)]) for p in degrees) + " |")
    return "\n".join(lines) + "\n"


def build_parser():
    ap = argparse.ArgumentParser(prog="patchmg", description="Multigrid benchmarks for multi-patch spline discretizations.")
    ap.add_argument("--scenario", choices=SCENARIO_NAMES, default="unit_square")
    ap.add_argument("--p", dest="degrees", type=parse_range, default=[2], help="degrees, e.g. 2..8 or 2,4")
    ap.add_argument("--levels", type=parse_range, default=[4], help="refinement levels, e.g. 4..7")
    ap.add_argument("--cycle", choices=CYCLES, default="W")
    ap.add_argument("--smoother", choices=("additive", "boosted"), default="additive")
    ap.add_argument("--nu-pre", type=int, default=1)
    ap.add_argument("--nu-post", type=int, default=1)
    ap.add_argument("--tau", type=float, default=None, help="damping (default 0.95, or 1 for boosted)")
    ap.add_argument("--sigma-scale", type=float, default=5.0, help="σ = scale * h^-2")
    ap.add_argument("--rho", type=float, default=0.95)
    ap.add_argument("--eps", type=float, default=1e-8)
    ap.add_argument("--mode", choices=("iterative", "pcg"), default="iterative")
    ap.add_argument("--geometry", help="geometry file for --scenario from_file")
    ap.add_argument("--out", help="output file (default: stdout)")
    ap.add_argument("--format", choices=("csv", "markdown"), default="csv")
    ap.add_argument("--coarsest", choices=sorted(COARSEST_RULES), default="fine_smoothing")
    ap.add_argument("--quantity", choices=("iterations", "error"), default="iterations",
                    help="'error' also reports ||u_h - g|| in L2 and H1")
    ap.add_argument("--export-geometry", metavar="FILE", help="write the scenario geometry to FILE and exit")
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    cfg = RunConfig(args.scenario, tuple(args.degrees), tuple(args.levels), args.cycle, args.smoother,
                    args.nu_pre, args.nu_post, args.tau, args.sigma_scale, args.rho, args.eps, args.mode,
                    args.geometry, args.out, args.format, args.coarsest, args.quantity)
    try:
        if args.export_geometry:
            sc = load_scenario(cfg)
            topo = build_topology(sc.patches, SplineSpace(1, 1))
            save_geometry(args.export_geometry, sc.patches, topo.boundary_sides)
            return EXIT_OK
        records, diverged = run_sweep(cfg)
    except (GeometryFileError, TopologyError, ValueError, OSError) as exc:
        print(f"patchmg: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = format_markdown(records) if cfg.format == "markdown" else format_csv(records)
    if cfg.out:
        with open(cfg.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if diverged:
        print("patchmg: at least one run diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
