"""Command-line interface.

Exit codes: 0 success / never violated, 1 ``eval`` false, 2 invalid input,
3 overlapping temporal atoms, 4 oracle budget exceeded, 5 oracle
disagreement, 10 violation reported by ``monitor``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, TextIO

import numpy as np

from .feasible import ArtifactError, compute_feasible_sets, dumps_artifact, load_artifact
from .gridset import GridGeometry, Mode
from .monitor import MonitorError, Outcome, ProvenanceError, init_baseline, init_monitor, lead_time
from .monitor import model_free_step, step
from .oracle import BudgetExceeded, ControlLattice, DEFAULT_BUDGET, TraceTooShort, eval_trace
from .oracle import oracle_feasible_set
from .reach import ControlGrid, ReachConfig, Scheme
from .stl import Formula, FormulaError, OverlapError, horizon, parse_formula, segment
from .system import ConfigError, Trace, load_system, read_text

log = logging.getLogger("stlmon")

EXIT_OK, EXIT_FALSE, EXIT_INPUT, EXIT_OVERLAP, EXIT_BUDGET, EXIT_DISAGREE = 0, 1, 2, 3, 4, 5
EXIT_VIOLATED = 10


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# Inputs


def read_formula(path, dim: int | None = None) -> Formula:
    try:
        text = read_text(path)
    except OSError as exc:
        raise InputError(f"cannot read formula {path}: {exc}") from None
    try:
        return parse_formula(text, dim)
    except FormulaError as exc:
        raise InputError(f"{path}: {exc}") from None


@dataclass
class GridConfig:
    cells: list[int]
    bounds: list[list[float]] | None = None
    control_samples: list[int] | None = None
    scheme: str = Scheme.CORNERS_AND_CENTER.value
    epsilon: float = 0.0
    mode: str = Mode.INNER.value


def read_grid_config(args) -> GridConfig:
    doc: dict = {}
    cfg_path, cells = args.grid_config, None
    if args.grid:
        # --grid takes either cell counts or a grid config file.
        if re.fullmatch(r"\d+(,\d+)*", args.grid):
            cells = [int(c) for c in args.grid.split(",")]
        else:
            cfg_path = args.grid
    if cfg_path:
        try:
            doc = json.loads(read_text(cfg_path))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read grid config {cfg_path}: {exc}") from None
        if not isinstance(doc, dict):
            raise InputError("grid config must be a JSON object")
    if cells:
        doc["cells"] = cells
    for key in ("control_samples", "scheme", "epsilon", "mode"):
        val = getattr(args, key, None)
        if val is not None:
            doc[key] = val
    if "cells" not in doc:
        raise InputError("no grid: pass --grid N[,N...] or --grid-config")
    try:
        return GridConfig(**doc)
    except TypeError as exc:
        raise InputError(f"grid config: {exc}") from None


def build_setup(args):
    try:
        model = load_system(args.system)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        raise InputError(f"system config {args.system}: {exc}") from None
    f = read_formula(args.formula, model.n)
    gc = read_grid_config(args)
    try:
        cells = gc.cells if len(gc.cells) == model.n else gc.cells * model.n
        g = GridGeometry(gc.bounds or model.state_bounds.tolist(), cells)
        samples = gc.control_samples or [11]
        cfg = ReachConfig(ControlGrid(samples), Scheme(gc.scheme), float(gc.epsilon))
        ControlGrid(samples).points(model.control_bounds)
        mode = Mode(gc.mode)
    except ValueError as exc:
        raise InputError(f"grid config: {exc}") from None
    return model, f, g, cfg, mode


def iter_trace(src: TextIO) -> Iterator[tuple[int, int, np.ndarray]]:
    """Yield ``(line_no, k, x)`` from CSV (``k,x1,..`` with header) or JSONL input."""
    fmt = None
    expected = 0
    for line_no, line in enumerate(src, start=1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if fmt is None:
            if s.startswith("{"):
                fmt = "jsonl"
            else:
                fmt = "csv"
                header = [h.strip() for h in s.split(",")]
                if not header or header[0] != "k":
                    raise InputError(f"line {line_no}: CSV header must start with 'k'")
                continue
        try:
            if fmt == "jsonl":
                rec = json.loads(s)
                k, x = int(rec["k"]), np.asarray(rec["x"], dtype=float).reshape(-1)
            else:
                row = next(csv.reader([s]))
                k, x = int(row[0]), np.asarray([float(v) for v in row[1:]], dtype=float)
            if x.size == 0 or not np.all(np.isfinite(x)):
                raise ValueError("empty or non-finite state")
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise InputError(f"line {line_no}: malformed trace record: {exc}") from None
        if k != expected:
            raise InputError(f"line {line_no}: expected instant {expected}, got {k}")
        expected += 1
        yield line_no, k, x


def open_trace(path: str) -> TextIO:
    if path == "-":
        return sys.stdin
    try:
        return open(path, encoding="utf-8")
    except OSError:
        try:
            import io
            return io.StringIO(read_text(path))
        except OSError as exc:
            raise InputError(f"cannot read trace {path}: {exc}") from None


def _emit(out: TextIO, obj) -> None:
    out.write(json.dumps(obj) + "\n")
    out.flush()


# --------------------------------------------------------------------------
# Commands


def cmd_precompute(args, out: TextIO) -> int:
    model, f, g, cfg, mode = build_setup(args)
    sf = segment(f, model.state_bounds.tolist())
    if mode is Mode.OUTER:
        print("warning: outer rasterization may miss alarms (feasible sets over-approximated)",
              file=sys.stderr)
    fs = compute_feasible_sets(sf, model, g, cfg, mode)
    for k in range(fs.horizon + 1):
        seg = sf.segment_at(k)
        out.write(f"k={k} op={seg.op.value} X={fs.X[k].count()} Xhat={fs.Xhat[k].count()}\n")
    Path(args.out).write_text(dumps_artifact(fs), encoding="utf-8")
    out.write(f"wrote {args.out}\n")
    return EXIT_OK


def cmd_monitor(args, out: TextIO) -> int:
    try:
        fs = load_artifact(args.artifact)
    except (OSError, ArtifactError) as exc:
        raise InputError(f"artifact {args.artifact}: {exc}") from None
    f = read_formula(args.formula, fs.geometry.ndim)
    sf = segment(f, list(fs.geometry.bounds))
    try:
        st = init_monitor(fs, sf)
    except ProvenanceError as exc:
        raise InputError(str(exc)) from None
    base = init_baseline(sf) if args.baseline else None
    mine, theirs = [], []
    src = open_trace(args.trace)
    try:
        for line_no, k, x in iter_trace(src):
            if x.shape != (fs.geometry.ndim,):
                raise InputError(f"line {line_no}: state has {x.size} components, expected {fs.geometry.ndim}")
            if k > sf.horizon:
                print(f"note: trace continues past horizon {sf.horizon}; line {line_no} onwards ignored",
                      file=sys.stderr)
                break
            if not st.done:
                v = step(st, x)
                mine.append(v)
                _emit(out, {**v.to_json(), "stream": "model"} if base else v.to_json())
            if base is not None and not base.verdict:
                bv = model_free_step(base, x)
                theirs.append(bv)
                _emit(out, {**bv.to_json(), "stream": "baseline"})
            if st.done and (base is None or base.verdict):
                break
    except MonitorError as exc:
        raise InputError(str(exc)) from None
    finally:
        if src is not sys.stdin:
            src.close()
    violated = st.verdict is Outcome.VIOLATED
    if base is not None:
        mk = next((v.k for v in mine if v.violated), None)
        bk = next((v.k for v in theirs if v.violated), None)
        _emit(out, {"summary": {"model_violation": mk, "baseline_violation": bk,
                                "observed": len(theirs), "lead": lead_time(mine, theirs)}})
    return EXIT_VIOLATED if violated else EXIT_OK


def cmd_eval(args, out: TextIO) -> int:
    f = read_formula(args.formula)
    src = open_trace(args.trace)
    try:
        pts = [x for _, _, x in iter_trace(src)]
    finally:
        if src is not sys.stdin:
            src.close()
    if not pts:
        raise InputError("empty trace")
    dims = {p.size for p in pts}
    if len(dims) != 1:
        raise InputError("trace states have inconsistent dimensions")
    trace = Trace(0, np.array(pts))
    if f.dims() and max(f.dims()) >= trace.points.shape[1]:
        raise InputError("formula refers to a dimension the trace does not have")
    try:
        ok = eval_trace(f, trace, 0)
    except TraceTooShort as exc:
        raise InputError(str(exc)) from None
    out.write(("true" if ok else "false") + "\n")
    return EXIT_OK if ok else EXIT_FALSE


def cmd_oracle_check(args, out: TextIO) -> int:
    model, f, g, cfg, mode = build_setup(args)
    sf = segment(f, model.state_bounds.tolist())
    lat = ControlLattice(cfg.controls.counts, args.budget)
    n_u = len(lat.points(model.control_bounds))
    try:
        lat.check(n_u, sf.horizon)
    except BudgetExceeded as exc:
        out.write(f"budget exceeded: {exc}\n")
        return EXIT_BUDGET
    fs = compute_feasible_sets(sf, model, g, cfg, mode)
    all_ok = True
    for k in range(sf.horizon + 1):
        ref = oracle_feasible_set(model, sf, k, g, lat)
        got = fs.X[k]
        agree = 100.0 * float(np.mean(ref.flat == got.flat))
        rel = "equal" if got == ref else ("subset" if got <= ref else ("superset" if ref <= got else "incomparable"))
        out.write(f"k={k} agreement={agree:.2f}% computed_vs_oracle={rel}\n")
        all_ok &= got == ref
    if cfg.scheme is not Scheme.CENTER:
        out.write("note: the oracle tests cell centers; only the center scheme is expected to match exactly\n")
    return EXIT_OK if all_ok else EXIT_DISAGREE


def cmd_plotdata(args, out: TextIO) -> int:
    try:
        fs = load_artifact(args.artifact)
    except (OSError, ArtifactError) as exc:
        raise InputError(f"artifact {args.artifact}: {exc}") from None
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    g = fs.geometry
    for name, sets in (("X", fs.X), ("Xhat", fs.Xhat)):
        path = dest / f"{name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if g.ndim == 1:
                w.writerow(["k", "dim", "interval_lo", "interval_hi"])
                for k, s in enumerate(sets):
                    for lo, hi in s.intervals():
                        w.writerow([k, 1, f"{lo:.10g}", f"{hi:.10g}"])
            else:
                head = ["k"] + [f"i{d + 1}" for d in range(g.ndim)]
                head += [f"{b}{d + 1}" for d in range(g.ndim) for b in ("lo", "hi")]
                w.writerow(head)
                edges = [g.edges(d) for d in range(g.ndim)]
                for k, s in enumerate(sets):
                    for idx in np.argwhere(s.mask):
                        row = [k, *idx.tolist()]
                        for d, i in enumerate(idx):
                            row += [f"{edges[d][i]:.10g}", f"{edges[d][i + 1]:.10g}"]
                        w.writerow(row)
        out.write(f"wrote {path}\n")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--grid", help="cell counts (e.g. 500 or 200,120) or a grid config file")
    common.add_argument("--grid-config", help="grid config JSON (cells, control_samples, scheme, epsilon, mode)")
    common.add_argument("--control-samples", type=lambda s: [int(v) for v in s.split(",")],
                        help="control samples per dimension, e.g. 201 or 21,21")
    common.add_argument("--scheme", choices=[s.value for s in Scheme])
    common.add_argument("--epsilon", type=float)
    common.add_argument("--mode", choices=[m.value for m in Mode])
    common.add_argument("--budget", type=int, default=DEFAULT_BUDGET,
                        help="oracle enumeration budget in simulated steps")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stlmon", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("precompute", parents=[common], help="compute and store feasible sets")
    sp.add_argument("--system", required=True)
    sp.add_argument("--formula", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_precompute)

    sp = sub.add_parser("monitor", parents=[common], help="run the online monitor over a trace")
    sp.add_argument("--artifact", required=True)
    sp.add_argument("--formula", required=True)
    sp.add_argument("--trace", default="-", help="CSV or JSONL trace; '-' reads standard input")
    sp.add_argument("--baseline", action="store_true", help="also run the model-free comparator")
    sp.set_defaults(func=cmd_monitor)

    sp = sub.add_parser("eval", parents=[common], help="evaluate a formula on a complete trace")
    sp.add_argument("--formula", required=True)
    sp.add_argument("--trace", required=True)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("oracle-check", parents=[common], help="compare feasible sets with brute force")
    sp.add_argument("--system", required=True)
    sp.add_argument("--formula", required=True)
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("plotdata", parents=[common], help="export feasible sets as CSV")
    sp.add_argument("--artifact", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None, out: TextIO | None = None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args, out)
    except OverlapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OVERLAP
    except BudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (InputError, FormulaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
