"""Command-line interface: single estimates, fixtures and benchmark sweeps.

Config files are flat ``key = value`` text (``#`` starts a comment, lists
are comma-separated). Command-line flags override file values. Progress
goes to stderr; data goes to stdout or the ``--output`` path.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import multiprocessing
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import LgmiError, validate_samples
from .estimators import (
    MiTask,
    estimate_entropy_kl,
    estimate_entropy_lgde,
    estimate_mi_kl,
    estimate_mi_ksg,
    estimate_mi_lgde,
)
from .lgde import LgdeOptions, OptimizerOptions
from .neighbors import BandwidthRule
from .synth import Family, RelationshipSpec, generate, read_csv, true_mi, write_csv

SCHEMA = "schema=1"
SWEEP_COLUMNS = [SCHEMA, "family", "theta", "n", "estimator", "seed", "estimate", "truth",
                 "abs_error", "n_converged", "n_fallback", "n_maxiters", "error"]
ESTIMATORS = ("lgde", "ksg", "kl-decomposed")
DEFAULT_THETAS = tuple(2.0**-e for e in range(10, -1, -1))


class ConfigError(LgmiError):
    pass


class EmptyResults(LgmiError):
    pass


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


def _fmt(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _floats(text):
    return [float(t) for t in str(text).replace(" ", "").split(",") if t]


def _ints(text):
    return [int(t) for t in str(text).replace(" ", "").split(",") if t]


def parse_truncation(text):
    """Neighbor count for the likelihood sum; ``all`` (or 0) means no truncation."""
    if text is None:
        return None
    if isinstance(text, int):
        return text or None
    t = str(text).strip().lower()
    if t in ("all", "none", "0", ""):
        return None
    return int(t)


def _names(text):
    return [t.strip() for t in str(text).split(",") if t.strip()]


def read_config(path) -> dict:
    """Flat key = value file into a dict of raw strings."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = lambda s: s.strip().lower().replace("-", "_")
    try:
        parser.read_string("[top]\n" + Path(path).read_text())
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return dict(parser["top"])


@dataclass(frozen=True)
class SweepConfig:
    families: tuple = tuple(f.value for f in Family)
    theta_grid: tuple = DEFAULT_THETAS
    n: int = 2500
    k: int = 5
    estimators: tuple = ESTIMATORS
    seeds: tuple = (0,)
    output: str = "sweep.csv"
    rule: str = BandwidthRule.PER_POINT.value
    truncation_k: int | None = None
    max_iters: int = 200
    grad_tol: float = 1e-6
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    jobs: int = 1

    def __post_init__(self):
        for fam in self.families:
            Family(fam)
        if not self.theta_grid or any(not t > 0 for t in self.theta_grid):
            raise ConfigError("theta_grid must be non-empty and strictly positive")
        if list(self.theta_grid) != sorted(self.theta_grid):
            raise ConfigError("theta_grid must be sorted")
        if not self.estimators or any(e not in ESTIMATORS for e in self.estimators):
            raise ConfigError(f"estimators must be a non-empty subset of {ESTIMATORS}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        BandwidthRule(self.rule)

    def lgde_options(self) -> LgdeOptions:
        return LgdeOptions(k=self.k, rule=self.rule, truncation_k=self.truncation_k,
                           optimizer=OptimizerOptions(max_iters=self.max_iters, grad_tol=self.grad_tol,
                                                      wolfe_c1=self.wolfe_c1, wolfe_c2=self.wolfe_c2))


_CONFIG_PARSERS = {
    "families": lambda v: tuple(_names(v)),
    "family": lambda v: tuple(_names(v)),
    "theta_grid": lambda v: tuple(_floats(v)),
    "theta": lambda v: tuple(_floats(v)),
    "n": int,
    "k": int,
    "estimators": lambda v: tuple(_names(v)),
    "estimator": lambda v: tuple(_names(v)),
    "seeds": lambda v: tuple(_ints(v)),
    "seed": lambda v: tuple(_ints(v)),
    "output": str,
    "rule": str,
    "truncation_k": parse_truncation,
    "max_iters": int,
    "grad_tol": float,
    "wolfe_c1": float,
    "wolfe_c2": float,
    "jobs": int,
}
_ALIASES = {"family": "families", "theta": "theta_grid", "estimator": "estimators", "seed": "seeds"}


def build_sweep_config(file_values: dict, overrides: dict) -> SweepConfig:
    merged = {}
    for source in (file_values, overrides):
        for key, raw in source.items():
            if raw is None:
                continue
            if key not in _CONFIG_PARSERS:
                raise ConfigError(f"unknown config key {key!r}")
            try:
                merged[_ALIASES.get(key, key)] = _CONFIG_PARSERS[key](raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
    try:
        return SweepConfig(**merged)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _run_cell(cell):
    family, theta, estimator, seed, cfg = cell
    row = {SCHEMA: 1, "family": family, "theta": theta, "n": cfg.n, "estimator": estimator,
           "seed": seed, "estimate": "", "truth": "", "abs_error": "", "n_converged": "",
           "n_fallback": "", "n_maxiters": "", "error": ""}
    t0 = time.perf_counter()
    try:
        spec = RelationshipSpec(family, theta, cfg.n, seed)
        truth = true_mi(spec)
        row["truth"] = truth
        task = MiTask(generate(spec), (0,), (1,))
        if estimator == "lgde":
            rep = estimate_mi_lgde(task, cfg.lgde_options())
        elif estimator == "ksg":
            rep = estimate_mi_ksg(task, cfg.k)
        else:
            rep = estimate_mi_kl(task, cfg.k)
        row.update(estimate=rep.value, abs_error=abs(rep.value - truth), n_converged=rep.n_converged,
                   n_fallback=rep.n_fallback, n_maxiters=rep.n_maxiters)
    except Exception as exc:  # recorded per cell, the sweep goes on
        row["error"] = f"{type(exc).__name__}: {exc}".replace("\n", " ")
    return row, time.perf_counter() - t0


def _row_key(row):
    return (row["family"], row["theta"], row["estimator"], row["seed"])


def run_sweep(cfg: SweepConfig, progress=_progress):
    """All cells of the sweep, sorted by (family, theta, estimator, seed).

    Returns (rows, wall_times) where wall_times maps a row key to seconds.
    """
    cells = [(fam, float(th), est, int(seed), cfg)
             for fam in cfg.families for th in cfg.theta_grid
             for est in cfg.estimators for seed in cfg.seeds]
    results = []
    if cfg.jobs > 1:
        # spawn: forking after numba's OpenMP pool has started is unsafe
        ctx = multiprocessing.get_context("spawn")
        with ProcessPoolExecutor(max_workers=cfg.jobs, mp_context=ctx) as pool:
            for i, res in enumerate(pool.map(_run_cell, cells), 1):
                results.append(res)
                progress(f"[{i}/{len(cells)}] {_row_key(res[0])}")
    else:
        for i, cell in enumerate(cells, 1):
            results.append(_run_cell(cell))
            progress(f"[{i}/{len(cells)}] {_row_key(results[-1][0])}")
    results.sort(key=lambda r: _row_key(r[0]))
    return [r for r, _ in results], {_row_key(r): t for r, t in results}


def write_sweep_csv(rows, path_or_file):
    """Rows as CSV with fixed columns, LF endings and round-trip float text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in SWEEP_COLUMNS])
    text = buf.getvalue()
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text, newline="")
    return text


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or reader.fieldnames[0] != SCHEMA:
            raise ConfigError(f"{path}: not a {SCHEMA} sweep file")
        return list(reader)


def emit_plot_data(rows, out_dir):
    """One whitespace table per family plus ``summary.txt``.

    Table columns: theta, truth, then the seed-averaged estimate of each
    estimator in sweep order. Cells that errored are skipped.
    """
    good = [r for r in rows if not r.get("error")]
    if not good:
        raise EmptyResults("no successful sweep rows")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    estimators = [e for e in ESTIMATORS if any(r["estimator"] == e for r in good)]
    summary = []
    written = []
    for fam in sorted({r["family"] for r in good}):
        fam_rows = [r for r in good if r["family"] == fam]
        thetas = sorted({float(r["theta"]) for r in fam_rows})
        lines = ["# theta truth " + " ".join(estimators)]
        worst = {e: 0.0 for e in estimators}
        for th in thetas:
            at = [r for r in fam_rows if float(r["theta"]) == th]
            truth = float(at[0]["truth"])
            cols = [_fmt(th), _fmt(truth)]
            for e in estimators:
                vals = [float(r["estimate"]) for r in at if r["estimator"] == e]
                if vals:
                    mean = float(np.mean(vals))
                    worst[e] = max(worst[e], abs(mean - truth))
                    cols.append(_fmt(mean))
                else:
                    cols.append("nan")
            lines.append(" ".join(cols))
        path = out_dir / f"{fam}.dat"
        path.write_text("\n".join(lines) + "\n", newline="")
        written.append(path)
        for e in estimators:
            summary.append(f"{fam} {e} max_abs_error={worst[e]:.6g}")
    (out_dir / "summary.txt").write_text("\n".join(summary) + "\n", newline="")
    return written


def _load_matrix(path):
    data, header = read_csv(path)
    return validate_samples(data, header)


def _lgde_opts(args) -> LgdeOptions:
    return LgdeOptions(k=args.k, rule=args.rule, truncation_k=args.truncation_k)


def _report_json(rep) -> str:
    d = asdict(rep)
    d["estimator_name"] = rep.estimator_name.value
    return json.dumps(d, sort_keys=True, default=lambda o: o.tolist() if hasattr(o, "tolist") else str(o))


def _cmd_mi(args):
    samples = _load_matrix(args.input)
    xc = _ints(args.x_cols)
    yc = _ints(args.y_cols) if args.y_cols else [c for c in range(samples.d) if c not in xc]
    task = MiTask(samples.columns(xc + yc), tuple(range(len(xc))), tuple(range(len(xc), len(xc) + len(yc))))
    if args.estimator == "lgde":
        rep = estimate_mi_lgde(task, _lgde_opts(args))
    elif args.estimator == "ksg":
        rep = estimate_mi_ksg(task, args.k)
    else:
        rep = estimate_mi_kl(task, args.k)
    _emit(args, _report_json(rep))
    return 0


def _cmd_entropy(args):
    samples = _load_matrix(args.input)
    if args.cols:
        samples = samples.columns(_ints(args.cols))
    if args.estimator == "lgde":
        rep = estimate_entropy_lgde(samples, _lgde_opts(args))
    else:
        rep = estimate_entropy_kl(samples, args.k)
    _emit(args, _report_json(rep))
    return 0


def _emit(args, text):
    if args.output:
        Path(args.output).write_text(text + "\n")
    else:
        print(text)


def _cmd_gen(args):
    spec = RelationshipSpec(args.family, args.theta, args.n, args.seed)
    if args.output:
        write_csv(generate(spec), args.output)
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["x", "y"])
        for row in generate(spec).data:
            writer.writerow([_fmt(float(v)) for v in row])
        sys.stdout.write(buf.getvalue())
    _progress(f"true MI = {true_mi(spec):.10g} nats")
    return 0


def _cmd_sweep(args):
    file_values = read_config(args.config) if args.config else {}
    overrides = {"families": args.family, "theta_grid": args.theta, "n": args.n, "k": args.k,
                 "estimators": args.estimator, "seeds": args.seed, "output": args.output,
                 "rule": args.rule, "truncation_k": args.truncation_k, "jobs": args.jobs}
    cfg = build_sweep_config(file_values, overrides)
    rows, times = run_sweep(cfg)
    if cfg.output == "-":
        write_sweep_csv(rows, sys.stdout)
    else:
        write_sweep_csv(rows, cfg.output)
        # wall times vary run to run, so they live beside the data file
        timing = Path(str(cfg.output) + ".timing")
        timing.write_text("".join(f"{k[0]} {_fmt(k[1])} {k[2]} {k[3]} {t:.3f}\n" for k, t in times.items()))
    n_err = sum(1 for r in rows if r["error"])
    _progress(f"{len(rows)} cells, {n_err} error(s)")
    return 0 if n_err == 0 else 1


def _cmd_plotdata(args):
    rows = read_sweep_csv(args.input)
    out = args.output or "plotdata"
    for path in emit_plot_data(rows, out):
        _progress(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lgmi", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, estimators, default):
        sp.add_argument("--input", required=True, help="CSV file with a header row")
        sp.add_argument("--estimator", choices=estimators, default=default)
        sp.add_argument("--k", type=int, default=5)
        sp.add_argument("--rule", choices=[r.value for r in BandwidthRule], default=BandwidthRule.PER_POINT.value)
        sp.add_argument("--truncation-k", type=parse_truncation, default=None,
                        help="neighbors in the likelihood sum (default: all)")
        sp.add_argument("--output", help="write the JSON report here instead of stdout")

    mi = sub.add_parser("mi", help="one MI estimate from a CSV file")
    common(mi, ["lgde", "ksg", "kl-decomposed"], "lgde")
    mi.add_argument("--x-cols", default="0", help="comma-separated column indices of x")
    mi.add_argument("--y-cols", default=None, help="column indices of y (default: the rest)")
    mi.set_defaults(func=_cmd_mi)

    ent = sub.add_parser("entropy", help="one entropy estimate from a CSV file")
    common(ent, ["lgde", "kl"], "lgde")
    ent.add_argument("--cols", default=None, help="column indices to use (default: all)")
    ent.set_defaults(func=_cmd_entropy)

    gen = sub.add_parser("gen", help="write a synthetic x,y fixture")
    gen.add_argument("--family", required=True, choices=[f.value for f in Family])
    gen.add_argument("--theta", type=float, required=True)
    gen.add_argument("--n", type=int, default=2500)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--output")
    gen.set_defaults(func=_cmd_gen)

    sw = sub.add_parser("sweep", help="benchmark sweep to CSV")
    sw.add_argument("--config")
    sw.add_argument("--family", help="comma-separated families")
    sw.add_argument("--theta", help="comma-separated theta grid")
    sw.add_argument("--n", type=int)
    sw.add_argument("--k", type=int)
    sw.add_argument("--estimator", help="comma-separated subset of " + ",".join(ESTIMATORS))
    sw.add_argument("--rule", choices=[r.value for r in BandwidthRule])
    sw.add_argument("--truncation-k", help="neighbors in the likelihood sum, or all")
    sw.add_argument("--seed", help="comma-separated seeds")
    sw.add_argument("--jobs", type=int)
    sw.add_argument("--output", help="CSV path, or - for stdout")
    sw.set_defaults(func=_cmd_sweep)

    pd = sub.add_parser("plotdata", help="per-family plot tables from a sweep CSV")
    pd.add_argument("--input", required=True)
    pd.add_argument("--output", help="output directory (default: plotdata)")
    pd.set_defaults(func=_cmd_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (LgmiError, ValueError, OSError) as exc:
        _progress(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
