"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data or format error, 3 solver failure.
Diagnostics go to stderr; results go to files only.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace

from .config import ConfigError, describe_keys, load_config
from .dem import read_dem, write_dem
from .evaluation import (AblationRow, ablation_table, compute_stats, parse_masks, table_csv)
from .graph import write_graph
from .pipeline import PipelineConfig, SolveError, run_batch, run_online
from .sensorlog import read_log, write_log
from .sim import FieldConfig, NoiseConfig, export_dem, generate_truth, simulate_sensors
from .solver import LinearSolveFailure
from .trajectory import read_trajectory, write_trajectory

log = logging.getLogger("multicue")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _need_file(path):
    if path is not None and not os.path.isfile(path):
        raise DataError(f"input file not found: {path}")
    return path


def _need_outdir(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise DataError(f"output directory does not exist: {parent}")
    return path


def _configs(path):
    if path is None:
        return PipelineConfig(), FieldConfig(), NoiseConfig()
    _need_file(path)
    return load_config(path)


def _load(fn, path):
    if path is None:
        return None
    _need_file(path)
    try:
        return fn(path)
    except (ValueError, KeyError, IndexError) as exc:
        raise DataError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------

def cmd_simulate(a) -> int:
    pipe, field_cfg, noise = _configs(a.config)
    if a.seed is not None:
        field_cfg = replace(field_cfg, seed=a.seed)
        noise = replace(noise, seed=a.seed)
    if a.gps_mode:
        noise = replace(noise, gps_mode=a.gps_mode)
    if a.noiseless:
        noise = NoiseConfig.noiseless(**{k: getattr(noise, k) for k in
                                         ("gps_mode", "outages", "seed", "lid_step", "wo_rate",
                                          "vo_rate", "gps_rate", "imu_rate")})
    if noise.lid_step != pipe.step_wo:
        log.warning("lid_step %.3g differs from step_wo %.3g; LIDAR readings will not align with nodes",
                    noise.lid_step, pipe.step_wo)
    os.makedirs(a.out, exist_ok=True)
    truth = generate_truth(field_cfg)
    slog = simulate_sensors(truth, noise)
    write_log(slog, os.path.join(a.out, "sensors.log"))
    write_dem(export_dem(field_cfg), os.path.join(a.out, "dem.txt"))
    write_trajectory(truth, os.path.join(a.out, "truth.txt"), tag="GT")
    log.info("simulated %d truth samples, %d WO readings into %s", len(truth), len(slog.wo), a.out)
    return EXIT_OK


def _pipeline_inputs(a):
    pipe, _, _ = _configs(a.config)
    if a.cues:
        masks = parse_masks(a.cues)
        if len(masks) != 1:
            raise UsageError("--cues takes a single mask")
        pipe = replace(pipe, cues=masks[0])
    slog = _load(read_log, a.log)
    dem = _load(read_dem, a.dem)
    hints = _load(read_trajectory, a.row_hints)
    return pipe, slog, dem, hints


def cmd_optimize(a) -> int:
    _need_outdir(a.out)
    pipe, slog, dem, hints = _pipeline_inputs(a)
    init = _load(read_trajectory, a.initial)
    res = run_batch(slog, pipe, dem, hints, init)
    write_trajectory(res.trajectory, a.out, tag="EST")
    if a.graph:
        write_graph(res.graph, a.graph)
    r = res.report
    log.info("batch: %d nodes, %d factors, chi2 %.6g -> %.6g in %d iterations (%.2fs)",
             len(res.graph), len(res.graph.factors), res.reports[0].initial_chi2, r.final_chi2,
             sum(x.iterations for x in res.reports), sum(x.wall_time for x in res.reports))
    return EXIT_OK


def cmd_online(a) -> int:
    _need_outdir(a.out)
    pipe, slog, dem, hints = _pipeline_inputs(a)
    res = run_online(slog, pipe, dem, hints)
    write_trajectory(res.trajectory, a.out, tag="EST")
    if a.reports:
        with open(a.reports, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node", "window_nodes", "factors", "iterations", "initial_chi2", "final_chi2",
                        "converged"])
            for k, r in enumerate(res.reports):
                w.writerow([k, r.n_nodes, r.n_factors, r.iterations, repr(r.initial_chi2),
                            repr(r.final_chi2), int(r.converged)])
    if a.graph:
        write_graph(res.graph, a.graph)
    wt = [r.wall_time for r in res.reports]
    log.info("online: %d steps, mean %.3fs, max %.3fs per step", len(wt), sum(wt) / max(len(wt), 1),
             max(wt, default=0.0))
    return EXIT_OK


def cmd_ablate(a) -> int:
    _need_outdir(a.out)
    pipe, _, _ = _configs(a.config)
    try:
        masks = parse_masks(a.masks)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not masks:
        raise UsageError("--masks is empty")
    slog = _load(read_log, a.log)
    dem = _load(read_dem, a.dem)
    truth = _load(read_trajectory, a.truth)
    hints = truth if a.use_row_hints else None
    rows = ablation_table(slog, dem, truth, masks, pipe, online=a.online, hints=hints)
    with open(a.out, "w") as fh:
        fh.write(table_csv(rows))
    return EXIT_OK


def cmd_eval(a) -> int:
    _need_outdir(a.out)
    est = _load(read_trajectory, a.estimate)
    truth = _load(read_trajectory, a.truth)
    try:
        stats = compute_stats(est, truth)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    label = os.path.splitext(os.path.basename(a.estimate))[0]
    with open(a.out, "w") as fh:
        fh.write(table_csv([AblationRow(frozenset(), "eval", stats)], labels=[label]))
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="multicue", description="Multi-cue pose-graph localization for field robots.",
                formatter_class=argparse.RawDescriptionHelpFormatter,
                epilog="configuration keys and defaults:\n" + describe_keys())
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    verbose = _Parser(add_help=False)
    verbose.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS,
                         help="log progress to stderr")

    s = sub.add_parser("simulate", parents=[verbose], help="generate a synthetic field run")
    s.add_argument("--config", help="key = value config file (default: built-in defaults)")
    s.add_argument("--out", required=True, help="output directory for sensors.log, dem.txt, truth.txt")
    s.add_argument("--seed", type=int, help="seed for terrain and noise (default: config seed, 0)")
    s.add_argument("--gps-mode", choices=("RTK", "PPP"), help="GPS mode outside outages (default: config)")
    s.add_argument("--noiseless", action="store_true", help="zero every noise level")
    s.set_defaults(func=cmd_simulate)

    def common(sp):
        sp.add_argument("--log", required=True, help="sensor log file")
        sp.add_argument("--dem", help="DEM file (omit to disable the elevation prior)")
        sp.add_argument("--config", help="key = value config file")
        sp.add_argument("--cues", help="single cue mask such as GPS+WO+VO (default: config cues)")
        sp.add_argument("--row-hints", help="GT file whose row indices guide MRF neighbor search")
        sp.add_argument("--out", required=True, help="output trajectory (EST lines)")
        sp.add_argument("--graph", help="also dump the final graph here")

    s = sub.add_parser("optimize", parents=[verbose], help="batch optimization over the whole log")
    common(s)
    s.add_argument("--initial", help="EST trajectory with one pose per node to start from")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("online", parents=[verbose], help="sliding-window incremental optimization")
    common(s)
    s.add_argument("--reports", help="per-step solver report CSV")
    s.set_defaults(func=cmd_online)

    s = sub.add_parser("ablate", parents=[verbose], help="error table over several cue masks")
    s.add_argument("--log", required=True, help="sensor log file")
    s.add_argument("--dem", help="DEM file")
    s.add_argument("--truth", required=True, help="ground-truth GT file")
    s.add_argument("--masks", required=True, help="semicolon-separated masks, e.g. 'GPS;GPS+WO;ALL'")
    s.add_argument("--config", help="key = value config file")
    s.add_argument("--online", action="store_true", help="add an online row per mask")
    s.add_argument("--use-row-hints", action="store_true", help="take MRF row indices from the truth file")
    s.add_argument("--out", required=True, help="output CSV")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("eval", parents=[verbose], help="error statistics of a trajectory against ground truth")
    s.add_argument("--estimate", required=True, help="EST trajectory")
    s.add_argument("--truth", required=True, help="GT trajectory")
    s.add_argument("--out", required=True, help="output CSV")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root = logging.getLogger()
    if not root.handlers:
        root.addHandler(handler)
    try:
        parser = build_parser()
        try:
            a = parser.parse_args(argv)
        except SystemExit as exc:   # --help
            return EXIT_OK if not exc.code else EXIT_USAGE
        root.setLevel(logging.INFO if a.verbose else logging.WARNING)
        if a.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return a.func(a)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolveError, LinearSolveFailure) as exc:
        print(f"error: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
