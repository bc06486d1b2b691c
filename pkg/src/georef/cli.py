"""Command line: ``georef generate | run | compare``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io, metrics, sim
from .entropy import detection_entropy
from .geometry import LandmarkMap, Trajectory
from .graph import SolverError
from .pipeline import MODES, PipelineConfig, record_entropies, run_session

log = logging.getLogger("georef")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3

LAYOUTS = {
    "straight": sim.straight_layout,
    "urban_block": sim.urban_block_layout,
    "mixed": sim.mixed_layout,
}

SCENARIO_FILES = {"map": "map.json", "truth": "truth.csv", "prior": "prior.csv",
                  "detections": "detections.json"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# commands


def cmd_generate(layout, noise: sim.NoiseModel, seed: int, out) -> dict:
    """Write map, truth, prior, detections, an entropy profile and scenario metadata."""
    if isinstance(layout, str):
        layout = LAYOUTS[layout]() if layout in LAYOUTS else io.read_layout(layout)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        polys = sim.build_map_polylines(layout)
        sc = sim.generate_scenario(layout, noise, seed)
    except (KeyError, TypeError, ValueError) as exc:
        raise io.DataError("layout", f"invalid layout: {exc}") from exc
    paths = {k: out / v for k, v in SCENARIO_FILES.items()}
    io.write_map(paths["map"], polys, name=layout.get("name", ""))
    io.write_trajectory(paths["truth"], sc.ground_truth)
    io.write_trajectory(paths["prior"], sc.prior)
    io.write_detections(paths["detections"], sc.detections)
    cfg = PipelineConfig()
    ent = [sim_entropy(d, cfg) for d in sc.detections]
    io.write_trace(out / "entropy.csv", ent, {})
    meta = {"seed": seed, "noise": noise.to_dict(), "layout": layout, "frames": len(sc)}
    (out / "scenario.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    log.info("wrote %d frames to %s (prior ATE %s m)", len(sc), out,
             io.fmt(metrics.ate(sc.prior, sc.ground_truth)))
    return paths


def sim_entropy(det, cfg: PipelineConfig) -> float:
    return detection_entropy(det.polylines, cfg.entropy_simplify_tol)


def _load_inputs(map_path, prior_path, det_path, cfg: PipelineConfig):
    polys, _ = io.read_map(map_path)
    prior = io.read_trajectory(prior_path)
    dets = io.read_detections(det_path)
    if len(dets) != len(prior):
        raise io.DataError(det_path, f"{len(dets)} detection frames but the prior has {len(prior)} poses")
    lmap = LandmarkMap(polys, step=cfg.resample_step, weight=cfg.dalmr_weight)
    return polys, lmap, prior, dets


def _evaluate(est: Trajectory, truth: Trajectory | None, records):
    if truth is None:
        return None
    if len(truth) != len(est):
        raise io.DataError("truth", f"truth has {len(truth)} poses, estimate has {len(est)}")
    return metrics.evaluate(est, truth, record_entropies(records))


def cmd_run(map_path, prior_path, det_path, out, cfg: PipelineConfig = PipelineConfig(),
            truth_path=None, plots: bool = False) -> dict:
    """Run one session and write trajectory, per-frame records and (with truth) metrics."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    polys, lmap, prior, dets = _load_inputs(map_path, prior_path, det_path, cfg)
    truth = io.read_trajectory(truth_path) if truth_path else None
    est, records = run_session(lmap, prior, dets, cfg)
    io.write_trajectory(out / "trajectory.csv", est)
    io.write_records(out / "records.jsonl", records)
    io.write_config(out / "config.yaml", cfg)
    rep = _evaluate(est, truth, records)
    result = {"trajectory": est, "records": records, "report": rep}
    if rep is not None:
        io.write_metrics_table(out / "metrics.csv", [_row(cfg.mode, rep)])
        io.write_trace(out / "trace.csv", rep.entropy,
                       {"rpe_trans_m": rep.rpe_trans, "rpe_rot_deg": rep.rpe_rot})
    else:
        io.write_trace(out / "trace.csv", record_entropies(records), {})
    if plots:
        from . import plots as P

        P.plot_trajectories(out / "trajectory.svg", polys, truth, prior, {cfg.mode: est}, cfg.mode)
        if rep is not None:
            P.plot_traces(out / "traces.svg", rep.entropy, {cfg.mode: rep.rpe_trans}, cfg.mode)
    return result


def _row(mode: str, rep: metrics.MetricReport, status: str = "ok") -> dict:
    return {"mode": mode, "ate_m": rep.ate_rmse, "rpe_trans_m": rep.rpe_trans_rmse,
            "rpe_rot_deg": rep.rpe_rot_rmse, "status": status}


def cmd_compare(scenario, modes, out, cfg: PipelineConfig = PipelineConfig(), plots: bool = True) -> list:
    """Run every mode on one scenario directory; failures mark their row and the loop goes on."""
    scenario, out = Path(scenario), Path(out)
    out.mkdir(parents=True, exist_ok=True)
    files = {k: scenario / v for k, v in SCENARIO_FILES.items()}
    polys, lmap, prior, dets = _load_inputs(files["map"], files["prior"], files["detections"], cfg)
    truth = io.read_trajectory(files["truth"])
    rows, estimates, rpe = [], {}, {}
    entropy = None
    for mode in modes:
        try:
            est, records = run_session(lmap, prior, dets, replace(cfg, mode=mode))
        except (SolverError, ValueError) as exc:
            log.error("mode %s failed: %s", mode, exc)
            rows.append({"mode": mode, "status": f"failed: {exc}".replace("\n", " ")})
            continue
        rep = _evaluate(est, truth, records)
        io.write_trajectory(out / f"trajectory_{mode}.csv", est)
        rows.append(_row(mode, rep))
        estimates[mode], rpe[mode] = est, rep.rpe_trans
        entropy = rep.entropy
    io.write_metrics_table(out / "compare.csv", rows)
    prior_rep = metrics.evaluate(prior, truth)
    io.write_metrics_table(out / "prior.csv", [_row("prior", prior_rep)])
    if entropy is not None:
        io.write_trace(out / "trace.csv", entropy, {f"rpe_trans_{m}": v for m, v in rpe.items()})
    if plots:
        from . import plots as P

        P.plot_trajectories(out / "trajectories.svg", polys, truth, prior, estimates)
        if entropy is not None:
            P.plot_traces(out / "traces.svg", entropy, rpe)
    return rows


# ---------------------------------------------------------------------------
# argument handling


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="georef", description="Self-tuning lane-marking geo-referencing.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="simulate a scenario")
    g.add_argument("--layout", required=True,
                   help=f"layout JSON file or built-in name ({', '.join(LAYOUTS)})")
    g.add_argument("--noise", help="YAML file with NoiseModel fields")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat YAML config; missing keys take defaults")
        sp.add_argument("--seed", type=int, help="association RNG seed (overrides config)")
        sp.add_argument("--window", type=int, help="optimisation window in frames (overrides config)")
        sp.add_argument("--workers", type=int, help="hypothesis-scoring threads (overrides config)")
        sp.add_argument("--out", required=True)

    r = sub.add_parser("run", help="geo-reference one session")
    r.add_argument("--map", required=True)
    r.add_argument("--prior", required=True)
    r.add_argument("--detections", required=True)
    r.add_argument("--truth")
    r.add_argument("--mode", choices=MODES)
    r.add_argument("--plots", action="store_true", help="write SVG plots")
    common(r)

    c = sub.add_parser("compare", help="run several modes on a scenario directory")
    c.add_argument("--scenario", required=True)
    c.add_argument("--modes", default=",".join(MODES), help="comma-separated mode list")
    c.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True)
    common(c)
    return p


def _config(args) -> PipelineConfig:
    cfg = io.read_config(args.config) if args.config else io.build_config({})
    if getattr(args, "mode", None):
        cfg = replace(cfg, mode=args.mode)
    dc = cfg.dcsac
    if args.seed is not None:
        dc = replace(dc, rng_seed=args.seed)
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        dc = replace(dc, workers=args.workers)
    cfg = replace(cfg, dcsac=dc)
    if args.window is not None:
        if args.window < 1:
            raise UsageError("--window must be >= 1")
        cfg = replace(cfg, opt_window=args.window)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "generate":
            noise = io.read_noise(args.noise) if args.noise else sim.NoiseModel()
            cmd_generate(args.layout, noise, args.seed, args.out)
        elif args.command == "run":
            cfg = _config(args)
            res = cmd_run(args.map, args.prior, args.detections, args.out, cfg, args.truth, args.plots)
            if res["report"] is not None:
                rep = res["report"]
                print(f"{cfg.mode}: ATE {io.fmt(rep.ate_rmse)} m, RPE {io.fmt(rep.rpe_trans_rmse)} m / "
                      f"{io.fmt(rep.rpe_rot_rmse)} deg")
        else:
            modes = [m.strip() for m in args.modes.split(",") if m.strip()]
            bad = [m for m in modes if m not in MODES]
            if bad or not modes:
                raise UsageError(f"unknown mode(s) {bad}; choose from {', '.join(MODES)}")
            rows = cmd_compare(args.scenario, modes, args.out, _config(args), args.plots)
            for row in rows:
                cells = [io.fmt(row[k]) if k in row else "-" for k in ("ate_m", "rpe_trans_m", "rpe_rot_deg")]
                print(row["mode"], *cells, row["status"])
    except UsageError as exc:
        print(f"georef: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"georef: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (io.DataError, ValueError) as exc:
        print(f"georef: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
