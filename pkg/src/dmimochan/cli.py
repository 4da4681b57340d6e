"""Command-line front end: generate / analyze / validate / classify.

Exit codes are stable contracts: 0 ok, 1 validation failure, 2 bad
configuration or inputs, 3 I/O failure, 4 corrupted tensor file.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import pipeline
from .config import (ConfigError, RunConfig, load_config, load_trajectory_csv,
                     resolved_config_dict)
from .geometry import (DEFAULT_GRID_N, Deployment, GeometryError, PointCloud,
                       classify_state, fresnel_coverage, fresnel_radius)
from .link_state import LinkStateTrace, write_trace_csv
from .small_scale import SmallScaleError
from .synthesis import SynthesisError, generate
from .tensorio import (TensorCorruptionError, TensorFormatError, read_tensor,
                       write_tensor)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CORRUPT = 4

#: default absolute/relative tolerances used by the validate command;
#: mirrors the acceptance tolerances of the round-trip criteria
DEFAULT_TOLERANCES = {
    "pg_intercept_db": 0.3,
    "pg_exponent": 0.03,
    "lsf_mean_db": 0.3,
    "lsf_sigma_db_los": 0.25,
    "lsf_sigma_db_olos": 0.35,
    "k_forgetting": 0.15,
    "rice_k_los": 0.15,
    "rice_k_olos": 0.10,
    "delay_spread_rel": 0.10,
    "transition_rate_rel": 0.15,
    "covariance_abs": 0.10,
    "hardening_ssf_min_db": 8.0,
}


def _write_truth_csvs(tensor, trajectory, out_dir: str) -> None:
    truth = tensor.truth
    write_trace_csv(truth.states, os.path.join(out_dir, "states.csv"))
    M, T = truth.lsf_db.shape
    snap = np.repeat(np.arange(T), M)
    anch = np.tile(np.arange(M), T)
    table = np.column_stack([
        snap, anch,
        truth.lsf_db.T.ravel(), truth.k_factor.T.ravel(),
        truth.pg_db.T.ravel(), truth.distances.T.ravel(),
    ])
    np.savetxt(os.path.join(out_dir, "lsf_truth.csv"), table, delimiter=",",
               header="snapshot,anchor,lsf_db,k_factor,pg_db,distance_m",
               comments="", fmt=["%d", "%d", "%.6f", "%.6f", "%.6f", "%.6f"])


def _write_meta(cfg: RunConfig, tensor, path: str) -> None:
    truth = tensor.truth
    meta = {
        "config": resolved_config_dict(cfg),
        "seed": cfg.seed,
        "drawn": {
            "transition_rates_per_m": truth.transition_rates.tolist(),
            "covariance_los": truth.covariance.los.C.tolist(),
            "covariance_olos": truth.covariance.olos.C.tolist(),
            "clamped_distances": truth.clamped_distances,
        },
        "tensor": {"anchors": int(tensor.data.shape[0]),
                   "snapshots": int(tensor.data.shape[1]),
                   "tones": int(tensor.data.shape[2])},
    }
    with open(path, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace
        cfg = RunConfig(cfg.deployment, cfg.trajectory,
                        replace(cfg.model, seed=args.seed))
    tensor = generate(cfg.model, cfg.deployment, cfg.trajectory)
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    write_tensor(args.out, tensor.data)
    _write_truth_csvs(tensor, cfg.trajectory, out_dir)
    from .config import write_trajectory_csv
    write_trajectory_csv(cfg.trajectory, os.path.join(out_dir, "trajectory.csv"))
    _write_meta(cfg, tensor, os.path.join(out_dir, "meta.json"))
    print(f"wrote {args.out} ({tensor.data.shape[0]}x{tensor.data.shape[1]}"
          f"x{tensor.data.shape[2]}), seed {cfg.seed}")
    return EXIT_OK


def _deployment_from_meta(meta_path: str) -> Deployment:
    try:
        with open(meta_path) as fh:
            meta = json.load(fh)
        dep = meta["config"]["deployment"]
        return Deployment(np.asarray(dep["anchors"], dtype=float),
                          dep["carrier_freq_hz"], dep["num_tones"],
                          dep["tone_spacing_hz"], dep["snapshot_rate_hz"],
                          tuple(map(tuple, dep["room"])))
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{meta_path}: cannot recover deployment ({exc})")


def _load_states(path, M: int, T: int) -> LinkStateTrace:
    from .link_state import read_trace_csv
    trace = read_trace_csv(path)
    if trace.states.shape != (M, T):
        raise ConfigError(f"{path}: state trace shape mismatch")
    return trace


def cmd_analyze(args) -> int:
    data = read_tensor(args.tensor)
    M, T, F = data.shape
    meta = args.meta or os.path.join(os.path.dirname(os.path.abspath(args.tensor)),
                                     "meta.json")
    deployment = _deployment_from_meta(meta)
    if deployment.num_anchors != M or deployment.num_tones != F:
        raise ConfigError("tensor dimensions disagree with the deployment")
    trajectory = load_trajectory_csv(args.trajectory, max_speed=np.inf)
    if trajectory.num_snapshots != T:
        raise ConfigError("trajectory length disagrees with the tensor")
    states = None
    if args.states:
        states = _load_states(args.states, M, T)
    report, artifacts = pipeline.analyze(data, trajectory, deployment, states,
                                         collect_figures=args.emit_figures)
    with open(args.report, "w") as fh:
        fh.write(report.to_json())
    if args.emit_figures:
        fig_dir = os.path.join(os.path.dirname(os.path.abspath(args.report)),
                               "figures")
        paths = pipeline.write_figure_csvs(artifacts, fig_dir)
        print(f"wrote {len(paths)} figure CSVs to {fig_dir}")
    print(f"wrote {args.report}")
    return EXIT_OK


def _check(rows, name, expected, estimated, tol) -> None:
    ok = estimated is not None and math.isfinite(estimated) \
        and abs(estimated - expected) <= tol
    rows.append((name, expected, estimated, tol, ok))


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    tol = dict(DEFAULT_TOLERANCES)
    if args.tolerances:
        with open(args.tolerances) as fh:
            user = json.load(fh)
        unknown = set(user) - set(tol)
        if unknown:
            raise ConfigError(f"{args.tolerances}: unknown tolerance keys {sorted(unknown)}")
        tol.update(user)

    work = args.workdir or os.path.join(os.path.dirname(os.path.abspath(args.config)),
                                        "validate_out")
    os.makedirs(work, exist_ok=True)
    tensor_path = os.path.join(work, "tensor.dmch")

    tensor = generate(cfg.model, cfg.deployment, cfg.trajectory)
    write_tensor(tensor_path, tensor.data)
    _write_truth_csvs(tensor, cfg.trajectory, work)
    from .config import write_trajectory_csv
    write_trajectory_csv(cfg.trajectory, os.path.join(work, "trajectory.csv"))
    _write_meta(cfg, tensor, os.path.join(work, "meta.json"))

    data = read_tensor(tensor_path)
    report, artifacts = pipeline.analyze(data, cfg.trajectory, cfg.deployment,
                                         tensor.truth.states,
                                         collect_figures=args.emit_figures)
    with open(os.path.join(work, "report.json"), "w") as fh:
        fh.write(report.to_json())
    if args.emit_figures:
        pipeline.write_figure_csvs(artifacts, os.path.join(work, "figures"))

    m = cfg.model
    rows: list = []
    from .geometry import LinkState
    for s in LinkState:
        lab = s.label.lower()
        st = report.state(s)
        _check(rows, f"pg_intercept_db_{lab}", m.path_gain[s].intercept_db,
               st.pg_intercept_db, tol["pg_intercept_db"])
        _check(rows, f"pg_exponent_{lab}", m.path_gain[s].exponent,
               st.pg_exponent, tol["pg_exponent"])
        if m.shadowing.sigma_db[s] > 0:
            _check(rows, f"lsf_mean_db_{lab}", 0.0, st.lsf_mean_db,
                   tol["lsf_mean_db"])
            _check(rows, f"lsf_sigma_db_{lab}", m.shadowing.sigma_db[s],
                   st.lsf_sigma_db, tol[f"lsf_sigma_db_{lab}"])
            _check(rows, f"k_forgetting_{lab}", m.shadowing.k_forgetting[s],
                   st.k_forgetting, tol["k_forgetting"])
        _check(rows, f"rice_k_{lab}", m.rice[s].k_factor, st.rice_k,
               tol[f"rice_k_{lab}"])
        target_ds = m.target_delay_spread[s]
        _check(rows, f"delay_spread_median_s_{lab}", target_ds,
               st.delay_spread_median_s, tol["delay_spread_rel"] * target_ds)
        if m.force_state is not None and s is m.force_state and \
                st.covariance is not None:
            est = np.asarray(st.covariance)
            drawn = tensor.truth.covariance[s].C
            err = np.nanmax(np.abs(est - drawn)) if np.isfinite(est).any() else None
            _check(rows, f"covariance_max_abs_err_{lab}", 0.0, err,
                   tol["covariance_abs"])
    if m.force_state is None and report.transition_rate_mean is not None:
        expected = float(tensor.truth.transition_rates.mean())
        _check(rows, "transition_rate_mean", expected,
               report.transition_rate_mean,
               tol["transition_rate_rel"] * expected)
    if report.hardening_ssf_gain_db is not None:
        rows.append(("hardening_ssf_gain_db", f">={tol['hardening_ssf_min_db']}",
                     report.hardening_ssf_gain_db, tol["hardening_ssf_min_db"],
                     report.hardening_ssf_gain_db >= tol["hardening_ssf_min_db"]))

    width = max(len(r[0]) for r in rows)
    print(f"{'parameter':<{width}}  {'expected':>12}  {'estimated':>12}  "
          f"{'tolerance':>10}  result")
    failures = 0
    for name, expected, estimated, tolerance, ok in rows:
        exp = f"{expected:.4g}" if isinstance(expected, float) else str(expected)
        est = "n/a" if estimated is None else f"{estimated:.4g}"
        print(f"{name:<{width}}  {exp:>12}  {est:>12}  {tolerance:>10.4g}  "
              f"{'pass' if ok else 'FAIL'}")
        failures += 0 if ok else 1
    print(f"{len(rows) - failures}/{len(rows)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_VALIDATION


def cmd_classify(args) -> int:
    cloud = PointCloud.from_text(args.cloud)
    anchors = PointCloud.from_text(args.anchors)
    if len(anchors) == 0:
        raise ConfigError(f"{args.anchors}: no anchors")
    trajectory = load_trajectory_csv(args.trajectory, max_speed=np.inf)
    if trajectory.num_snapshots == 0:
        raise ConfigError("empty trajectory")
    radius = args.radius if args.radius else fresnel_radius(args.carrier_freq)
    M = len(anchors)
    T = trajectory.num_snapshots
    coverage = np.empty((M, T))
    states = np.empty((M, T), dtype=np.int8)
    for m in range(M):
        for k in range(T):
            cov = fresnel_coverage(anchors.points[m], trajectory.positions[k],
                                   cloud, radius, args.grid_n)
            coverage[m, k] = cov
            states[m, k] = int(classify_state(cov))
    write_trace_csv(LinkStateTrace(states, coverage), args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmimochan",
        description="Spatially consistent D-MIMO industrial channel simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a channel tensor from a config")
    p.add_argument("config")
    p.add_argument("out", help="output tensor path (.dmch)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="estimate channel statistics from a tensor")
    p.add_argument("tensor")
    p.add_argument("trajectory", help="trajectory CSV (t,x,y,z)")
    p.add_argument("report", help="output report JSON path")
    p.add_argument("--states", default=None, help="state trace CSV for conditioning")
    p.add_argument("--meta", default=None, help="meta.json with the deployment")
    p.add_argument("--emit-figures", action="store_true",
                   help="write the CSV data behind each figure statistic")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate", help="generate, analyze and compare round-trip")
    p.add_argument("config")
    p.add_argument("--tolerances", default=None, help="JSON tolerance overrides")
    p.add_argument("--workdir", default=None)
    p.add_argument("--emit-figures", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("classify", help="Fresnel-coverage LoS/OLoS classification")
    p.add_argument("cloud", help="point-cloud text file")
    p.add_argument("trajectory", help="trajectory CSV (t,x,y,z)")
    p.add_argument("anchors", help="anchor positions text file")
    p.add_argument("out", help="output CSV path")
    p.add_argument("--radius", type=float, default=None,
                   help="cylinder radius in meters (default: two wavelengths)")
    p.add_argument("--carrier-freq", type=float, default=3.75e9)
    p.add_argument("--grid-n", type=int, default=DEFAULT_GRID_N)
    p.set_defaults(func=cmd_classify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GeometryError, TensorFormatError, SynthesisError,
            SmallScaleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TensorCorruptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CORRUPT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
