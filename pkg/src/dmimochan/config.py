"""Run configuration: JSON document with strict key checking, mapped onto
the deployment, trajectory and model parameter objects."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import DEFAULT_ROOM, Deployment, LinkState, Trajectory
from .large_scale import (CovarianceParams, PathGainModel, PerState,
                          ShadowingModel, D_MIN, D_MAX)
from .small_scale import RiceModel
from .synthesis import ModelConfig

#: anchor rail layout of the measured hall (m); anchors 1-6 on the north
#: rail west-to-east, 7-12 on the south rail east-to-west, 4 m up
DEFAULT_ANCHORS = np.array([
    [4.98, 11.17, 4.0],
    [8.97, 11.19, 4.0],
    [12.96, 11.19, 4.0],
    [16.96, 11.17, 4.0],
    [20.99, 11.17, 4.0],
    [24.96, 11.18, 4.0],
    [27.01, 1.57, 4.0],
    [23.32, 1.57, 4.0],
    [19.06, 1.56, 4.0],
    [15.04, 1.57, 4.0],
    [11.06, 1.56, 4.0],
    [7.06, 1.58, 4.0],
])

#: default mixed trajectory: a rectangle loop through the hall center
DEFAULT_WAYPOINTS = [[6.0, 3.5, 1.0], [26.0, 3.5, 1.0],
                     [26.0, 9.5, 1.0], [6.0, 9.5, 1.0]]


class ConfigError(ValueError):
    """Configuration problem, with a line-anchored message when possible."""


@dataclass(eq=False)
class RunConfig:
    """Everything one generation run needs: deployment, trajectory source
    and the model parameters including the master seed."""

    deployment: Deployment
    trajectory: Trajectory
    model: ModelConfig

    @property
    def seed(self) -> int:
        return self.model.seed


# nested map of every legal key; leaves are None
_SCHEMA = {
    "seed": None,
    "deployment": {
        "anchors": None,
        "carrier_freq_hz": None,
        "num_tones": None,
        "tone_spacing_hz": None,
        "snapshot_rate_hz": None,
        "room": None,
    },
    "trajectory": {
        "csv": None,
        "line": {"start": None, "stop": None, "speed_mps": None},
        "waypoints": {"points": None, "speed_mps": None, "duration_s": None,
                      "closed": None},
        "max_speed_mps": None,
    },
    "model": {
        "path_gain": {
            "los": {"intercept_db": None, "exponent": None},
            "olos": {"intercept_db": None, "exponent": None},
            "d0_m": None, "d_min_m": None, "d_max_m": None,
        },
        "shadowing": {
            "los": {"sigma_db": None, "k_forgetting": None},
            "olos": {"sigma_db": None, "k_forgetting": None},
        },
        "rice": {
            "los": {"nu": None, "sigma": None},
            "olos": {"nu": None, "sigma": None},
        },
        "covariance": {
            "los": {"mean": None, "std": None},
            "olos": {"mean": None, "std": None},
            "truncation": None, "std_is_variance": None, "policy": None,
        },
        "transition_rate_bounds": None,
        "n_io": None,
        "delay_spread": {"los_s": None, "olos_s": None, "sigma_log": None},
        "force_state": None,
        "initial_state": None,
    },
}


def _find_line(text: str, key: str) -> int | None:
    pattern = re.compile(r'"' + re.escape(key) + r'"\s*:')
    for lineno, line in enumerate(text.splitlines(), start=1):
        if pattern.search(line):
            return lineno
    return None


def _check_keys(node, schema, text, path, crumbs="") -> None:
    if not isinstance(node, dict):
        return
    for key, value in node.items():
        if key not in schema:
            line = _find_line(text, key)
            anchor = f"{path}:{line}" if line else f"{path}"
            raise ConfigError(f"{anchor}: unknown key '{crumbs}{key}'")
        sub = schema[key]
        if isinstance(sub, dict):
            _check_keys(value, sub, text, path, f"{crumbs}{key}.")


def _state(value, path) -> LinkState | None:
    if value is None:
        return None
    name = str(value).lower()
    if name == "los":
        return LinkState.LOS
    if name == "olos":
        return LinkState.OLOS
    raise ConfigError(f"{path}: link state must be 'los' or 'olos', not {value!r}")


def _require(cond: bool, path, text: str, key: str, msg: str) -> None:
    if not cond:
        line = _find_line(text, key)
        anchor = f"{path}:{line}" if line else f"{path}"
        raise ConfigError(f"{anchor}: {msg}")


def load_trajectory_csv(path, max_speed: float = 2.0) -> Trajectory:
    """Read a ``t,x,y,z`` trajectory CSV with uniform timestamps."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip().lower().replace(" ", "")
        if header != "t,x,y,z":
            raise ConfigError(f"{path}:1: expected header 't,x,y,z'")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 4:
                raise ConfigError(f"{path}:{lineno}: expected four fields")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad number") from exc
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least two samples")
    arr = np.asarray(rows)
    dt = np.diff(arr[:, 0])
    if np.any(dt <= 0) or not np.allclose(dt, dt[0], rtol=1e-6):
        raise ConfigError(f"{path}: timestamps must be uniform and increasing")
    return Trajectory(arr[:, 1:], snapshot_rate=1.0 / dt[0], max_speed=max_speed)


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    with open(path, "w") as fh:
        fh.write("t,x,y,z\n")
        for k, p in enumerate(trajectory.positions):
            t = k / trajectory.snapshot_rate
            fh.write(f"{t:.9f},{p[0]:.9f},{p[1]:.9f},{p[2]:.9f}\n")


def load_config(path) -> RunConfig:
    """Load and strictly validate a JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    _check_keys(doc, _SCHEMA, text, path)

    _require("seed" in doc, path, text, "seed", "missing required key 'seed'")
    _require("trajectory" in doc, path, text, "trajectory",
             "missing required key 'trajectory'")

    dep = doc.get("deployment", {})
    deployment = Deployment(
        anchors=np.asarray(dep.get("anchors", DEFAULT_ANCHORS), dtype=float),
        carrier_freq=float(dep.get("carrier_freq_hz", 3.75e9)),
        num_tones=int(dep.get("num_tones", 449)),
        tone_spacing=float(dep.get("tone_spacing_hz", 78.125e3)),
        snapshot_rate=float(dep.get("snapshot_rate_hz", 200.0)),
        room=dep.get("room", DEFAULT_ROOM),
    )

    tr = doc["trajectory"]
    max_speed = float(tr.get("max_speed_mps", 2.0))
    sources = [k for k in ("csv", "line", "waypoints") if k in tr]
    _require(len(sources) == 1, path, text, "trajectory",
             "trajectory needs exactly one of 'csv', 'line', 'waypoints'")
    if sources[0] == "csv":
        trajectory = load_trajectory_csv(tr["csv"], max_speed)
        _require(math.isclose(trajectory.snapshot_rate,
                              deployment.snapshot_rate, rel_tol=1e-6),
                 path, text, "csv",
                 "trajectory sample rate disagrees with the deployment")
    elif sources[0] == "line":
        spec = tr["line"]
        for key in ("start", "stop", "speed_mps"):
            _require(key in spec, path, text, "line",
                     f"trajectory.line requires '{key}'")
        trajectory = Trajectory.straight_line(
            spec["start"], spec["stop"], float(spec["speed_mps"]),
            deployment.snapshot_rate, max_speed)
    else:
        spec = tr["waypoints"]
        _require("points" in spec and "speed_mps" in spec, path, text,
                 "waypoints", "trajectory.waypoints requires points/speed_mps")
        trajectory = Trajectory.waypoint_route(
            spec["points"], float(spec["speed_mps"]), deployment.snapshot_rate,
            duration=spec.get("duration_s"), closed=bool(spec.get("closed", True)),
            max_speed=max_speed)

    mdl = doc.get("model", {})
    pg = mdl.get("path_gain", {})
    d0 = float(pg.get("d0_m", 1.0))
    d_rng = (float(pg.get("d_min_m", D_MIN)), float(pg.get("d_max_m", D_MAX)))
    pg_los = pg.get("los", {})
    pg_olos = pg.get("olos", {})
    path_gain = PerState(
        PathGainModel(float(pg_los.get("intercept_db", -44.24)),
                      float(pg_los.get("exponent", 0.86)), d0, d_rng),
        PathGainModel(float(pg_olos.get("intercept_db", -48.78)),
                      float(pg_olos.get("exponent", 0.95)), d0, d_rng))

    sh = mdl.get("shadowing", {})
    shadowing = ShadowingModel(
        sigma_db=PerState(float(sh.get("los", {}).get("sigma_db", 2.13)),
                          float(sh.get("olos", {}).get("sigma_db", 3.25))),
        k_forgetting=PerState(float(sh.get("los", {}).get("k_forgetting", 0.82)),
                              float(sh.get("olos", {}).get("k_forgetting", 0.81))))

    rc = mdl.get("rice", {})
    rice = PerState(
        RiceModel(float(rc.get("los", {}).get("nu", 0.84)),
                  float(rc.get("los", {}).get("sigma", 0.49))),
        RiceModel(float(rc.get("olos", {}).get("nu", 0.72)),
                  float(rc.get("olos", {}).get("sigma", 0.59))))

    cv = mdl.get("covariance", {})
    covariance = CovarianceParams(
        mean=PerState(float(cv.get("los", {}).get("mean", 0.1)),
                      float(cv.get("olos", {}).get("mean", 0.5))),
        std=PerState(float(cv.get("los", {}).get("std", 0.4)),
                     float(cv.get("olos", {}).get("std", 0.5))),
        truncation=float(cv.get("truncation", 0.9)),
        std_is_variance=bool(cv.get("std_is_variance", False)))

    ds = mdl.get("delay_spread", {})
    bounds = mdl.get("transition_rate_bounds", [0.04, 0.22])
    model = ModelConfig(
        path_gain=path_gain,
        shadowing=shadowing,
        rice=rice,
        covariance=covariance,
        transition_bounds=(float(bounds[0]), float(bounds[1])),
        n_io=int(mdl.get("n_io", 30)),
        target_delay_spread=PerState(float(ds.get("los_s", 47e-9)),
                                     float(ds.get("olos_s", 53e-9))),
        delay_spread_sigma_log=float(ds.get("sigma_log", 0.0)),
        cov_policy=str(cv.get("policy", "majority")),
        force_state=_state(mdl.get("force_state"), path),
        initial_state=_state(mdl.get("initial_state"), path),
        seed=int(doc["seed"]),
    )
    return RunConfig(deployment, trajectory, model)


def resolved_config_dict(cfg: RunConfig) -> dict:
    """Round-trippable JSON view of a resolved configuration."""
    dep = cfg.deployment
    m = cfg.model
    return {
        "seed": m.seed,
        "deployment": {
            "anchors": dep.anchors.tolist(),
            "carrier_freq_hz": dep.carrier_freq,
            "num_tones": dep.num_tones,
            "tone_spacing_hz": dep.tone_spacing,
            "snapshot_rate_hz": dep.snapshot_rate,
            "room": [list(b) for b in dep.room],
        },
        "model": {
            "path_gain": {
                "los": {"intercept_db": m.path_gain.los.intercept_db,
                        "exponent": m.path_gain.los.exponent},
                "olos": {"intercept_db": m.path_gain.olos.intercept_db,
                         "exponent": m.path_gain.olos.exponent},
                "d0_m": m.path_gain.los.d0,
                "d_min_m": m.path_gain.los.valid_range[0],
                "d_max_m": m.path_gain.los.valid_range[1],
            },
            "shadowing": {
                "los": {"sigma_db": m.shadowing.sigma_db.los,
                        "k_forgetting": m.shadowing.k_forgetting.los},
                "olos": {"sigma_db": m.shadowing.sigma_db.olos,
                         "k_forgetting": m.shadowing.k_forgetting.olos},
            },
            "rice": {
                "los": {"nu": m.rice.los.nu, "sigma": m.rice.los.sigma},
                "olos": {"nu": m.rice.olos.nu, "sigma": m.rice.olos.sigma},
            },
            "covariance": {
                "los": {"mean": m.covariance.mean.los, "std": m.covariance.std.los},
                "olos": {"mean": m.covariance.mean.olos, "std": m.covariance.std.olos},
                "truncation": m.covariance.truncation,
                "std_is_variance": m.covariance.std_is_variance,
                "policy": m.cov_policy,
            },
            "transition_rate_bounds": list(m.transition_bounds),
            "n_io": m.n_io,
            "delay_spread": {"los_s": m.target_delay_spread.los,
                             "olos_s": m.target_delay_spread.olos,
                             "sigma_log": m.delay_spread_sigma_log},
            "force_state": None if m.force_state is None else m.force_state.label.lower(),
            "initial_state": None if m.initial_state is None else m.initial_state.label.lower(),
        },
        "trajectory": {"num_snapshots": cfg.trajectory.num_snapshots},
    }
