"""Multi-UAV visual target tracking with barrier-constrained safety filtering."""

import json as _json

from ._core import (  # noqa: F401
    CbfParams,
    FeatureState,
    camera_rotation_from_yaw,
    collision_constraint,
    config_hash,
    connectivity_constraint,
    features_from_relative,
    gamma_s_lower_bound,
    hat,
    occlusion_angle,
    occlusion_constraint,
    range_from_features,
    reduced_dynamics,
    relative_angle,
    solve_qp,
    wrap_angle,
)
from ._core import run_scenario as _run_scenario_json


def run_scenario(config, out_dir=None):
    """Run a scenario and return the report as a dict.

    ``config`` may be a dict, JSON text, or a path to a JSON file.
    """
    if isinstance(config, dict):
        text = _json.dumps(config)
    elif isinstance(config, str) and config.lstrip().startswith("{"):
        text = config
    else:
        with open(config) as handle:
            text = handle.read()
    return _json.loads(_run_scenario_json(text, out_dir))
