"""Dynamics identification, trocar correction and tip-force estimation.

Configs and preprocessing options accept plain dicts; they are passed to the
extension as JSON text.
"""

import json as _json

from . import _hforce
from ._hforce import *  # noqa: F401,F403

__version__ = _hforce.__version__


def _text(value):
    if value is None:
        return ""
    return value if isinstance(value, str) else _json.dumps(value)


def simulate(scenario, seed=0, log_qdd=False, base_dir="."):
    """Simulates a scenario dict; returns log, tau_clean, force and the reference trajectory."""
    return _hforce.simulate(_text(scenario), seed, log_qdd, base_dir)


def identify(model, reduction, log, mode="ls", preprocess=None):
    return _hforce.identify(model, reduction, log, mode, _text(preprocess))


def train_trocar(model, identified, logs, train=None, preprocess=None):
    return _hforce.train_trocar(model, identified, list(logs), _text(train), _text(preprocess))


def expected_torque(model, identified, trocar, log, preprocess=None):
    return _hforce.expected_torque(model, identified, trocar, log, _text(preprocess))


def estimate_forces(model, identified, trocar, log, preprocess=None, sigma_min=1e-4):
    """Tip force per log row (N x 3) and flags (0 ok, 1 singular, 2 warm-up)."""
    return _hforce.estimate_forces(model, identified, trocar, log, _text(preprocess), sigma_min)


def run_repro(config=None, seed=0):
    """Runs the simulated experiments; returns the checks and every metric report."""
    return _hforce.run_repro(_text(config), seed)
