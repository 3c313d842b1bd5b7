"""Flat key = value scenario configuration files.

Lines are `key = value`; `#` starts a comment, blank lines are skipped.
Vector values are whitespace-separated numbers.  `feature` may repeat, one
line per feature point; when absent the gate defaults apply.  Unknown keys
are rejected with the offending line number.
"""
from __future__ import annotations

import math

import numpy as np

from .barrier import FovSensor, RobustnessParams
from .dynamics import QuadrotorParams, TrackingGains
from .scenarios import ScenarioConfig, ValidationError, gate_features


class ParseError(ValueError):
    """Raised on malformed config text; carries the line number."""


_SCALAR_KEYS = {
    "duration", "dt", "half_aperture", "gain_sum", "ratio_min", "ratio_max",
    "margin", "kappa", "kappa1", "kappa2", "k_p", "k_v", "k_r", "k_omega",
    "d_hat_ratio", "slack_weight", "mass", "gravity",
}
_INT_KEYS = {"seed"}
_VEC3_KEYS = {"axis", "inertia"}
_STR_KEYS = {"kind", "d_hat_mode"}
_BOOL_KEYS = {"filter"}
_ALL_KEYS = _SCALAR_KEYS | _INT_KEYS | _VEC3_KEYS | _STR_KEYS | _BOOL_KEYS | {"feature"}


def _parse_floats(text, lineno, key, count):
    parts = text.split()
    if len(parts) != count:
        raise ParseError(f"line {lineno}: {key} needs {count} numbers")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ParseError(f"line {lineno}: bad number in {key}: {exc}") from None


def parse_config(text):
    """Parse config text into a validated ScenarioConfig."""
    raw = {}
    features = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ParseError(f"line {lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _ALL_KEYS:
            raise ParseError(f"line {lineno}: unknown key {key!r}")
        if key == "feature":
            features.append(_parse_floats(value, lineno, key, 3))
            continue
        if key in raw:
            raise ParseError(f"line {lineno}: duplicate key {key!r}")
        if key in _SCALAR_KEYS:
            raw[key] = _parse_floats(value, lineno, key, 1)[0]
        elif key in _INT_KEYS:
            try:
                raw[key] = int(value)
            except ValueError:
                raise ParseError(f"line {lineno}: {key} must be an integer") from None
        elif key in _VEC3_KEYS:
            raw[key] = np.array(_parse_floats(value, lineno, key, 3))
        elif key in _BOOL_KEYS:
            if value not in ("on", "off"):
                raise ParseError(f"line {lineno}: {key} must be on or off")
            raw[key] = value == "on"
        else:
            raw[key] = value

    try:
        sensor = FovSensor(raw.get("axis", np.array([1.0, 0.0, 0.0])),
                               raw.get("half_aperture", math.pi / 6.0))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    rp = RobustnessParams(raw.get("gain_sum", 3.0),
                              raw.get("ratio_min", 0.5),
                              raw.get("ratio_max", 15.0),
                              raw.get("margin", 0.0))
    try:
        gains = TrackingGains(raw.get("k_p", 20.8), raw.get("k_v", 13.3),
                              raw.get("k_r", 54.81), raw.get("k_omega", 10.54))
        quad = QuadrotorParams(raw.get("mass", 1.0),
                               np.diag(raw["inertia"]) if "inertia" in raw
                               else np.diag([0.01, 0.01, 0.02]),
                               raw.get("gravity", 9.81))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    cfg = ScenarioConfig(
        kind=raw.get("kind", "double-integrator"),
        duration=raw.get("duration", 60.0),
        dt=raw.get("dt", 1e-3),
        sensor=sensor,
        features=np.array(features) if features else gate_features(),
        rp=rp,
        gains=gains,
        kappa=raw.get("kappa", 1.0),
        kappa1=raw.get("kappa1", 4.0),
        kappa2=raw.get("kappa2", 4.0),
        d_hat_mode=raw.get("d_hat_mode", "constant-one"),
        d_hat_ratio=raw.get("d_hat_ratio", 1.0),
        slack_weight=raw.get("slack_weight", 1e8),
        seed=raw.get("seed", 0),
        quad=quad,
        filter_enabled=raw.get("filter", True),
    )
    return cfg.validate()


def parse_config_file(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg):
    """Render a ScenarioConfig back to config text; parse(serialize(c)) == c."""
    def _f(x):
        # repr of a builtin float survives the round trip; numpy scalars do not
        return repr(float(x))

    lines = [
        f"kind = {cfg.kind}",
        f"duration = {_f(cfg.duration)}",
        f"dt = {_f(cfg.dt)}",
        f"axis = {_f(cfg.sensor.axis[0])} {_f(cfg.sensor.axis[1])} {_f(cfg.sensor.axis[2])}",
        f"half_aperture = {_f(cfg.sensor.half_aperture)}",
    ]
    for q in cfg.features:
        lines.append(f"feature = {_f(q[0])} {_f(q[1])} {_f(q[2])}")
    diag = np.diag(cfg.quad.inertia)
    lines += [
        f"gain_sum = {_f(cfg.rp.gain_sum)}",
        f"ratio_min = {_f(cfg.rp.ratio_min)}",
        f"ratio_max = {_f(cfg.rp.ratio_max)}",
        f"margin = {_f(cfg.rp.margin)}",
        f"kappa = {_f(cfg.kappa)}",
        f"kappa1 = {_f(cfg.kappa1)}",
        f"kappa2 = {_f(cfg.kappa2)}",
        f"k_p = {_f(cfg.gains.k_p)}",
        f"k_v = {_f(cfg.gains.k_v)}",
        f"k_r = {_f(cfg.gains.k_r)}",
        f"k_omega = {_f(cfg.gains.k_omega)}",
        f"d_hat_mode = {cfg.d_hat_mode}",
        f"d_hat_ratio = {_f(cfg.d_hat_ratio)}",
        f"slack_weight = {_f(cfg.slack_weight)}",
        f"seed = {cfg.seed}",
        f"mass = {_f(cfg.quad.mass)}",
        f"inertia = {_f(diag[0])} {_f(diag[1])} {_f(diag[2])}",
        f"gravity = {_f(cfg.quad.gravity)}",
        f"filter = {'on' if cfg.filter_enabled else 'off'}",
    ]
    return "\n".join(lines) + "\n"
