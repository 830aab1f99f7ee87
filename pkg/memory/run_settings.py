"""Run configuration: flat ``key=value`` files validated against a registry.

Every key falls back to the value in ``config.py`` when a run file does
not set it.  ``bundle`` and ``out`` have no default and must be given.
The resolved configuration is echoed into the run directory so the echo
alone reproduces the run.
"""

from __future__ import annotations

import os
from typing import Any, Optional

import config
from services.attention import AttentionParams
from services.errors import ConfigValidationError
from services.features import EXTRACTOR_KINDS, ExtractorConfig, parse_channels
from services.log import log
from services.objective import LossWeights

# ── Registry of all run keys ─────────────────────────────
# Maps key → description, type, config-default attr (None = required or computed)
SETTING_DEFS: dict[str, dict[str, Any]] = {
    # Paths
    "bundle":                   {"desc": "Stream bundle directory",                 "type": str,   "default_attr": None},
    "out":                      {"desc": "Artifact output directory",               "type": str,   "default_attr": None},
    "seeds":                    {"desc": "Comma-separated run seeds",               "type": "ints", "default_attr": "RUN_SEEDS"},
    "force_gray":               {"desc": "Convert RGB frames to luminance on load", "type": bool,  "default_attr": None},
    # Attention
    "alpha_b":                  {"desc": "Brightness-gradient mass weight",         "type": float, "default_attr": "ALPHA_B"},
    "alpha_m":                  {"desc": "Motion mass weight",                      "type": float, "default_attr": "ALPHA_M"},
    "rho":                      {"desc": "Gaze dissipation",                        "type": float, "default_attr": "DISSIPATION"},
    "nu":                       {"desc": "Saccade speed threshold (px/step)",       "type": float, "default_attr": "SACCADE_THRESHOLD"},
    "dt":                       {"desc": "Integration step",                        "type": float, "default_attr": "INTEGRATION_STEP"},
    "inhibition_strength":      {"desc": "Inhibition deposit per frame",            "type": float, "default_attr": "INHIBITION_STRENGTH"},
    "inhibition_radius":        {"desc": "Inhibition disk radius (px)",             "type": float, "default_attr": "INHIBITION_RADIUS"},
    "inhibition_decay":         {"desc": "Inhibition decay per frame, in [0,1)",    "type": float, "default_attr": "INHIBITION_DECAY"},
    "eps_phi":                  {"desc": "Potential singularity floor (px^2)",      "type": float, "default_attr": "SINGULARITY_FLOOR"},
    "initial_vx":               {"desc": "Initial gaze velocity, x",                "type": float, "default_attr": "INITIAL_VX"},
    "initial_vy":               {"desc": "Initial gaze velocity, y",                "type": float, "default_attr": "INITIAL_VY"},
    # Segmentation and graph
    "gamma":                    {"desc": "Motion threshold (px/frame)",             "type": float, "default_attr": "MOTION_THRESHOLD"},
    "eight_connected":          {"desc": "Grow moving regions over 8 neighbors",    "type": bool,  "default_attr": "EIGHT_CONNECTED"},
    "e":                        {"desc": "Target edges per type",                   "type": int,   "default_attr": "EDGES_PER_TYPE"},
    "beta":                     {"desc": "Outside-sampling spread factor",          "type": int,   "default_attr": "SPREAD_FACTOR"},
    "graph_mode":               {"desc": "stochastic or exhaustive",                "type": str,   "default_attr": "GRAPH_MODE"},
    # Extractor
    "extractor":                {"desc": "fcn or baseline",                         "type": str,   "default_attr": "EXTRACTOR_KIND"},
    "kernel":                   {"desc": "Convolution kernel size (odd)",           "type": int,   "default_attr": "KERNEL_SIZE"},
    "hidden":                   {"desc": "Hidden channel widths",                   "type": str,   "default_attr": "HIDDEN_CHANNELS"},
    "d":                        {"desc": "Feature dimension",                       "type": int,   "default_attr": "FEATURE_DIM"},
    "activation":               {"desc": "tanh or relu",                            "type": str,   "default_attr": "ACTIVATION"},
    "normalize":                {"desc": "Unit-norm features and losses",           "type": bool,  "default_attr": "NORMALIZE_FEATURES"},
    "init_seed":                {"desc": "Weight initialization seed",              "type": int,   "default_attr": "INIT_SEED"},
    # Learning
    "lr":                       {"desc": "Learning rate",                           "type": float, "default_attr": "LEARNING_RATE"},
    "lambda_t":                 {"desc": "Temporal coherence weight",               "type": float, "default_attr": "LAMBDA_T"},
    "lambda_s":                 {"desc": "Spatial coherence weight",                "type": float, "default_attr": "LAMBDA_S"},
    "lambda_c":                 {"desc": "Contrastive weight",                      "type": float, "default_attr": "LAMBDA_C"},
    "eps":                      {"desc": "Contrastive epsilon",                     "type": float, "default_attr": "CONTRASTIVE_EPS"},
    # Open set
    "xi":                       {"desc": "Open-set threshold",                      "type": float, "default_attr": "OPENSET_THRESHOLD"},
    "tune_xi":                  {"desc": "Tune xi on the eval lap after the run",   "type": bool,  "default_attr": "TUNE_XI"},
    "distance":                 {"desc": "squared-euclidean or cosine",             "type": str,   "default_attr": "DISTANCE_KIND"},
    "b":                        {"desc": "Refresh batch cap (0 = 1 + 3n)",          "type": int,   "default_attr": None},
    "refresh_every":            {"desc": "Frames between template refreshes",       "type": int,   "default_attr": "REFRESH_EVERY"},
    # Protocol
    "learn_laps":               {"desc": "Unsupervised laps per object",            "type": int,   "default_attr": "LEARN_LAPS"},
    "supervise_through_lap":    {"desc": "Last lap with learning and supervision",  "type": int,   "default_attr": "SUPERVISE_THROUGH_LAP"},
    "eval_lap":                 {"desc": "Measured lap",                            "type": int,   "default_attr": "EVAL_LAP"},
    "supervisions_per_object":  {"desc": "Supervisions per object",                 "type": int,   "default_attr": "SUPERVISIONS_PER_OBJECT"},
    "min_spacing":              {"desc": "Frames between supervisions of an object", "type": int,  "default_attr": "MIN_SUPERVISION_SPACING"},
    "supervision_source":       {"desc": "plan (from the run trajectory) or bundle", "type": str,  "default_attr": None},
    "exclude_saccades":         {"desc": "Drop saccade frames from trajectory F1",  "type": bool,  "default_attr": None},
    "write_overlays":           {"desc": "Write eval-lap prediction masks",         "type": bool,  "default_attr": None},
}

REQUIRED = ("bundle", "out")
_COMPUTED_DEFAULTS = {
    "force_gray": False,
    "b": 0,
    "supervision_source": "plan",
    "exclude_saccades": False,
    "write_overlays": True,
}
_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}


def get_default(key: str) -> Any:
    """Return the global default for a run key."""
    defn = SETTING_DEFS.get(key)
    if defn is None:
        return None
    if key in _COMPUTED_DEFAULTS:
        return _COMPUTED_DEFAULTS[key]
    attr = defn.get("default_attr")
    if attr and hasattr(config, attr):
        raw = getattr(config, attr)
        return _coerce(key, raw) if isinstance(raw, str) and defn["type"] != str else raw
    return None


def _coerce(key: str, raw: Any) -> Any:
    kind = SETTING_DEFS[key]["type"]
    text = str(raw).strip()
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        if text.lower() in _TRUE:
            return True
        if text.lower() in _FALSE:
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if kind == "ints":
        if isinstance(raw, (list, tuple)):
            return [int(v) for v in raw]
        return [int(p) for p in text.split(",") if p.strip()]
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    return text


def parse_config_text(text: str) -> tuple[dict[str, str], list[str]]:
    """Raw ``key=value`` pairs plus syntax problems; ``#`` starts a comment line."""
    values: dict[str, str] = {}
    problems: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            problems.append(f"line {lineno}: expected key=value, got {line!r}")
            continue
        values[key.strip()] = value.strip()
    return values, problems


class RunConfig:
    """Resolved, validated run settings."""

    def __init__(self, values: dict[str, Any]):
        self.values = values

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def get(self, key: str) -> Any:
        return self.values.get(key, get_default(key))

    def with_values(self, **overrides: Any) -> "RunConfig":
        merged = dict(self.values)
        merged.update(overrides)
        return RunConfig(merged)

    # ── Module parameter views ──────────────────────────

    def attention_params(self) -> AttentionParams:
        v = self.values
        return AttentionParams(
            alpha_b=v["alpha_b"], alpha_m=v["alpha_m"], rho=v["rho"], nu=v["nu"], dt=v["dt"],
            inhibition_strength=v["inhibition_strength"], inhibition_radius=v["inhibition_radius"],
            inhibition_decay=v["inhibition_decay"], eps_phi=v["eps_phi"],
        )

    def extractor_config(self, in_channels: int) -> ExtractorConfig:
        v = self.values
        return ExtractorConfig(
            in_channels=in_channels, kind=v["extractor"], kernel=v["kernel"],
            hidden=parse_channels(v["hidden"]), out_dim=v["d"], activation=v["activation"],
            normalize=v["normalize"], seed=v["init_seed"],
        )

    def loss_weights(self) -> LossWeights:
        v = self.values
        return LossWeights(
            lambda_t=v["lambda_t"], lambda_s=v["lambda_s"], lambda_c=v["lambda_c"],
            eps=v["eps"], lr=v["lr"], normalized=v["normalize"],
        )

    def batch_cap(self, n_objects: int) -> int:
        b = self.values["b"]
        return b if b > 0 else 1 + 3 * n_objects

    # ── Echo ────────────────────────────────────────────

    def echo(self) -> str:
        lines = []
        for key in SETTING_DEFS:
            value = self.values.get(key)
            if isinstance(value, bool):
                text = str(value).lower()
            elif isinstance(value, (list, tuple)):
                text = ",".join(str(v) for v in value)
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = "" if value is None else str(value)
            lines.append(f"{key}={text}")
        return "\n".join(lines) + "\n"


def validate(values: dict[str, Any]) -> list[str]:
    """Every typed constraint the modules place on their parameters."""
    v = values
    problems: list[str] = []
    if not v.get("seeds"):
        problems.append("seeds: at least one seed is required")
    params = AttentionParams(
        alpha_b=v["alpha_b"], alpha_m=v["alpha_m"], rho=v["rho"], nu=v["nu"], dt=v["dt"],
        inhibition_strength=v["inhibition_strength"], inhibition_radius=v["inhibition_radius"],
        inhibition_decay=v["inhibition_decay"], eps_phi=v["eps_phi"],
    )
    problems += params.problems()
    if v["gamma"] <= 0:
        problems.append("gamma must be > 0")
    if v["e"] < 1:
        problems.append("e must be >= 1")
    if v["beta"] < 1:
        problems.append("beta must be >= 1")
    if v["graph_mode"] not in ("stochastic", "exhaustive"):
        problems.append("graph_mode must be stochastic or exhaustive")
    if v["extractor"] not in EXTRACTOR_KINDS:
        problems.append(f"extractor must be one of {', '.join(EXTRACTOR_KINDS)}")
    if v["kernel"] < 1 or v["kernel"] % 2 == 0:
        problems.append("kernel must be a positive odd integer")
    try:
        if any(c < 1 for c in parse_channels(v["hidden"])):
            problems.append("hidden channel widths must be positive")
    except ValueError:
        problems.append(f"hidden: cannot parse {v['hidden']!r}")
    if v["d"] < 1:
        problems.append("d must be >= 1")
    if v["activation"] not in ("tanh", "relu"):
        problems.append("activation must be tanh or relu")
    if v["lr"] <= 0:
        problems.append("lr must be > 0")
    for key in ("lambda_t", "lambda_s", "lambda_c"):
        if v[key] < 0:
            problems.append(f"{key} must be >= 0")
    if v["eps"] <= 0:
        problems.append("eps must be > 0")
    if v["distance"] not in ("squared-euclidean", "cosine", "euclidean"):
        problems.append("distance must be squared-euclidean or cosine")
    if v["xi"] <= 0:
        problems.append("xi must be > 0")
    elif v["normalize"] and v["distance"] == "cosine" and v["xi"] > 2:
        problems.append("xi must be in (0, 2] with normalized features and cosine distance")
    if v["b"] < 0:
        problems.append("b must be >= 1 (or 0 for 1 + 3n)")
    if v["refresh_every"] < 1:
        problems.append("refresh_every must be >= 1")
    if not 0 <= v["learn_laps"] < v["supervise_through_lap"] <= v["eval_lap"]:
        problems.append("laps must satisfy 0 <= learn_laps < supervise_through_lap <= eval_lap")
    if v["supervisions_per_object"] < 0:
        problems.append("supervisions_per_object must be >= 0")
    if v["min_spacing"] < 0:
        problems.append("min_spacing must be >= 0")
    if v["supervision_source"] not in ("plan", "bundle"):
        problems.append("supervision_source must be plan or bundle")
    return problems


def build_run_config(raw: dict[str, str], overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Resolve defaults, coerce types and validate; raises ConfigValidationError."""
    problems: list[str] = []
    merged: dict[str, Any] = dict(raw)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(k for k in merged if k not in SETTING_DEFS)
    problems += [f"{k}: unknown key" for k in unknown]
    problems += [f"{k}: missing required key" for k in REQUIRED if not merged.get(k)]

    values: dict[str, Any] = {}
    for key in SETTING_DEFS:
        if key in merged:
            try:
                values[key] = _coerce(key, merged[key])
            except ValueError as e:
                problems.append(f"{key}: {e}")
                values[key] = get_default(key)
        else:
            values[key] = get_default(key)

    if not problems:
        problems += validate(values)
    if problems:
        raise ConfigValidationError(problems)
    return RunConfig(values)


def load_run_config(path: str, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigValidationError([f"cannot read config {path}: {e}"]) from None
    raw, problems = parse_config_text(text)
    if problems:
        raise ConfigValidationError(problems)
    cfg = build_run_config(raw, overrides)
    log("CONFIG", f"Loaded {path}: {len(raw)} keys set, {len(SETTING_DEFS) - len(raw)} defaults")
    return cfg


def write_echo(cfg: RunConfig, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "config.cfg")
    with open(path, "w", encoding="utf-8") as f:
        f.write(cfg.echo())
    return path
