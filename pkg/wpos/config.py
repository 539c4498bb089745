"""
Experiment configuration.

Config files hold one directive per line in the simple form

    channel mean_clusters=3 rays=6 shadow_var_db=3
    experiment snr_db=5,15 f_grid=4:10 models=pnn,toa-rss

or as a JSON object per line ({"name": "channel", "rays": 6}). Text after
'#' is a comment. Lists are comma separated and integer ranges a:b are
inclusive. Environment overrides (WPOS_*) are read with python-decouple.
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from decouple import config as env

from .channel import ChannelParams
from .geometry import SceneConfig, ZoneLayout
from .models import CONV_WIDTHS, HIDDEN_UNITS, MODEL_KINDS
from .nnkernel import TrainingParams
from .pdp import CALIBRATION_SAMPLES, DetectionParams

SCHEMA_VERSION = 1
CONDITIONS = ("los", "nlos")
DEFAULT_WEIGHTS = {"los": 0.8, "nlos": 0.6}
# desk-scale batch; TrainingParams keeps the full-scale 256
DESK_BATCH_SIZE = 32


class Directive:
    """
    One config line parsed into a name, positional args and key=value pairs.

    Supported formats:
    - simple: shell-style tokens, the first bare token is the name.
    - json: object with "name" and optional "args"; other keys are kwargs.
    """

    def __init__(self, string=None, format="simple"):
        """
        Initialize and optionally parse a directive line.

        Args:
            string: Raw config line (preserved in self.raw).
            format: "simple" or "json".
        """
        self.name = ""
        self.raw = ""
        self.args: List[str] = []
        self.kwargs: Dict[str, Any] = {}
        self.format = format
        if string is not None:
            self.parse(string, format=format)

    @classmethod
    def create(cls, name, *args, **kwargs):
        """Build a directive from parts, as when writing a resolved config back."""
        self = cls()
        self.name = name
        self.args = [str(arg) for arg in args]
        self.kwargs = dict(kwargs)
        return self

    def get(self, key, value=None):
        return self.kwargs.get(key, value)

    def __contains__(self, key):
        return key in self.kwargs

    def parse(self, string, format=None):
        """
        Parse a line, replacing any previous content.

        Args:
            string: Raw config line; text after # is dropped in simple format.
            format: "simple" or "json". Defaults to the format given at
                construction.
        """
        fmt = format or self.format
        self.format = fmt
        self.raw = string
        self.name = ""
        self.args = []
        self.kwargs = {}
        if fmt == "simple":
            self._parse_simple(string)
        elif fmt == "json":
            self._parse_json(string)
        else:
            raise ValueError("Unknown directive format: %s" % fmt)

    def to_string(self, format=None):
        """
        Serialize the directive so that parse() gives it back.

        Args:
            format: "simple" or "json". Defaults to the format used for
                parsing.
        """
        fmt = format or self.format
        if fmt == "simple":
            return self._to_simple()
        if fmt == "json":
            payload = {"name": self.name}
            if self.args:
                payload["args"] = list(self.args)
            payload.update(self.kwargs)
            return json.dumps(payload, sort_keys=False)
        raise ValueError("Unknown directive format: %s" % fmt)

    def _parse_simple(self, string):
        lexer = shlex.shlex(string, posix=True)
        lexer.whitespace_split = True
        lexer.commenters = "#"
        tokens = list(lexer)
        if not tokens:
            return
        start = 0
        if "=" not in tokens[0]:
            self.name = tokens[0]
            start = 1
        for token in tokens[start:]:
            if "=" in token:
                key, value = token.split("=", 1)
                self.kwargs[key] = value
            else:
                self.args.append(token)

    def _parse_json(self, string):
        payload = json.loads(string)
        if not isinstance(payload, dict):
            raise ValueError("JSON directive must be an object")
        self.name = str(payload.pop("name", "") or "")
        self.args = [str(item) for item in payload.pop("args", [])]
        self.kwargs = payload

    def _to_simple(self):
        def escape_token(value):
            value = format_value(value)
            if value == "":
                return '""'
            needs_quotes = any(ch.isspace() or ch in ('"', "\\", "#") for ch in value)
            if not needs_quotes:
                return value
            return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'

        tokens = [self.name] if self.name else []
        tokens += [escape_token(arg) for arg in self.args]
        tokens += ["%s=%s" % (key, escape_token(value)) for key, value in self.kwargs.items()]
        return " ".join(tokens)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(item) for item in value)
    return str(value)


def parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def parse_list(value, item=str) -> Tuple:
    """Comma-separated values; integer items also accept inclusive a:b ranges."""
    if isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [part.strip() for part in str(value).split(",") if part.strip()]
    out = []
    for part in parts:
        if item is int and isinstance(part, str) and ":" in part:
            low, high = (int(bound) for bound in part.split(":", 1))
            if high < low:
                raise ValueError(f"empty range {part!r}")
            out.extend(range(low, high + 1))
        else:
            out.append(item(part))
    return tuple(out)


def _coerce(value, template):
    if isinstance(template, bool):
        return parse_bool(value)
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    if isinstance(template, tuple):
        item = type(template[0]) if template else str
        return parse_list(value, int if item is int else float if item is float else str)
    return value


def _apply(obj, directive: Directive, line: int, skip=()):
    """replace() the dataclass fields named in a directive, coercing by default type."""
    known = {f.name for f in fields(obj)} - set(skip)
    changes = {}
    for key, value in directive.kwargs.items():
        if key not in known:
            raise ValueError(f"line {line}: unknown key {key!r} for {directive.name!r}")
        changes[key] = _coerce(value, getattr(obj, key))
    return replace(obj, **changes) if changes else obj


@dataclass(frozen=True)
class ZoneSettings:
    n_zones: int = 8
    rings: int = 0
    sectors: int = 0

    def layout(self, d_r: float) -> ZoneLayout:
        if self.rings and self.sectors:
            if self.rings * self.sectors != self.n_zones:
                raise ValueError("rings x sectors must equal n_zones")
            return ZoneLayout(self.rings, self.sectors, d_r)
        return ZoneLayout.for_zones(self.n_zones, d_r)


@dataclass(frozen=True)
class ExperimentSettings:
    snr_db: Tuple[float, ...] = (5.0, 15.0)
    conditions: Tuple[str, ...] = ("los",)
    scenario_seeds: Tuple[int, ...] = (1, 2)
    d_train: int = 4000
    d_test: int = 1000
    f_grid: Tuple[int, ...] = (4, 5, 6, 7, 8, 9, 10)
    models: Tuple[str, ...] = MODEL_KINDS
    repeats: int = 3
    calibration_samples: int = CALIBRATION_SAMPLES
    workers: int = 1
    deterministic: bool = True

    def __post_init__(self):
        if self.d_train < 1 or self.d_test < 1:
            raise ValueError("d_train and d_test must be >= 1")
        if len(set(self.scenario_seeds)) != len(self.scenario_seeds):
            raise ValueError("scenario seeds must be distinct")
        if not self.scenario_seeds or not self.snr_db or not self.f_grid:
            raise ValueError("scenario_seeds, snr_db and f_grid must be non-empty")
        for condition in self.conditions:
            if condition not in CONDITIONS:
                raise ValueError(f"unknown condition {condition!r}")
        for model in self.models:
            if model not in MODEL_KINDS:
                raise ValueError(f"unknown model {model!r}")
        if self.repeats < 1 or self.workers < 1:
            raise ValueError("repeats and workers must be >= 1")


@dataclass(frozen=True)
class ArchitectureSettings:
    conv_widths: Tuple[int, ...] = CONV_WIDTHS
    hidden: int = HIDDEN_UNITS


@dataclass(frozen=True)
class SelectionSettings:
    """weight < 0 means the per-condition default (0.8 LOS, 0.6 NLOS)."""

    weight: float = -1.0
    neighbors: int = 30
    kl_dim_factor: str = "F"
    f_min: int = 0
    f_max: int = 0

    def weight_for(self, condition: str) -> float:
        return self.weight if self.weight >= 0 else DEFAULT_WEIGHTS[condition]


@dataclass(frozen=True)
class ExperimentConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    zones: ZoneSettings = field(default_factory=ZoneSettings)
    channel: ChannelParams = field(default_factory=ChannelParams)
    detection: DetectionParams = field(default_factory=DetectionParams)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    training: TrainingParams = field(default_factory=lambda: TrainingParams(batch_size=DESK_BATCH_SIZE))
    architecture: ArchitectureSettings = field(default_factory=ArchitectureSettings)
    selection: SelectionSettings = field(default_factory=SelectionSettings)
    seed: int = 0
    out: str = "out"
    schema_version: int = SCHEMA_VERSION

    @property
    def layout(self) -> ZoneLayout:
        return self.zones.layout(self.scene.d_r)

    @property
    def f_range(self) -> Tuple[int, int]:
        grid = self.experiment.f_grid
        return (self.selection.f_min or min(grid), self.selection.f_max or max(grid))

    def detection_at(self, snr_db: float) -> DetectionParams:
        return replace(self.detection, snr_db=float(snr_db))

    def directives(self) -> List[Directive]:
        """Directive form of the resolved config, the inverse of parse_config."""
        scene = {f.name: getattr(self.scene, f.name) for f in fields(self.scene) if f.name != "sensor_locations"}
        out = [
            Directive.create("schema_version", self.schema_version),
            Directive.create("run", seed=self.seed, out=self.out),
            Directive.create("scene", **scene),
        ]
        for x, y, z in self.scene.sensor_locations:
            out.append(Directive.create("sensor", x=x, y=y, z=z))
        for name in ("zones", "channel", "detection", "experiment", "training", "architecture", "selection"):
            block = getattr(self, name)
            out.append(Directive.create(name, **{f.name: getattr(block, f.name) for f in fields(block)}))
        return out

    def to_text(self) -> str:
        return "\n".join(directive.to_string() for directive in self.directives()) + "\n"


BLOCKS = ("zones", "channel", "detection", "experiment", "training", "architecture", "selection")


def parse_config(text: str) -> ExperimentConfig:
    """
    Parse a directive file into a validated config.

    schema_version is required. Unknown directives, unknown keys and
    bad values raise ValueError naming the line.
    """
    cfg = ExperimentConfig()
    scene_directive: Optional[Directive] = None
    scene_line = 0
    sensors: List[Tuple[float, float, float]] = []
    version = None

    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            directive = Directive(stripped, format="json" if stripped.startswith("{") else "simple")
        except ValueError as exc:
            raise ValueError(f"line {number}: {exc}") from exc
        if not directive.name:
            continue
        if directive.name == "schema_version":
            value = directive.args[0] if directive.args else directive.get("value")
            version = int(value)
            if version != SCHEMA_VERSION:
                raise ValueError(f"line {number}: unsupported schema_version {version} (expected {SCHEMA_VERSION})")
        elif directive.name == "scene":
            scene_directive, scene_line = directive, number
        elif directive.name == "sensor":
            try:
                sensors.append(tuple(float(directive.kwargs[axis]) for axis in ("x", "y", "z")))
            except KeyError as exc:
                raise ValueError(f"line {number}: sensor needs x=, y= and z=") from exc
        elif directive.name == "run":
            cfg = _apply(cfg, directive, number, skip=BLOCKS + ("scene", "schema_version"))
        elif directive.name in BLOCKS:
            try:
                block = _apply(getattr(cfg, directive.name), directive, number)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"line {number}: {exc}") from exc
            cfg = replace(cfg, **{directive.name: block})
        else:
            raise ValueError(f"line {number}: unknown directive {directive.name!r}")

    if version is None:
        raise ValueError("config is missing schema_version")

    scene_values: Dict[str, Any] = {}
    if scene_directive is not None:
        template = SceneConfig()
        for key, value in scene_directive.kwargs.items():
            if key == "sensor_locations" or not hasattr(template, key):
                raise ValueError(f"line {scene_line}: unknown key {key!r} for 'scene'")
            scene_values[key] = _coerce(value, getattr(template, key))
    if sensors:
        scene_values["sensor_locations"] = tuple(sensors)
        scene_values.setdefault("M", len(sensors))
    if scene_values:
        cfg = replace(cfg, scene=SceneConfig(**scene_values))
    return cfg


def load_config(path: Optional[Union[str, Path]] = None) -> ExperimentConfig:
    """Read a config file (defaults when None) and apply WPOS_* environment overrides."""
    cfg = ExperimentConfig() if path is None else parse_config(Path(path).read_text(encoding="utf-8"))
    return apply_environment(cfg)


def apply_environment(cfg: ExperimentConfig) -> ExperimentConfig:
    out = env("WPOS_OUT", default="")
    workers = env("WPOS_WORKERS", default=0, cast=int)
    if out:
        cfg = replace(cfg, out=out)
    if workers:
        cfg = replace(cfg, experiment=replace(cfg.experiment, workers=workers))
    return cfg


def debug_enabled() -> bool:
    return env("WPOS_DEBUG", default=False, cast=bool)
