"""Line-oriented configuration files with sections.

Format::

    [run]
    mode = offline
    fps = 25
    # comments and blank lines are fine

    [backend]
    detector = synthetic:script.json

Every key is declared in ``SCHEMA`` with a type and default; unknown
sections or keys are rejected, as are values of the wrong type. The
``[training]`` section is a pass-through for external trainers and is
validated for type only. Each config key maps one-to-one onto a CLI
flag ``--<section>-<key>`` (underscores become dashes).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .dataset_prep import SplitSpec
from .pipeline import RunConfig


class ConfigError(ValueError):
    """A config file or value that fails schema validation."""


@dataclass(frozen=True)
class Option:
    kind: str  # int | float | bool | str | choice | intlist
    default: Any
    choices: tuple[str, ...] = ()
    help: str = ""


SCHEMA: dict[str, dict[str, Option]] = {
    "run": {
        "mode": Option("choice", "offline", ("offline", "online"), "processing mode"),
        "input": Option("str", "", help="clip directory, or synthetic:<frames> when online"),
        "output_dir": Option("str", "out", help="where annotated frames, logs, reports go"),
        "fps": Option("int", 25, help="stream fps for online sources"),
        "width": Option("int", 640),
        "height": Option("int", 360),
        "stride": Option("int", 0, help="recognition stride in frames; 0 = per-mode default"),
        "score_display_threshold": Option("float", 0.5),
        "max_labels": Option("int", 3, help="action labels rendered per subject"),
        "min_box_area": Option("float", 4.0),
        "min_keypoint_confidence": Option("float", 0.05),
        "box_margin": Option("float", 0.0),
        "blur_faces": Option("bool", False),
        "blur_block": Option("int", 8),
        "face_margin": Option("float", 0.25),
        "overlay_horizon": Option("int", 0, help="overlay validity in frames; 0 = 2*fps"),
        "drop_policy": Option("choice", "drop", ("drop", "strict")),
        "detect_queue_capacity": Option("int", 0, help="0 = fps"),
        "render_queue_capacity": Option("int", 0, help="0 = fps"),
        "recognize_queue_capacity": Option("int", 2),
        "source_stall_timeout": Option("float", 10.0),
        "detect_lag_budget": Option("float", 1.0,
                                    help="seconds behind live before detection is skipped"),
    },
    "dataset": {
        "input_dir": Option("str", ""),
        "output_dir": Option("str", "prepared"),
        "train_fraction": Option("float", 0.8),
        "seed": Option("int", 0),
        "target_width": Option("int", 640),
        "target_height": Option("int", 360),
        "target_fps": Option("int", 25),
    },
    "backend": {
        "detector": Option("str", "", help="synthetic:<script> or exec:<command>"),
        "recognizer": Option("str", "", help="synthetic:<script> or exec:<command>"),
        "handshake_timeout": Option("float", 5.0),
        "request_timeout": Option("float", 5.0),
    },
    "eval": {
        "iou_threshold": Option("float", 0.5),
        "output_dir": Option("str", "eval_out"),
    },
    # Pass-through for external trainers; type-checked only.
    "training": {
        "num_classes": Option("int", 12),
        "base_lr": Option("float", 0.000125),
        "steps": Option("intlist", (560000, 720000)),
        "max_iter": Option("int", 100000),
        "videos_per_batch": Option("int", 2),
    },
}


class Config:
    """Validated configuration values, keyed by (section, key)."""

    def __init__(self, values: dict[str, dict[str, Any]]):
        self._values = values

    def get(self, section: str, key: str) -> Any:
        return self._values[section][key]

    def set(self, section: str, key: str, value: Any) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self._values[section][key] = value

    def __eq__(self, other) -> bool:
        return isinstance(other, Config) and self._values == other._values


def default_config() -> Config:
    return Config({
        section: {key: opt.default for key, opt in options.items()}
        for section, options in SCHEMA.items()
    })


def parse_value(option: Option, raw: str, where: str) -> Any:
    raw = raw.strip()
    try:
        if option.kind == "int":
            return int(raw)
        if option.kind == "float":
            return float(raw)
        if option.kind == "bool":
            lowered = raw.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if option.kind == "choice":
            if raw not in option.choices:
                raise ValueError(f"expected one of {option.choices}, got {raw!r}")
            return raw
        if option.kind == "intlist":
            return tuple(int(part) for part in raw.split(",") if part.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(text: str, origin: str = "<config>") -> Config:
    config = default_config()
    section: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        where = f"{origin}:{lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected key = value, got {raw!r}")
        if section is None:
            raise ConfigError(f"{where}: key outside any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA[section]:
            raise ConfigError(f"{where}: unknown key {key!r} in section [{section}]")
        config.set(section, key, parse_value(SCHEMA[section][key], value, where))
    return config


def load_config(path: str | Path) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, origin=str(path))


def run_config_from(config: Config) -> RunConfig:
    run = config._values["run"]
    return RunConfig(
        mode=run["mode"],
        fps=run["fps"],
        resolution=(run["width"], run["height"]),
        stride=run["stride"],
        score_display_threshold=run["score_display_threshold"],
        max_labels=run["max_labels"],
        min_box_area=run["min_box_area"],
        min_keypoint_confidence=run["min_keypoint_confidence"],
        box_margin=run["box_margin"],
        blur_faces=run["blur_faces"],
        blur_block=run["blur_block"],
        face_margin=run["face_margin"],
        overlay_horizon=run["overlay_horizon"],
        drop_policy=run["drop_policy"],
        detect_queue_capacity=run["detect_queue_capacity"],
        render_queue_capacity=run["render_queue_capacity"],
        recognize_queue_capacity=run["recognize_queue_capacity"],
        source_stall_timeout=run["source_stall_timeout"],
        detect_lag_budget=run["detect_lag_budget"],
    )


def split_spec_from(config: Config) -> SplitSpec:
    return SplitSpec(
        train_fraction=config.get("dataset", "train_fraction"),
        seed=config.get("dataset", "seed"),
    )
