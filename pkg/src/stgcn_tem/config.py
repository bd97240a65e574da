"""``key = value`` run configuration files for the ``train`` command.

Example::

    # model
    topology = openpose18
    channels = 8, 8
    strides = 1, 1
    kernel_size = 9
    tem_mode = residual
    # optimisation
    learning_rate = 0.01
    epochs = 200
    seed = 3
    data = train.sksq

``data`` and a non-builtin ``topology`` are resolved relative to the file.
``in_channels`` and ``classes`` default to the values in the data file.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .layers import ModelConfig
from .topology import DEFAULT_EPSILON, load_topology
from .training import TrainConfig


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


KEYS = {
    "topology": str,
    "in_channels": int,
    "channels": _ints,
    "strides": _ints,
    "classes": int,
    "kernel_size": int,
    "spatial_hops": int,
    "temporal_hops": int,
    "tem_mode": str,
    "residual": _bool,
    "epsilon": float,
    "learning_rate": float,
    "momentum": float,
    "weight_decay": float,
    "batch_size": int,
    "epochs": int,
    "seed": int,
    "lr_schedule": str,
    "lr_decay_factor": float,
    "lr_decay_epochs": _ints,
    "data": str,
}


def parse_config(text: str) -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return values


@dataclass
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    data: Path


def build_run_config(values: dict, base_dir: Path, in_channels: int, class_count: int,
                     seed: int | None = None) -> RunConfig:
    """Combine parsed values with the data file's shape; ``seed`` overrides the file."""
    if "data" not in values:
        raise ConfigError("config needs a 'data' entry")
    if "channels" not in values:
        raise ConfigError("config needs a 'channels' entry")
    seed = values.get("seed", 0) if seed is None else seed
    topo_name = values.get("topology", "openpose18")
    topo_path = base_dir / topo_name
    topology = load_topology(topo_path if topo_path.is_file() else topo_name)
    try:
        model = ModelConfig(
            topology=topology,
            in_channels=values.get("in_channels", in_channels),
            channels=values["channels"],
            class_count=values.get("classes", class_count),
            strides=values.get("strides"),
            kernel_size=values.get("kernel_size", 9),
            spatial_hops=values.get("spatial_hops", 1),
            temporal_hops=values.get("temporal_hops", 1),
            tem_mode=values.get("tem_mode", "residual"),
            residual=values.get("residual", False),
            epsilon=values.get("epsilon", DEFAULT_EPSILON),
            seed=seed,
        )
        train = TrainConfig(
            learning_rate=values.get("learning_rate", 0.1),
            momentum=values.get("momentum", 0.9),
            weight_decay=values.get("weight_decay", 1e-4),
            batch_size=values.get("batch_size", 8),
            epochs=values.get("epochs", 50),
            seed=seed,
            lr_schedule=values.get("lr_schedule", "step"),
            lr_decay_factor=values.get("lr_decay_factor", 0.1),
            lr_decay_epochs=values.get("lr_decay_epochs"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(model, train, base_dir / values["data"])
