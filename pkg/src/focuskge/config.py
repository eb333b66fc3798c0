"""Run configuration: one flat key/value record per run, stored as JSON.

A config file is a single JSON object whose keys are exactly the
``RunConfig`` field names; command-line flags override file values. Every
command writes the fully resolved config back into its output directory so a
run can be reproduced from the snapshot alone.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass

from .evaluation import TIE_MODES
from .training import TrainConfig


@dataclass
class RunConfig:
    """Dataset paths, training knobs, and evaluation options for one run."""

    train_path: str = ""
    valid_path: str = ""
    test_path: str = ""
    output_dir: str = "run"
    scorer: str = "transe_l1"
    k: int = 100
    eta: int = 10
    learning_rate: float = 1e-3
    epochs: int = 100
    gamma: float = 0.0
    decay_epochs: int = 0
    structure_weight: float = 1.0
    batch_size: int = 10_000
    seed: int = 0
    focus: bool = True
    dtype: str = "float64"
    weighted: bool = True
    weight_normalization: str = "passthrough"
    tie_mode: str = "worst"
    eval_fraction: float = 0.1
    checkpoint_every: int = 0

    def validate(self, need_paths=True) -> None:
        """Raise ValueError naming the first offending field."""
        if need_paths:
            for field_name in ("train_path", "valid_path", "test_path"):
                path = getattr(self, field_name)
                if not path:
                    raise ValueError(f"{field_name} is required")
                if not os.path.exists(path):
                    raise ValueError(f"{field_name}: no such file: {path}")
        if self.weight_normalization not in ("passthrough", "minmax"):
            raise ValueError(
                "weight_normalization must be 'passthrough' or 'minmax', "
                f"got {self.weight_normalization!r}"
            )
        if self.tie_mode not in TIE_MODES:
            raise ValueError(f"tie_mode must be one of {TIE_MODES}, got {self.tie_mode!r}")
        if not 0.0 < self.eval_fraction <= 1.0:
            raise ValueError(f"eval_fraction must be in (0, 1], got {self.eval_fraction}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        self.to_train_config()  # re-raises with the offending training field named

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            scorer=self.scorer,
            k=self.k,
            eta=self.eta,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            gamma=self.gamma,
            decay_epochs=self.decay_epochs,
            structure_weight=self.structure_weight,
            batch_size=self.batch_size,
            seed=self.seed,
            focus=self.focus,
            dtype=self.dtype,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _coerce(name: str, value):
    kind = _FIELD_TYPES[name]
    if kind in ("bool", bool):
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ValueError(f"{name}: expected a boolean, got {value!r}")
    if kind in ("int", int):
        if isinstance(value, bool) or (not isinstance(value, int) and not _intlike(value)):
            raise ValueError(f"{name}: expected an integer, got {value!r}")
        return int(value)
    if kind in ("float", float):
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ValueError(f"{name}: expected a number, got {value!r}") from None
    return str(value)


def _intlike(value) -> bool:
    try:
        return float(value) == int(float(value))
    except (TypeError, ValueError):
        return False


def load_run_config(path=None, overrides=None) -> RunConfig:
    """Build a RunConfig from an optional JSON file plus override pairs.

    Unknown keys raise ValueError naming the key.
    """
    values: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                file_values = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: not valid JSON: {exc}") from None
        if not isinstance(file_values, dict):
            raise ValueError(f"{path}: config must be a flat JSON object")
        values.update(file_values)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - set(_FIELD_TYPES)
    if unknown:
        raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    coerced = {name: _coerce(name, value) for name, value in values.items()}
    return RunConfig(**coerced)


def write_snapshot(config: RunConfig, output_dir) -> str:
    """Persist the resolved config as JSON; returns the snapshot path."""
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "resolved_config.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
