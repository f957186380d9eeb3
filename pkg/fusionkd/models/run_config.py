"""Run configuration schema plus the sectioned ``key = value`` file format.

A config file looks like::

    [run]
    seed = 7

    [distill]
    policy = tgeo
    tau = 4.0

Each section body is parsed with python-dotenv and validated by the pydantic
model registered for that section. Unknown sections and keys are rejected.
"""

from __future__ import annotations

import io
import re
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, ValidationError, field_validator, model_validator

from fusionkd.objects.errors import ConfigError

SECTION_PATTERN = re.compile(r"^\s*\[([A-Za-z_]+)\]\s*$")


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _blank_to_none(value: Any) -> Any:
    if isinstance(value, str) and not value.strip():
        return None
    return value


WidthList = Annotated[List[int], BeforeValidator(_split_list)]
EpochList = Annotated[List[int], BeforeValidator(_split_list)]
OptionalCount = Annotated[Optional[int], BeforeValidator(_blank_to_none)]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(_Section):
    seed: int = Field(default=0, ge=0)
    output_dir: str = ""


class DataSection(_Section):
    source: Literal["synthetic", "delimited", "tgds"] = "synthetic"
    path: str = ""
    label_column: str = "label"
    normalize: bool = True
    num_classes: int = Field(default=3, ge=2)
    per_class: int = Field(default=300, ge=1)
    dim: int = Field(default=16, ge=1)
    spread: float = Field(default=0.15, gt=0.0)
    label_noise: float = Field(default=0.0, ge=0.0, lt=1.0)
    imbalance_ratio: float = Field(default=1.0, ge=1.0)
    train_frac: float = Field(default=0.8, gt=0.0, lt=1.0)
    val_frac: float = Field(default=0.1, gt=0.0, lt=1.0)
    outlier_fraction: float = Field(default=0.1, ge=0.0, le=1.0)
    outlier_count: OptionalCount = Field(default=None, ge=0)
    oversample: bool = False

    @model_validator(mode="after")
    def _check_fractions(self) -> "DataSection":
        if self.train_frac + self.val_frac >= 1.0:
            raise ValueError("train_frac + val_frac must be < 1 (the remainder is test)")
        if self.source != "synthetic" and not self.path:
            raise ValueError(f"path is required for source={self.source}")
        return self


class TeacherSection(_Section):
    hidden: WidthList = Field(default_factory=lambda: [64, 64])
    epochs: int = Field(default=200, ge=0)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=0.05, gt=0.0)
    optimizer: Literal["sgd", "adam"] = "sgd"
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    patience: int = Field(default=0, ge=0)

    @field_validator("hidden")
    @classmethod
    def _positive_widths(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError("hidden widths must be >= 1")
        return value


class StudentSection(_Section):
    hidden: WidthList = Field(default_factory=lambda: [16])
    activation: Literal["relu", "sigmoid"] = "relu"

    @field_validator("hidden")
    @classmethod
    def _positive_widths(cls, value: List[int]) -> List[int]:
        if any(width < 1 for width in value):
            raise ValueError("hidden widths must be >= 1")
        return value


class DistillSection(_Section):
    policy: Literal["fixed", "annealed", "class_wise", "wls", "tgeo"] = "tgeo"
    tau: float = Field(default=4.0, gt=0.0)
    alpha0: float = Field(default=0.5, ge=0.0, le=1.0)
    wls_gain: float = Field(default=1.0, gt=0.0)
    relation_mode: Literal["R1", "R2", "R3", "SG_TG", "INTRA", "NO_ST"] = "R3"
    fusion_hidden: int = Field(default=32, ge=1)
    fusion_arch: Literal["mlp", "attention"] = "mlp"
    fusion_depth: int = Field(default=2, ge=1, le=3)
    # zero_head: glorot hidden layers, zero output layer (alpha starts at 0.5 everywhere)
    fusion_init: Literal["glorot", "zeros", "zero_head"] = "glorot"
    epochs: int = Field(default=100, ge=0)
    batch_size: int = Field(default=32, ge=1)
    inner_lr: float = Field(default=0.05, gt=0.0)
    outer_lr: float = Field(default=0.025, ge=0.0)
    outer_optimizer: Literal["sgd", "adam"] = "adam"
    optimizer: Literal["sgd", "adam"] = "sgd"
    momentum: float = Field(default=0.0, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    hypergrad_mode: Literal["first_order", "unrolled_fd"] = "unrolled_fd"
    fd_radius: float = Field(default=0.01, gt=0.0)
    stop_gradient: bool = True
    freeze_fusion: bool = False
    patience: int = Field(default=10, ge=0)
    alpha_dump_every: int = Field(default=10, ge=1)
    teacher_file: str = ""


class AnalyzeSection(_Section):
    alpha_dump: str = ""
    triplet_dump: str = ""
    bins: int = Field(default=20, ge=1)
    epochs: EpochList = Field(default_factory=list)


class RunConfig(_Section):
    run: RunSection = Field(default_factory=RunSection)
    data: DataSection = Field(default_factory=DataSection)
    teacher: TeacherSection = Field(default_factory=TeacherSection)
    student: StudentSection = Field(default_factory=StudentSection)
    distill: DistillSection = Field(default_factory=DistillSection)
    analyze: AnalyzeSection = Field(default_factory=AnalyzeSection)


SECTION_MODELS: Dict[str, type] = {
    name: info.annotation for name, info in RunConfig.model_fields.items()
}


def parse_config_text(text: str) -> Dict[str, Dict[str, str]]:
    """Split a sectioned file and parse each body with python-dotenv."""
    bodies: Dict[str, List[str]] = {}
    current: Optional[str] = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        match = SECTION_PATTERN.match(line)
        if match:
            current = match.group(1).lower()
            if current not in SECTION_MODELS:
                raise ConfigError(f"Unknown config section [{current}] at line {line_no}")
            bodies.setdefault(current, [])
            continue
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if current is None:
            raise ConfigError(f"Config line {line_no} appears before any [section]")
        bodies[current].append(line)

    parsed: Dict[str, Dict[str, str]] = {}
    for section, lines in bodies.items():
        values = dotenv_values(stream=io.StringIO("\n".join(lines)), interpolate=False)
        for key, value in values.items():
            if value is None:
                raise ConfigError(f"Config key {section}.{key} has no value")
        parsed[section] = {key: value for key, value in values.items() if value is not None}
    return parsed


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(item) for item in error.get("loc", ()))
        parts.append(f"{location}: {error.get('msg')}")
    return "; ".join(parts)


def build_run_config(
    raw: Mapping[str, Mapping[str, Any]],
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    merged: Dict[str, Dict[str, Any]] = {section: dict(values) for section, values in raw.items()}
    for dotted_key, value in (overrides or {}).items():
        section, _, key = dotted_key.partition(".")
        if section not in SECTION_MODELS or not key:
            raise ConfigError(f"Unknown override: {dotted_key}")
        merged.setdefault(section, {})[key] = value
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(f"Invalid config: {_format_validation_error(exc)}") from exc


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    raw: Dict[str, Dict[str, str]] = {}
    if path:
        source = Path(path)
        if not source.exists():
            raise ConfigError(f"Config file not found: {source}")
        raw = parse_config_text(source.read_text())
    return build_run_config(raw, overrides)


def _render_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_render_value(item) for item in value)
    return str(value)


def render_config(config: RunConfig, sections: Optional[List[str]] = None) -> str:
    """Render in the same format ``parse_config_text`` reads."""
    lines: List[str] = []
    for name in sections or list(SECTION_MODELS):
        section = getattr(config, name)
        if lines:
            lines.append("")
        lines.append(f"[{name}]")
        for key in type(section).model_fields:
            lines.append(f"{key} = {_render_value(getattr(section, key))}")
    return "\n".join(lines) + "\n"


def config_flags() -> List[str]:
    """Every ``section.key`` accepted as a CLI override flag."""
    return [
        f"{section}.{key}"
        for section, model in SECTION_MODELS.items()
        for key in model.model_fields
    ]
