"""JSON run configurations and ``key=value`` overrides."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Optional, TypeVar

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from locpoly.errors import ArgumentError
from locpoly.kernels import get_kernel
from locpoly.models import Centering, ClassKind, GridKind, ScanTarget, TargetKind

logger = logging.getLogger(__name__)

ConfigT = TypeVar("ConfigT", bound=BaseModel)


class StudyConfig(BaseModel):
    """Scan and replication settings for ``locpoly scan`` and ``locpoly study``."""

    model_config = ConfigDict(extra="forbid")

    scenario: str = "S1"
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    replicates: int = Field(default=20, ge=1)
    sample_sizes: list[int] = Field(default_factory=lambda: [1024, 4096, 16384])
    c: float = Field(default=1.0, gt=0.0)
    h0: float = Field(default=0.25, gt=0.0, lt=1.0)
    gamma: float = Field(default=1.0, gt=0.0)
    p: int = Field(default=0, ge=0, le=6)
    kernel: str = "uniform"
    xgrid_points: int = Field(default=401, ge=1)
    target: str = "kde"
    centering: Centering = Centering.EXPECTATION
    grid: GridKind = GridKind.DYADIC
    hs: list[float] = Field(default_factory=list)
    bn_scale: Optional[float] = Field(default=None, gt=0.0)
    bn_exponent: float = Field(default=0.2, gt=0.0)

    @field_validator("kernel")
    @classmethod
    def _known_kernel(cls, name: str) -> str:
        return get_kernel(name).id.value

    @field_validator("target")
    @classmethod
    def _known_target(cls, text: str) -> str:
        ScanTarget.parse(text)
        return text

    @field_validator("sample_sizes")
    @classmethod
    def _sizes(cls, sizes: list[int]) -> list[int]:
        if not sizes:
            raise ValueError("sample_sizes must not be empty")
        if any(n < 3 for n in sizes):
            raise ValueError("every sample size must be at least 3")
        return sizes

    @model_validator(mode="after")
    def _explicit_grid(self) -> "StudyConfig":
        if self.grid is GridKind.EXPLICIT and not self.hs:
            raise ValueError("an explicit grid needs hs")
        return self

    @property
    def scan_target(self) -> ScanTarget:
        """The parsed target; a bare ``regression`` takes its degree from ``p``."""
        target = ScanTarget.parse(self.target)
        if target.kind is TargetKind.REGRESSION and ":" not in self.target:
            return ScanTarget(kind=TargetKind.REGRESSION, order=self.p)
        return target


class EmpProcConfig(BaseModel):
    """Function class and Monte Carlo settings for ``locpoly empproc``."""

    model_config = ConfigDict(extra="forbid")

    class_kind: ClassKind = ClassKind.INDICATOR_WINDOWS
    kernel: str = "uniform"
    order: int = Field(default=0, ge=0)
    h_range: tuple[float, float] = (0.25, 0.25)
    h_count: int = Field(default=1, ge=1)
    x_range: tuple[float, float] = (0.0, 1.0)
    x_count: int = Field(default=401, ge=1)
    scenario: str = "S1"
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    n: int = Field(default=256, ge=1)
    draws: int = Field(default=4096, ge=1)
    eps_grid: list[float] = Field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    sample_sizes: list[int] = Field(default_factory=lambda: [2**k for k in range(6, 13)])
    sigma: float = Field(default=0.75, gt=0.0, le=1.0)
    t_grid: list[float] = Field(default_factory=lambda: [0.0, 2.0, 4.0, 8.0, 16.0, 32.0])
    replicates: int = Field(default=200, ge=100)

    @field_validator("kernel")
    @classmethod
    def _known_kernel(cls, name: str) -> str:
        return get_kernel(name).id.value

    @field_validator("eps_grid")
    @classmethod
    def _eps(cls, eps: list[float]) -> list[float]:
        if not eps or any(not 0 < e < 1 for e in eps):
            raise ValueError("eps_grid values must lie in (0, 1)")
        return sorted(eps, reverse=True)

    @field_validator("class_kind")
    @classmethod
    def _materializable(cls, kind: ClassKind) -> ClassKind:
        if kind is ClassKind.EXPLICIT:
            raise ValueError("explicit classes cannot be described in JSON")
        return kind


def parse_overrides(items: list[str]) -> dict[str, Any]:
    """Turn ``key=value`` strings into a dict; values are JSON literals or strings."""
    overrides: dict[str, Any] = {}
    for item in items:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ArgumentError(f"override {item!r} is not of the form key=value")
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    return overrides


def load_config(
    model: type[ConfigT],
    path: Optional[Path] = None,
    overrides: Optional[list[str]] = None,
) -> ConfigT:
    """Validate a JSON config file (optional) with overrides applied on top.

    Raises pydantic's ValidationError for invalid fields and ArgumentError
    for unreadable or non-object JSON.
    """
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ArgumentError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ArgumentError(f"config {path} must hold a JSON object")
        data.update(loaded)

    extra = parse_overrides(overrides or [])
    if extra:
        logger.debug("Applying overrides: %s", extra)
    data.update(extra)
    return model.model_validate(data)
