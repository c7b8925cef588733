"""Strict-schema run configuration."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .diagnostics import AssumptionConstants
from .fields import Kernel
from .profiles import GaussianProfile
from .spectral import SpectralGrid, make_grid
from .wigner import PhaseGrid, TestFunction

__all__ = ["RunConfig", "ConfigError", "load_config", "default_test_functions"]

SCHEMA_VERSION = 1

Scalar = Union[float, list[float]]


class ConfigError(ValueError):
    """The configuration file is missing, malformed or inconsistent."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    L: Scalar = 4 * math.pi
    N_x: Union[int, list[int]] = 256
    N_xi: Union[int, list[int]] = 256
    xi_max: Scalar = 5.0


class KernelConfig(_Strict):
    kind: Literal["coulomb", "yukawa"] = "coulomb"
    lam: Optional[float] = None

    def build(self) -> Kernel:
        return Kernel(self.kind, self.lam)


class GaussianConfig(_Strict):
    weight: float = Field(ge=0)
    center_x: Scalar = 0.0
    center_xi: Scalar = 0.0
    width_x: Scalar = Field(default=1.0)
    width_xi: Scalar = Field(default=1.0)


class TestFunctionConfig(_Strict):
    center_x: Scalar
    center_xi: Scalar
    width_x: Scalar
    width_xi: Scalar


class TimeStepConfig(_Strict):
    c_dt: float = Field(default=1 / 16, gt=0)
    vlasov_dt: float = Field(default=1 / 128, gt=0)


class CoherentConfig(_Strict):
    J: Union[None, int, tuple[int, int]] = None
    cell_factor: float = Field(default=1.25, gt=1)
    coverage_tol: float = Field(default=1e-3, gt=0)


class ConstantsConfig(_Strict):
    C_s: float = Field(gt=0)
    C_2: float = Field(gt=0)
    provenance: str

    def build(self) -> AssumptionConstants:
        return AssumptionConstants(self.C_s, self.C_2, self.provenance)


class RunConfig(_Strict):
    d: Literal[1, 2, 3] = 1
    grid: GridConfig = GridConfig()
    kappa: Literal[-1, 1] = 1
    kernel: KernelConfig = KernelConfig()
    coupling: bool = True
    eps: list[float] = Field(min_length=1)
    profile: list[GaussianConfig] = Field(min_length=1)
    time_step: TimeStepConfig = TimeStepConfig()
    T: float = Field(ge=0)
    sample_times: Optional[list[float]] = None
    test_functions: Optional[list[TestFunctionConfig]] = None
    constants: Optional[ConstantsConfig] = None
    coherent: CoherentConfig = CoherentConfig()
    vlasov_error_estimate: bool = True
    output_dir: Optional[str] = None
    seed: int = Field(default=0, ge=0, lt=2**64)

    @field_validator("eps")
    @classmethod
    def _eps_list(cls, value: list[float]) -> list[float]:
        if any(not 0 < e < 1 for e in value):
            raise ValueError("every eps must lie in (0, 1)")
        for big, small in zip(value, value[1:]):
            if not small < big:
                raise ValueError("eps list must be strictly decreasing")
            if abs(big / small - 2) > 1e-9:
                raise ValueError("eps list must be dyadic (successive ratio 2)")
        return value

    @model_validator(mode="after")
    def _times(self) -> "RunConfig":
        for t in self.times:
            if not -1e-12 <= t <= self.T + 1e-12:
                raise ValueError(f"sample time {t} outside [0, T]")
        if list(self.times) != sorted(set(self.times)):
            raise ValueError("sample times must be strictly increasing")
        return self

    @property
    def times(self) -> list[float]:
        return list(self.sample_times) if self.sample_times is not None else [0.0, self.T] if self.T > 0 else [0.0]

    # -- builders ----------------------------------------------------------------

    def spectral_grid(self) -> SpectralGrid:
        return make_grid(self.d, self.grid.L, self.grid.N_x)

    def phase_grid(self) -> PhaseGrid:
        return PhaseGrid.create(self.spectral_grid(), self.grid.xi_max, self.grid.N_xi)

    def build_profile(self) -> GaussianProfile:
        return GaussianProfile.from_dicts([c.model_dump() for c in self.profile], self.d)

    def build_kernel(self) -> Kernel:
        return self.kernel.build()

    def build_constants(self) -> AssumptionConstants | None:
        return self.constants.build() if self.constants is not None else None

    def build_test_functions(self) -> list[TestFunction]:
        if self.test_functions is None:
            return default_test_functions(self.build_profile())
        return [TestFunction.create(t.center_x, t.center_xi, t.width_x, t.width_xi, self.d)
                for t in self.test_functions]

    def hartree_dt(self, eps: float) -> float:
        return self.time_step.c_dt * eps

    def config_hash(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def default_test_functions(profile: GaussianProfile) -> list[TestFunction]:
    """3 x 3 Gaussians over the bulk of the profile (d = 1), widths 1/4 of the support radius.

    For ``d > 1`` the same 3 x 3 pattern is laid along the first axis pair.
    """
    d = profile.dim
    rx, rxi = profile.support_radius()
    x_lo, x_hi, xi_lo, xi_hi = profile.bounding_box(3.0)
    cx0, cxi0 = (x_lo + x_hi) / 2, (xi_lo + xi_hi) / 2
    out = []
    for sx in (-0.5, 0.0, 0.5):
        for sxi in (-0.5, 0.0, 0.5):
            cx = cx0.copy()
            cxi = cxi0.copy()
            cx[0] += sx * rx[0]
            cxi[0] += sxi * rxi[0]
            out.append(TestFunction.create(cx, cxi, rx / 4, rxi / 4, d))
    return out


def load_config(path: Path | str, **overrides) -> RunConfig:
    """Read a JSON config; every failure is raised as :class:`ConfigError`."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file {path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc
