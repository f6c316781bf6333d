"""Run configuration for the command-line driver.

A run is described by one JSON document.  Only ``solver.n`` is required;
everything else has a default, and unknown keys are rejected.  Seeds left
as ``null`` are derived from the top-level ``seed`` (which ``--seed``
overrides), so one number reproduces a whole run.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .dynamics import ForcingSpec, SolverConfig
from .errors import ConfigError
from .sampling import RandomFieldSpec, random_field
from .spectral import DivFreeField, make_grid, read_field_csv


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ForcingBlock(_Block):
    kind: Literal["none", "tangent_constant"] = "none"
    seed: Optional[int] = None
    decay: float = 3.0
    amplitude: float = 1.0


class SolverBlock(_Block):
    n: int
    dealias_bound: Optional[int] = None
    dealias: bool = True
    nu: float = 1.0
    dt: float = 1e-3
    horizon: float = 1.0
    store_stride: int = 1
    renormalize: bool = False
    forcing: ForcingBlock = Field(default_factory=ForcingBlock)


class InitialCondition(_Block):
    kind: Literal["single_mode", "random", "file"] = "random"
    k: tuple[int, int] = (1, 0)
    amplitude: float = 1.0
    seed: Optional[int] = None
    decay: float = 3.0
    normalize: Optional[float] = 1.0
    path: Optional[str] = None


class OptimizeBlock(_Block):
    max_iters: int = 50
    armijo_c: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    max_shrinks: int = 30
    tol_grad: Optional[float] = None
    tol_rel: float = 1e-6
    tangency: Literal["state", "initial"] = "state"
    v_bound: float = 10.0
    control_seed: Optional[int] = None
    control_scale: float = 1.0
    samples: int = 10
    vi_tol: float = 1e-6
    stationarity_tol: float = 1e-5
    export_control: bool = False


class GradCheckBlock(_Block):
    eps: list[float] = Field(default_factory=lambda: [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4])
    check_eps: float = 1e-3
    tol: float = 1e-4
    slope_target: float = 2.0
    slope_tol: float = 0.2
    control_seed: Optional[int] = None
    direction_seed: Optional[int] = None

    @field_validator("eps")
    @classmethod
    def _eps_sorted(cls, v):
        if len(v) < 3 or any(e <= 0 for e in v):
            raise ValueError("eps needs at least three positive values")
        return sorted(v, reverse=True)


class InvariantsBlock(_Block):
    samples: int = 20
    pairs: int = 100
    n: int = 16


class AdjointCheckBlock(_Block):
    samples: int = 20
    term_tol: float = 1e-10
    duality_tol: float = 1e-6


_SEED_PURPOSES = {"ic": 1, "forcing": 2, "control": 3, "direction": 4, "invariants": 5,
                  "adjoint": 6}


class RunConfig(_Block):
    seed: int = 0
    solver: SolverBlock
    initial_condition: InitialCondition = Field(default_factory=InitialCondition)
    optimize: OptimizeBlock = Field(default_factory=OptimizeBlock)
    grad_check: GradCheckBlock = Field(default_factory=GradCheckBlock)
    invariants: InvariantsBlock = Field(default_factory=InvariantsBlock)
    adjoint_check: AdjointCheckBlock = Field(default_factory=AdjointCheckBlock)

    # -- parsing and echo ---------------------------------------------------
    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.model_validate_json(text)
        except ValidationError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(text)

    def echo(self) -> dict:
        """JSON-ready dump that re-parses to an equal config."""
        return self.model_dump(mode="json")

    def to_json(self) -> str:
        return json.dumps(self.echo(), indent=2, sort_keys=True)

    def with_seed(self, seed: int | None) -> "RunConfig":
        return self if seed is None else self.model_copy(update={"seed": int(seed)})

    def derived_seed(self, purpose: str, explicit: int | None = None) -> int:
        """``explicit`` if given, else a 32-bit key derived from the run seed."""
        if explicit is not None:
            return int(explicit)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFF, _SEED_PURPOSES[purpose]])
        return int(ss.generate_state(1, dtype=np.uint32)[0])

    # -- builders ------------------------------------------------------------
    def grid(self):
        s = self.solver
        try:
            return make_grid(s.n, s.dealias_bound, s.dealias)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def forcing(self, grid) -> ForcingSpec:
        f = self.solver.forcing
        if f.kind == "none":
            return ForcingSpec.none()
        spec = RandomFieldSpec(self.derived_seed("forcing", f.seed), f.decay, f.amplitude)
        return ForcingSpec.tangent_constant(random_field(spec, grid))

    def solver_config(self) -> SolverConfig:
        s = self.solver
        grid = self.grid()
        return SolverConfig(grid, dt=s.dt, horizon=s.horizon, nu=s.nu,
                            store_stride=s.store_stride, forcing=self.forcing(grid),
                            renormalize=s.renormalize)

    def initial_state(self, grid=None) -> DivFreeField:
        grid = grid or self.grid()
        ic = self.initial_condition
        if ic.kind == "single_mode":
            try:
                return DivFreeField.single_mode(grid, ic.k, ic.amplitude)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if ic.kind == "random":
            spec = RandomFieldSpec(self.derived_seed("ic", ic.seed), ic.decay, ic.normalize)
            return random_field(spec, grid)
        if not ic.path:
            raise ConfigError("initial_condition.kind = 'file' needs a path")
        try:
            return read_field_csv(ic.path, grid)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load initial condition {ic.path}: {exc}") from exc
