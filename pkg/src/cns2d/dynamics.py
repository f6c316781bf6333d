"""Galerkin-truncated constrained Navier-Stokes evolution.

    du/dt = -nu A u - B(u) + |grad u|^2 u + f

The Stokes term is integrated exactly by an exponential integrator
(ETDRK4); convection, the constraint term and forcing are explicit.  The
unit sphere ``|u|_H = 1`` is invariant for the continuous flow and is only
measured here, never enforced (see ``SolverConfig.renormalize``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._etd import ETDRK4
from .errors import ConfigError, DivergenceError, InputError
from .series import ControlTrajectory, FieldSeries
from .spectral import (DivFreeField, GridError, WaveGrid, convect_coeffs, make_grid, norms,
                       read_field_csv, write_field_csv)


@dataclass(frozen=True)
class ForcingSpec:
    """Right-hand side forcing.

    ``kind`` is ``"none"``, ``"tangent_constant"`` (a fixed field ``g``
    re-projected onto the tangent space of the current state at every stage)
    or ``"control"`` (a :class:`ControlTrajectory`, linear in time).
    """

    kind: str = "none"
    g: DivFreeField | None = None
    control: ControlTrajectory | None = None

    def __post_init__(self):
        if self.kind not in ("none", "tangent_constant", "control"):
            raise ConfigError(f"unknown forcing kind {self.kind!r}")
        if self.kind == "tangent_constant" and self.g is None:
            raise ConfigError("tangent_constant forcing needs a field g")
        if self.kind == "control" and self.control is None:
            raise ConfigError("control forcing needs a ControlTrajectory")

    @classmethod
    def none(cls) -> "ForcingSpec":
        return cls()

    @classmethod
    def tangent_constant(cls, g: DivFreeField) -> "ForcingSpec":
        return cls("tangent_constant", g=g)

    @classmethod
    def from_control(cls, U: ControlTrajectory) -> "ForcingSpec":
        return cls("control", control=U)

    def evaluate(self, a: np.ndarray, t: float) -> np.ndarray | None:
        if self.kind == "none":
            return None
        if self.kind == "tangent_constant":
            g = self.g.coeffs
            return g - np.vdot(a, g).real * a
        return self.control.at(t)


@dataclass(frozen=True)
class SolverConfig:
    grid: WaveGrid
    dt: float
    horizon: float
    nu: float = 1.0
    store_stride: int = 1
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    renormalize: bool = False
    # test hooks: switch off convection / the constraint term
    convection: bool = True
    constraint: bool = True

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError("nu must be positive")
        if not (self.dt > 0 and self.horizon > 0):
            raise ConfigError("dt and horizon must be positive")
        if self.dt > self.horizon * (1 + 1e-12):
            raise ConfigError("dt exceeds the horizon")
        steps = round(self.horizon / self.dt)
        if abs(steps * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise ConfigError(f"horizon {self.horizon} is not a whole number of steps of {self.dt}")
        if not (isinstance(self.store_stride, (int, np.integer)) and self.store_stride >= 1):
            raise ConfigError("store_stride must be a positive integer")
        if steps % self.store_stride:
            raise ConfigError("store_stride must divide the number of steps")
        U = self.forcing.control
        if U is not None:
            if U.grid != self.grid:
                raise GridError("control lives on a different grid")
            if U.times[0] > 1e-12 or U.times[-1] < self.horizon * (1 - 1e-12):
                raise ConfigError("control does not cover [0, horizon]")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        """Stored snapshot times."""
        return self.dt * np.arange(0, self.n_steps + 1, self.store_stride)

    def replace(self, **kw) -> "SolverConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return SolverConfig(**d)

    def to_dict(self) -> dict:
        return {"n": self.grid.n, "dealias_bound": self.grid.dealias_bound,
                "dealias": self.grid.dealias, "nu": self.nu, "dt": self.dt,
                "horizon": self.horizon, "store_stride": self.store_stride,
                "forcing": self.forcing.kind, "renormalize": self.renormalize}


class Trajectory(FieldSeries):
    """Stored snapshots of a solve together with the config that produced them."""

    def __init__(self, grid: WaveGrid, times, coeffs, config: SolverConfig | None = None):
        super().__init__(grid, times, coeffs)
        self.config = config

    def _extra(self) -> dict:
        return {"config": self.config}


# ---------------------------------------------------------------------------
# right-hand side and stepping
# ---------------------------------------------------------------------------

def _nonstiff(grid: WaveGrid, a: np.ndarray, t: float, cfg: SolverConfig) -> np.ndarray:
    out = np.zeros_like(a)
    if cfg.convection:
        out -= convect_coeffs(grid, a, a)
    if cfg.constraint:
        out += np.sum(grid.ksq * (a.real ** 2 + a.imag ** 2)) * a
    f = cfg.forcing.evaluate(a, t)
    if f is not None:
        out += f
    return out


def rhs_galerkin(u: DivFreeField, f_now: DivFreeField, nu: float = 1.0) -> DivFreeField:
    """``-nu A u - B(u) + |grad u|^2 u + f``."""
    grid = u.grid
    a = u.coeffs
    out = (-nu * grid.ksq * a - convect_coeffs(grid, a, a)
           + np.sum(grid.ksq * np.abs(a) ** 2) * a + f_now.coeffs)
    return DivFreeField(grid, out)


@lru_cache(maxsize=64)
def _integrator(grid: WaveGrid, nu: float, dt: float) -> ETDRK4:
    return ETDRK4(-nu * grid.ksq, dt)


def _advance(a: np.ndarray, t: float, cfg: SolverConfig) -> np.ndarray:
    grid = cfg.grid
    scheme = _integrator(grid, cfg.nu, cfg.dt)
    return scheme.step(a, lambda b, s: _nonstiff(grid, b, s, cfg),
                       (t, t + cfg.dt / 2, t + cfg.dt))


def step(u: DivFreeField, t: float, cfg: SolverConfig, index: int = 0) -> DivFreeField:
    """Advance ``u`` from ``t`` to ``t + dt``; ``index`` labels divergence errors."""
    if u.grid != cfg.grid:
        raise GridError("state and config grids differ")
    a = _advance(u.coeffs, t, cfg)
    if not np.all(np.isfinite(a)):
        raise DivergenceError(index)
    return DivFreeField(cfg.grid, a)


def solve_state(u0: DivFreeField, cfg: SolverConfig) -> Trajectory:
    """Integrate from ``u0`` over ``[0, cfg.horizon]``."""
    if u0.grid != cfg.grid:
        raise GridError("initial state and config grids differ")
    h0 = norms(u0).h
    if h0 > 1 + 1e-9:
        raise InputError(f"|u0|_H = {h0:.12g} lies outside the unit ball")
    a = u0.coeffs.copy()
    out = np.empty((cfg.n_steps // cfg.store_stride + 1,) + cfg.grid.shape, dtype=complex)
    out[0] = a
    for i in range(cfg.n_steps):
        a = _advance(a, i * cfg.dt, cfg)
        if not np.all(np.isfinite(a)):
            raise DivergenceError(i)
        if cfg.renormalize:
            a /= np.linalg.norm(a)
        if (i + 1) % cfg.store_stride == 0:
            out[(i + 1) // cfg.store_stride] = a
    return Trajectory(cfg.grid, cfg.times, out, cfg)


def truncate(u: DivFreeField, cutoff: int) -> DivFreeField:
    """Galerkin projection: keep modes with ``|k|_inf <= cutoff``."""
    grid = u.grid
    if cutoff > grid.K or cutoff < 0:
        raise InputError(f"cutoff {cutoff} outside [0, {grid.K}]")
    keep = np.maximum(np.abs(grid.k1), np.abs(grid.k2)) <= cutoff
    return DivFreeField(grid, np.where(keep, u.coeffs, 0))


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def cumulative_trapezoid(values: np.ndarray, times: np.ndarray) -> np.ndarray:
    out = np.zeros(len(values))
    out[1:] = np.cumsum(0.5 * np.diff(times) * (values[1:] + values[:-1]))
    return out


def energy_identity_residual(traj: Trajectory, nu: float | None = None) -> np.ndarray:
    """Residual of ``|u(t)|^2 - nu = (|u(0)|^2 - nu) exp(2 int_0^t |u|_V^2 ds)``.

    With ``nu = 1`` this is the sphere identity of the unforced flow.  The
    time integral uses the trapezoid rule on the stored snapshots.  The
    residual is relative to the right-hand side, or absolute when the start
    lies on the sphere (both sides vanish).
    """
    if nu is None:
        nu = traj.config.nu if traj.config is not None else 1.0
    h2 = traj.norm_series("H") ** 2
    v2 = traj.norm_series("V") ** 2
    lhs = h2 - nu
    rhs = (h2[0] - nu) * np.exp(2 * cumulative_trapezoid(v2, traj.times))
    if abs(h2[0] - nu) < 1e-12:
        return np.abs(lhs - rhs)
    return np.abs(lhs - rhs) / np.abs(rhs)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

SERIES_COLUMNS = ("t", "norm_H", "norm_V", "norm_E", "energy_residual")


def series_rows(traj: Trajectory) -> list[tuple[float, ...]]:
    res = energy_identity_residual(traj)
    return list(zip(traj.times, traj.norm_series("H"), traj.norm_series("V"),
                    traj.norm_series("E"), res))


def export_trajectory(traj: FieldSeries, out_dir, name: str = "field",
                      diagnostics: bool = True) -> Path:
    """Write ``meta.json``, one coefficient CSV per snapshot and ``series.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for i in range(len(traj)):
        fname = f"{name}_{i:05d}.csv"
        write_field_csv(traj[i], out / fname)
        files.append(fname)
    cfg = getattr(traj, "config", None)
    meta = {"config": cfg.to_dict() if cfg is not None else
            {"n": traj.grid.n, "dealias_bound": traj.grid.dealias_bound,
             "dealias": traj.grid.dealias},
            "times": [float(t) for t in traj.times], "snapshots": files}
    if isinstance(traj, ControlTrajectory):
        meta["v_bound"] = traj.v_bound
    (out / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    if diagnostics and isinstance(traj, Trajectory):
        with open(out / "series.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for row in series_rows(traj):
                w.writerow([repr(float(x)) for x in row])
    return out


def load_trajectory(path) -> Trajectory:
    """Read a directory written by :func:`export_trajectory`."""
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    c = meta["config"]
    grid = make_grid(c["n"], c["dealias_bound"], c.get("dealias", True))
    fields = [read_field_csv(path / f, grid) for f in meta["snapshots"]]
    cfg = None
    if "dt" in c:
        cfg = SolverConfig(grid, dt=c["dt"], horizon=c["horizon"], nu=c["nu"],
                           store_stride=c["store_stride"], renormalize=c["renormalize"])
    return Trajectory.from_fields(meta["times"], fields, config=cfg)
