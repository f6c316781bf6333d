"""Linearised state equation around a frozen trajectory and its adjoint.

Forward (tangent) equation, z(0) = 0:

    z_t = -nu A z - B'(y) z + |y|_V^2 z + 2 <y, z>_V y + h

Backward (adjoint) equation, lam(T) = 0:

    -lam_t = -nu A lam - B'(y)* lam + |y|_V^2 lam + 2 <y, lam>_H A y + g

with ``B'(y) w = P[(y.grad) w + (w.grad) y]`` and
``B'(y)* lam = P[-(y.grad) lam + (grad y)^T lam]``.  Both solves reuse the
ETDRK4 scheme of the state solver; the frozen state is read at snapshots
and linearly interpolated at half steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._etd import ETDRK4
from .dynamics import SolverConfig, Trajectory, solve_state
from .errors import DivergenceError, InputError
from .series import ControlTrajectory, FieldSeries
from .spectral import (DivFreeField, bprime_adjoint_coeffs, bprime_coeffs, phys_with_grad)


class LinearizedOperator:
    """Linearisation of the constrained flow about ``base``.

    Parameters
    ----------
    base : Trajectory
        Frozen state, stored at every step (``store_stride == 1``).
    nu : float, optional
        Viscosity; defaults to the base trajectory's config.
    convection, constraint : bool
        Switch the ``B'`` terms / the ``|y|_V^2`` and rank-one terms off
        (used to check against closed-form heat solutions).
    """

    def __init__(self, base: Trajectory, nu: float | None = None,
                 convection: bool = True, constraint: bool = True):
        if len(base) < 2:
            raise InputError("base trajectory needs at least two snapshots")
        cfg = base.config
        if cfg is not None and cfg.store_stride != 1:
            raise InputError("linearisation needs a base stored at every step")
        if np.ptp(np.diff(base.times)) > 1e-9 * base.spacing:
            raise InputError("base trajectory must be uniformly sampled")
        self.base = base
        self.grid = base.grid
        self.nu = float(nu if nu is not None else (cfg.nu if cfg is not None else 1.0))
        self.convection = convection
        self.constraint = constraint
        self.dt = base.spacing
        self._phys = [None] * len(base)
        self._scheme = ETDRK4(-self.nu * self.grid.ksq, self.dt)

    @property
    def horizon(self) -> float:
        return self.base.horizon

    # -- frozen-state lookup at half-step positions p (time = p * dt / 2) ----
    def _snap_phys(self, i: int) -> np.ndarray:
        if self._phys[i] is None:
            self._phys[i] = phys_with_grad(self.grid, self.base.coeffs[i])
        return self._phys[i]

    def _frozen(self, p: int):
        i, odd = divmod(p, 2)
        y = self.base.coeffs
        if not odd:
            yb = y[i]
            pu = self._snap_phys(i) if self.convection else None
        else:
            yb = 0.5 * (y[i] + y[i + 1])
            pu = 0.5 * (self._snap_phys(i) + self._snap_phys(i + 1)) if self.convection else None
        return yb, pu

    def _frozen_at(self, t: float):
        x = t / (self.dt / 2)
        p = int(round(x))
        if abs(x - p) < 1e-9 and 0 <= p <= 2 * (len(self.base) - 1):
            return self._frozen(p)
        yb = self.base.at(t)
        return yb, (phys_with_grad(self.grid, yb) if self.convection else None)

    def _check_time(self, t: float):
        if t < -1e-9 * max(1.0, self.horizon) or t > self.horizon * (1 + 1e-9):
            raise InputError(f"time {t} outside [0, {self.horizon}]")

    # -- non-stiff parts ------------------------------------------------------
    def _tangent(self, w: np.ndarray, yb: np.ndarray, pu) -> np.ndarray:
        grid = self.grid
        out = np.zeros_like(w)
        if self.convection:
            out -= bprime_coeffs(grid, yb, w, pu)
        if self.constraint:
            ay = grid.ksq * yb
            out += np.sum(ay.real * yb.real + ay.imag * yb.imag) * w
            out += 2 * np.vdot(ay, w).real * yb
        return out

    def _cotangent(self, lam: np.ndarray, yb: np.ndarray, pu) -> np.ndarray:
        grid = self.grid
        out = np.zeros_like(lam)
        if self.convection:
            out -= bprime_adjoint_coeffs(grid, yb, lam, pu)
        if self.constraint:
            ay = grid.ksq * yb
            out += np.sum(ay.real * yb.real + ay.imag * yb.imag) * lam
            out += 2 * np.vdot(yb, lam).real * ay
        return out


def bprime_apply(ubar: DivFreeField, w: DivFreeField) -> DivFreeField:
    """``B'(ubar) w = P[(ubar.grad) w + (w.grad) ubar]``."""
    return DivFreeField(ubar.grid, bprime_coeffs(ubar.grid, ubar.coeffs, w.coeffs))


def bprime_adjoint_apply(ubar: DivFreeField, lam: DivFreeField) -> DivFreeField:
    """H-adjoint of :func:`bprime_apply`."""
    return DivFreeField(ubar.grid, bprime_adjoint_coeffs(ubar.grid, ubar.coeffs, lam.coeffs))


def linearized_rhs(op: LinearizedOperator, w: DivFreeField, t: float,
                   h_now: DivFreeField | None = None) -> DivFreeField:
    """Right-hand side of the tangent equation at time ``t``."""
    op._check_time(t)
    yb, pu = op._frozen_at(t)
    out = -op.nu * op.grid.ksq * w.coeffs + op._tangent(w.coeffs, yb, pu)
    if h_now is not None:
        out = out + h_now.coeffs
    return DivFreeField(op.grid, out)


def adjoint_rhs(op: LinearizedOperator, lam: DivFreeField, t: float,
                g_now: DivFreeField | None = None) -> DivFreeField:
    """Right-hand side of the backward adjoint equation (``-lam_t = ...``)."""
    op._check_time(t)
    yb, pu = op._frozen_at(t)
    out = -op.nu * op.grid.ksq * lam.coeffs + op._cotangent(lam.coeffs, yb, pu)
    if g_now is not None:
        out = out + g_now.coeffs
    return DivFreeField(op.grid, out)


def _source(op: LinearizedOperator, src: FieldSeries | None):
    """Source lookup by half-step position (linear in time between samples)."""
    if src is None:
        return lambda p: 0.0
    if src.grid != op.grid:
        raise InputError("source lives on a different grid")
    aligned = len(src) == len(op.base) and np.allclose(src.times, op.base.times,
                                                      rtol=0, atol=1e-12)
    if aligned:
        c = src.coeffs

        def lookup(p):
            i, odd = divmod(p, 2)
            return c[i] if not odd else 0.5 * (c[i] + c[i + 1])
        return lookup
    return lambda p: src.at(p * op.dt / 2)


def solve_linearized(op: LinearizedOperator, h: FieldSeries | None = None) -> Trajectory:
    """Forward tangent solve with ``z(0) = 0``."""
    src = _source(op, h)
    nt = len(op.base)
    out = np.zeros((nt,) + op.grid.shape, dtype=complex)
    z = out[0].copy()

    def N(w, p):
        yb, pu = op._frozen(p)
        return op._tangent(w, yb, pu) + src(p)

    for n in range(nt - 1):
        z = op._scheme.step(z, N, (2 * n, 2 * n + 1, 2 * n + 2))
        if not np.all(np.isfinite(z)):
            raise DivergenceError(n)
        out[n + 1] = z
    return Trajectory(op.grid, op.base.times, out, op.base.config)


def solve_adjoint(op: LinearizedOperator, g: FieldSeries | None = None) -> Trajectory:
    """Backward adjoint solve from ``lam(T) = 0``; returned in forward time order."""
    src = _source(op, g)
    nt = len(op.base)
    out = np.zeros((nt,) + op.grid.shape, dtype=complex)
    lam = out[-1].copy()

    def N(v, p):
        yb, pu = op._frozen(p)
        return op._cotangent(v, yb, pu) + src(p)

    for n in range(nt - 1, 0, -1):
        lam = op._scheme.step(lam, N, (2 * n, 2 * n - 1, 2 * n - 2))
        if not np.all(np.isfinite(lam)):
            raise DivergenceError(n)
        out[n - 1] = lam
    return Trajectory(op.grid, op.base.times, out, op.base.config)


# ---------------------------------------------------------------------------
# verification helpers
# ---------------------------------------------------------------------------

def duality_record(op: LinearizedOperator, h: FieldSeries, g: FieldSeries) -> dict:
    """Compare ``int <z, g> dt`` with ``int <h, lam> dt`` (trapezoid rule)."""
    z = solve_linearized(op, h)
    lam = solve_adjoint(op, g)
    lhs = z.l2_inner(g)
    rhs = lam.l2_inner(h)
    return {"test": "duality", "eps_or_dt": op.dt, "lhs": lhs, "rhs": rhs,
            "rel_err": abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300)}


def _with_control(cfg: SolverConfig, U: ControlTrajectory) -> SolverConfig:
    from .dynamics import ForcingSpec
    return cfg.replace(forcing=ForcingSpec.from_control(U))


def taylor_records(U: ControlTrajectory, h: ControlTrajectory, u0: DivFreeField,
                   cfg: SolverConfig, eps=(1e-1, 1e-2, 1e-3, 1e-4)) -> list[dict]:
    """Remainders ``|S(U + eps h) - S(U) - eps z|_{L^inf(V)}`` for each ``eps``."""
    base = solve_state(u0, _with_control(cfg, U))
    z = solve_linearized(LinearizedOperator(base), h)
    out = []
    for e in eps:
        y = solve_state(u0, _with_control(cfg, U + e * h))
        r = (y - base - e * z).sup_norm("V")
        out.append({"test": "taylor", "eps_or_dt": float(e), "lhs": r,
                    "rhs": float(e * z.sup_norm("V")), "rel_err": r / max(e * z.sup_norm("V"), 1e-300)})
    return out


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass(frozen=True)
class LipschitzReport:
    diff_linf_V: float
    diff_l2_E: float
    control_l2_V: float
    ratio_linf_V: float
    ratio_l2_E: float


def lipschitz_probe(U1: ControlTrajectory, U2: ControlTrajectory, u0: DivFreeField,
                    cfg: SolverConfig) -> LipschitzReport:
    """Difference quotients of the control-to-state map.

    Ratios are reported as 0 when the controls coincide (numerators are then 0).
    """
    y1 = solve_state(u0, _with_control(cfg, U1))
    y2 = solve_state(u0, _with_control(cfg, U2))
    d = y1 - y2
    num_v = d.sup_norm("V")
    num_e = d.l2_norm("E")
    den = (U1 - U2).l2_norm("V")
    if den == 0:
        return LipschitzReport(num_v, num_e, 0.0, 0.0, 0.0)
    return LipschitzReport(num_v, num_e, den, num_v / den, num_e / den)
