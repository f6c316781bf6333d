"""Optimal control of the constrained flow.

Cost
    J(y, U) = 1/2 int |y|_V^2 dt + 1/2 int |U|_V^2 dt

Admissible controls are tangent to the state sphere, ``<U(t), y(t)>_H = 0``,
and lie in the V-ball of radius ``v_bound``.  The reduced gradient is
represented in ``L^2(0, T; V)``:

    grad J(U) = U + A^{-1} lam,    lam = adjoint solve with source A y

Time integrals use the trapezoid rule on the solver's snapshot times.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import SolverConfig, Trajectory, solve_state
from .errors import DivergenceError, InputError
from .linearization import LinearizedOperator, _with_control, solve_adjoint
from .series import ControlTrajectory, FieldSeries
from .spectral import DivFreeField, GridError, bprime_coeffs, convect_coeffs

__all__ = [
    "ControlTrajectory", "CostBreakdown", "GradientEval", "PGDOptions", "OptimizationReport",
    "cost_J", "evaluate", "reduced_gradient", "admissible_project", "gradient_mapping",
    "optimize_pgd", "make_admissible", "tangency_defect", "lagrangian_eval", "lagrangian_dy", "lagrangian_dU",
    "optimality_residuals", "weak_form_residuals", "weak_form_residual", "gradient_check",
]


@dataclass(frozen=True)
class CostBreakdown:
    state_term: float
    control_term: float
    total: float


def _check_times(a: FieldSeries, b: FieldSeries):
    if a.grid != b.grid:
        raise GridError("state and control live on different grids")
    if len(a) != len(b) or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise InputError("state and control are sampled on different times")


def cost_J(traj: FieldSeries, U: ControlTrajectory, state_weight: float = 1.0) -> CostBreakdown:
    """Trapezoid evaluation of ``J``; ``state_weight`` scales the state term (test hook)."""
    _check_times(traj, U)
    s = 0.5 * state_weight * traj.l2_norm("V") ** 2
    c = 0.5 * U.l2_norm("V") ** 2
    return CostBreakdown(s, c, s + c)


def _control_config(cfg: SolverConfig, U: ControlTrajectory) -> SolverConfig:
    if cfg.store_stride != 1:
        cfg = cfg.replace(store_stride=1)
    if len(U) != cfg.n_steps + 1 or not np.allclose(U.times, cfg.times, rtol=0, atol=1e-12):
        raise InputError("control must be sampled on the solver time grid")
    return _with_control(cfg, U)


@dataclass
class GradientEval:
    """Everything one reduced-gradient evaluation produces."""

    control: ControlTrajectory
    cost: CostBreakdown
    state: Trajectory
    adjoint: Trajectory | None
    gradient: ControlTrajectory


def _solve(U: ControlTrajectory, u0: DivFreeField, cfg: SolverConfig) -> Trajectory:
    return solve_state(u0, _control_config(cfg, U))


def evaluate(U: ControlTrajectory, u0: DivFreeField, cfg: SolverConfig,
             state_weight: float = 1.0, state: Trajectory | None = None) -> GradientEval:
    """State solve, cost, adjoint solve with source ``A y`` and the V-gradient."""
    y = state if state is not None else _solve(U, u0, cfg)
    cost = cost_J(y, U, state_weight)
    grid = U.grid
    if state_weight == 0:
        return GradientEval(U, cost, y, None, U)
    g = FieldSeries(grid, y.times, state_weight * grid.ksq * y.coeffs)
    lam = solve_adjoint(LinearizedOperator(y), g)
    grad = ControlTrajectory(grid, U.times, U.coeffs + grid.inv_ksq * lam.coeffs, U.v_bound)
    return GradientEval(U, cost, y, lam, grad)


def reduced_gradient(U: ControlTrajectory, u0: DivFreeField, cfg: SolverConfig,
                     state_weight: float = 1.0) -> ControlTrajectory:
    """``U + A^{-1} lam``: the representative of ``dJ(U)`` in ``L^2(0, T; V)``."""
    return evaluate(U, u0, cfg, state_weight).gradient


def admissible_project(U: ControlTrajectory, y, metric: str = "V") -> ControlTrajectory:
    """Project each ``U(t)`` onto ``{v : <v, y(t)>_H = 0, |v|_V <= v_bound}``.

    ``y`` is a state series on the control's times, or a single field for
    tangency to a fixed state (e.g. the initial condition).  With
    ``metric="V"`` (default) the tangent step is the V-orthogonal projection

        v - <v, y>_H / <A^{-1} y, y>_H * A^{-1} y

    so the result is the nearest admissible point in ``L^2(0, T; V)``.
    ``metric="H"`` uses ``v - <v, y>_H y / |y|_H^2`` instead.  The V-ball is
    then enforced by radial rescaling.
    """
    grid = U.grid
    if isinstance(y, DivFreeField):
        if y.grid != grid:
            raise GridError("state and control live on different grids")
        yc = np.broadcast_to(y.coeffs, U.coeffs.shape)
    else:
        _check_times(y, U)
        yc = y.coeffs
    if metric == "V":
        dirs = grid.inv_ksq * yc
    elif metric == "H":
        dirs = yc
    else:
        raise InputError(f"unknown metric {metric!r}")
    a = U.coeffs
    num = np.sum((a * np.conj(yc)).real, axis=(1, 2))
    den = np.sum((dirs * np.conj(yc)).real, axis=(1, 2))
    coef = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    out = a - coef[:, None, None] * dirs
    vn = np.sqrt(np.sum(grid.ksq * np.abs(out) ** 2, axis=(1, 2)))
    scale = np.where(vn > U.v_bound, U.v_bound / np.maximum(vn, 1e-300), 1.0)
    return ControlTrajectory(grid, U.times, out * scale[:, None, None], U.v_bound)


def _project_ref(ev: GradientEval, u0: DivFreeField, tangency: str):
    return ev.state if tangency == "state" else u0


def gradient_mapping(ev: GradientEval, u0: DivFreeField, tangency: str = "state") -> float:
    """``|U - P(U - grad J(U))|`` in ``L^2(0, T; V)``; zero at a stationary point."""
    P = admissible_project(ev.control - ev.gradient, _project_ref(ev, u0, tangency))
    return (ev.control - P).l2_norm("V")


# ---------------------------------------------------------------------------
# projected gradient descent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PGDOptions:
    """``tol_grad=None`` means ``tol_rel`` times the initial gradient-mapping norm."""

    max_iters: int = 50
    armijo_c: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    max_shrinks: int = 30
    tol_grad: float | None = None
    tol_rel: float = 1e-6
    tangency: str = "state"
    state_weight: float = 1.0
    residual_samples: int = 10
    residual_seed: int = 0

    def __post_init__(self):
        if self.max_iters < 0 or self.max_shrinks < 0:
            raise InputError("iteration counts must be non-negative")
        if not (0 < self.armijo_c < 1 and 0 < self.shrink < 1 and self.initial_step > 0):
            raise InputError("line search parameters out of range")
        if self.tangency not in ("state", "initial"):
            raise InputError(f"unknown tangency {self.tangency!r}")


@dataclass
class OptimizationReport:
    iterations: int
    cost_history: list[CostBreakdown]
    grad_norm_history: list[float]
    step_sizes: list[float]
    optimality: dict
    status: str
    control: ControlTrajectory = field(repr=False)
    state: Trajectory = field(repr=False)

    def to_dict(self) -> dict:
        return {"iterations": self.iterations, "status": self.status,
                "cost_history": [asdict(c) for c in self.cost_history],
                "grad_norm_history": list(self.grad_norm_history),
                "step_sizes": list(self.step_sizes), "optimality": dict(self.optimality)}


def tangency_defect(U: ControlTrajectory, y) -> float:
    """``max_t |<U(t), y(t)>_H|`` (``y`` a series or a single field)."""
    return float(np.max(np.abs(np.sum((U.coeffs * np.conj(y.coeffs)).real, axis=(1, 2)))))


def make_admissible(W: ControlTrajectory, u0: DivFreeField, cfg: SolverConfig,
                    tangency: str = "state", tol: float = 1e-12, max_iter: int = 50):
    """Admissible control nearest to ``W`` for its own state.

    With ``tangency="state"`` this solves the fixed point ``U = P_{S(U)}(W)``
    by repeated projection (each pass is one state solve; the map contracts
    fast for moderate controls).  Stops when the tangency defect is below
    ``tol * max(1, |W|_{L^inf H})``.  Returns ``(U, S(U), passes)``.
    """
    if tangency == "initial":
        U = admissible_project(W, u0)
        return U, _solve(U, u0, cfg), 1
    scale = tol * max(1.0, float(W.sup_norm("H")))
    U = W
    y = _solve(U, u0, cfg)
    passes = 0
    while passes < max_iter:
        P = admissible_project(W, y)
        if tangency_defect(U, y) <= scale and (P - U).l2_norm("V") <= scale:
            break
        U = P
        y = _solve(U, u0, cfg)
        passes += 1
    return U, y, passes


def optimize_pgd(U0: ControlTrajectory, u0: DivFreeField, cfg: SolverConfig,
                 opt: PGDOptions | None = None, residuals: bool = True) -> OptimizationReport:
    """Projected gradient descent with Armijo backtracking.

    Trial points are ``R(U_j - s grad J(U_j))`` where ``R`` is
    :func:`make_admissible`, so every iterate is tangent to its own state.
    A step is accepted when

        J(U_trial) < J(U_j) - (c / s) |U_trial - U_j|^2_{L^2 V},

    the sufficient-decrease form of the Armijo rule for projected steps.
    ``U0`` is made admissible first.  When no step passes within
    ``max_shrinks`` halvings the run stops with status ``"stagnated"``.
    """
    opt = opt or PGDOptions()
    sw = opt.state_weight
    U, y, _ = make_admissible(U0, u0, cfg, opt.tangency)
    ev = evaluate(U, u0, cfg, sw, state=y)
    costs = [ev.cost]
    gnorms = [gradient_mapping(ev, u0, opt.tangency)]
    steps: list[float] = []
    tol = opt.tol_grad if opt.tol_grad is not None else opt.tol_rel * gnorms[0]
    status = "max_iters"
    it = 0
    while True:
        if gnorms[-1] <= tol:
            status = "converged"
            break
        if it >= opt.max_iters:
            break
        s = opt.initial_step
        accepted = None
        for _ in range(opt.max_shrinks + 1):
            try:
                trial, y, _ = make_admissible(ev.control - s * ev.gradient, u0, cfg, opt.tangency)
            except DivergenceError:
                s *= opt.shrink
                continue
            c = cost_J(y, trial, sw)
            drop = opt.armijo_c / s * (trial - ev.control).l2_norm("V") ** 2
            if c.total < ev.cost.total - drop:
                accepted = (trial, y)
                break
            s *= opt.shrink
        if accepted is None:
            status = "stagnated"
            break
        ev = evaluate(accepted[0], u0, cfg, sw, state=accepted[1])
        it += 1
        costs.append(ev.cost)
        gnorms.append(gradient_mapping(ev, u0, opt.tangency))
        steps.append(s)
    optimality = {}
    if residuals:
        optimality = optimality_residuals(ev.control, u0, cfg, opt.residual_samples,
                                          opt.residual_seed, state_weight=sw, ev=ev,
                                          tangency=opt.tangency)
    return OptimizationReport(it, costs, gnorms, steps, optimality, status, ev.control, ev.state)


# ---------------------------------------------------------------------------
# Lagrangian
# ---------------------------------------------------------------------------

def _time_derivative(s: FieldSeries) -> np.ndarray:
    """Fourth-order finite difference in time (second order below 5 samples)."""
    c = s.coeffs
    if len(s) < 5 or np.ptp(np.diff(s.times)) > 1e-9 * s.spacing:
        return np.gradient(c, s.times, axis=0, edge_order=2 if len(s) > 2 else 1)
    dt = s.spacing
    d = np.empty_like(c)
    d[2:-2] = (c[:-4] - 8 * c[1:-3] + 8 * c[3:-1] - c[4:]) / (12 * dt)
    # one-sided five-point stencils at both ends
    st = np.array([-25, 48, -36, 16, -3]) / (12 * dt)
    for i in (0, 1):
        d[i] = np.tensordot(st, c[i:i + 5], axes=1)
        d[-1 - i] = -np.tensordot(st, c[len(c) - 1 - i - np.arange(5)], axes=1)
    return d


def _pair(a: np.ndarray, b: np.ndarray, times) -> float:
    """``int <a(t), b(t)>_H dt`` for coefficient stacks."""
    from .series import trapezoid_weights
    return float(trapezoid_weights(times) @ np.sum((a * np.conj(b)).real, axis=(1, 2)))


def _state_residual(y: FieldSeries, U: ControlTrajectory, nu: float) -> np.ndarray:
    """``y_t + nu A y + B(y) - |y|_V^2 y - U`` at every snapshot."""
    grid = y.grid
    a = y.coeffs
    out = _time_derivative(y) + nu * grid.ksq * a - U.coeffs
    v2 = np.sum(grid.ksq * np.abs(a) ** 2, axis=(1, 2))
    out -= v2[:, None, None] * a
    for i in range(len(y)):
        out[i] += convect_coeffs(grid, a[i], a[i])
    return out


def _nu(y: FieldSeries, nu):
    if nu is not None:
        return float(nu)
    cfg = getattr(y, "config", None)
    return cfg.nu if cfg is not None else 1.0


def lagrangian_eval(y: FieldSeries, U: ControlTrajectory, lam: FieldSeries,
                    nu: float | None = None, state_weight: float = 1.0) -> float:
    """``J(y, U) - int <y_t + nu A y + B(y) - |y|_V^2 y - U, lam> dt``.

    ``y_t`` is a fourth-order finite difference of the snapshots.
    """
    _check_times(y, U)
    _check_times(y, lam)
    J = cost_J(y, U, state_weight).total
    if not np.any(lam.coeffs):
        return J
    return J - _pair(_state_residual(y, U, _nu(y, nu)), lam.coeffs, y.times)


def lagrangian_dy(y: FieldSeries, U: ControlTrajectory, lam: FieldSeries, w: FieldSeries,
                  nu: float | None = None, state_weight: float = 1.0) -> float:
    """Directional derivative of the Lagrangian in ``y`` along ``w``.

        int <A y, w> - int <w_t + nu A w + B'(y) w - |y|_V^2 w - 2 <y, w>_V y, lam>
    """
    _check_times(y, U)
    _check_times(y, lam)
    _check_times(y, w)
    grid = y.grid
    a, b = y.coeffs, w.coeffs
    lin = _time_derivative(w) + _nu(y, nu) * grid.ksq * b
    v2 = np.sum(grid.ksq * np.abs(a) ** 2, axis=(1, 2))
    vyw = np.sum(grid.ksq * (a * np.conj(b)).real, axis=(1, 2))
    lin -= v2[:, None, None] * b + 2 * vyw[:, None, None] * a
    for i in range(len(y)):
        lin[i] += bprime_coeffs(grid, a[i], b[i])
    return state_weight * _pair(grid.ksq * a, b, y.times) - _pair(lin, lam.coeffs, y.times)


def lagrangian_dU(y: FieldSeries, U: ControlTrajectory, lam: FieldSeries,
                  h: FieldSeries) -> float:
    """``<U, h>_{L^2 V} + int <h, lam>_H dt``."""
    _check_times(y, U)
    _check_times(U, h)
    _check_times(U, lam)
    return U.l2_inner(h, "V") + _pair(h.coeffs, lam.coeffs, U.times)


def optimality_residuals(Ubar: ControlTrajectory, u0: DivFreeField, cfg: SolverConfig,
                         samples: int = 10, seed: int = 0, state_weight: float = 1.0,
                         ev: GradientEval | None = None, tangency: str = "state") -> dict:
    """First-order optimality certificates at ``Ubar``.

    ``stationarity``: max over random ``w`` (with ``w(0) = 0``) of
    ``|L_y w| / |w|_X`` with ``|w|_X = |w|_{L^2 E} + |w|_{L^inf V}``.  ``vi_min``: min over admissible ``U`` of
    ``L_U (U - Ubar) / |U - Ubar|_{L^2 V}``.  The admissible samples are
    random tangent controls plus the projected-gradient point, which is a
    descent direction whenever ``Ubar`` is not stationary.
    """
    from .sampling import random_control
    if ev is None:
        ev = evaluate(Ubar, u0, cfg, state_weight)
    grid = Ubar.grid
    y = ev.state
    lam = ev.adjoint if ev.adjoint is not None else FieldSeries(grid, y.times, np.zeros_like(y.coeffs))
    times = Ubar.times
    ss = np.random.SeedSequence(seed)
    keys = [int(k) for k in ss.generate_state(2 * samples, dtype=np.uint32)]
    stat = 0.0
    for i in range(samples):
        w = random_control(keys[2 * i], grid, times, envelope="bump")
        wx = w.l2_norm("E") + w.sup_norm("V")
        stat = max(stat, abs(lagrangian_dy(y, Ubar, lam, w, cfg.nu, state_weight)) / wx)
    ref = y if tangency == "state" else u0
    cands = [admissible_project(Ubar - ev.gradient, ref)]
    rng = np.random.default_rng(ss.spawn(1)[0])
    for i in range(samples):
        scale = Ubar.v_bound * rng.uniform(0.05, 1.0)
        V = random_control(keys[2 * i + 1], grid, times, scale=scale, v_bound=Ubar.v_bound)
        cands.append(admissible_project(V, ref))
    vi = np.inf
    for V in cands:
        d = V - Ubar
        dn = d.l2_norm("V")
        if dn > 0:
            vi = min(vi, lagrangian_dU(y, Ubar, lam, d) / dn)
    return {"lagrangian_stationarity_residual": float(stat),
            "variational_inequality_min": float(vi if np.isfinite(vi) else 0.0)}


# ---------------------------------------------------------------------------
# weak form
# ---------------------------------------------------------------------------

def weak_form_residuals(y: FieldSeries, U: ControlTrajectory | None, v: DivFreeField,
                        nu: float | None = None) -> np.ndarray:
    """``M_t`` at every stored time:

        <y(t), v> + int_0^t <nu A y + B(y) - |y|_V^2 y - U, v> ds - <y(0), v>
    """
    from .dynamics import cumulative_trapezoid
    grid = y.grid
    if v.grid != grid:
        raise GridError("test field lives on a different grid")
    if U is not None:
        _check_times(y, U)
    a = y.coeffs
    vc = np.conj(v.coeffs)
    drift = _nu(y, nu) * grid.ksq * a
    v2 = np.sum(grid.ksq * np.abs(a) ** 2, axis=(1, 2))
    drift = drift - v2[:, None, None] * a
    if U is not None:
        drift = drift - U.coeffs
    integrand = np.sum((drift * vc).real, axis=(1, 2))
    integrand += np.array([np.sum((convect_coeffs(grid, a[i], a[i]) * vc).real)
                           for i in range(len(y))])
    hv = np.sum((a * vc).real, axis=(1, 2))
    return hv - hv[0] + cumulative_trapezoid(integrand, y.times)


def weak_form_residual(y: FieldSeries, U: ControlTrajectory | None, v: DivFreeField, t: float,
                       nu: float | None = None) -> float:
    """``M_t`` at a stored time ``t``."""
    idx = np.flatnonzero(np.abs(y.times - t) <= 1e-9 * max(1.0, y.horizon))
    if len(idx) == 0:
        raise InputError(f"time {t} is not a stored snapshot")
    return float(weak_form_residuals(y, U, v, nu)[idx[0]])


# ---------------------------------------------------------------------------
# finite-difference gradient check
# ---------------------------------------------------------------------------

def gradient_check(U: ControlTrajectory, h: ControlTrajectory, u0: DivFreeField,
                   cfg: SolverConfig, eps=(1e-1, 1e-2, 1e-3, 1e-4),
                   state_weight: float = 1.0, workers: int = 1) -> list[dict]:
    """Central differences of ``J`` against ``<grad J(U), h>_{L^2 V}``.

    Returns ``{test, eps_or_dt, lhs, rhs, rel_err}`` per ``eps`` with lhs the
    difference quotient and rhs the adjoint prediction.  The perturbed solves
    are independent and run on ``workers`` threads.
    """
    rhs = evaluate(U, u0, cfg, state_weight).gradient.l2_inner(h, "V")

    def J(e):
        V = U + e * h
        return cost_J(_solve(V, u0, cfg), V, state_weight).total

    points = [s * e for e in eps for s in (1, -1)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            vals = list(pool.map(J, points))
    else:
        vals = [J(p) for p in points]
    out = []
    for i, e in enumerate(eps):
        fd = (vals[2 * i] - vals[2 * i + 1]) / (2 * e)
        out.append({"test": "gradient", "eps_or_dt": float(e), "lhs": float(fd),
                    "rhs": float(rhs), "rel_err": abs(fd - rhs) / max(abs(rhs), 1e-300)})
    return out
