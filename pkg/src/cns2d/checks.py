"""Property batteries behind the ``invariants`` and ``adjoint-check`` commands.

Every check returns a record ``{name, value, threshold, passed}`` where
``value`` is the worst case over the sampled inputs.  Identities are
measured relative to the Cauchy-Schwarz size of the pairing involved.
"""

from __future__ import annotations

import numpy as np

from .control import admissible_project, tangency_defect
from .dynamics import (ForcingSpec, SolverConfig, Trajectory, energy_identity_residual,
                       rhs_galerkin, solve_state)
from .linearization import LinearizedOperator, duality_record
from .sampling import RandomFieldSpec, random_control, random_field, random_fields
from .spectral import (DivFreeField, bprime_adjoint_coeffs, bprime_coeffs, constraint_Q, convect,
                       inner_H, leray_project, make_grid, nonlinear_B, norms, projected_drift,
                       stokes_apply, tangent_project, to_physical, to_spectral, velocity_hat)


def _record(name: str, value: float, threshold: float, lower: bool = False) -> dict:
    value = float(value)
    passed = value >= threshold if lower else value <= threshold
    return {"name": name, "value": value, "threshold": float(threshold), "passed": bool(passed)}


def _rel(a: float, b: float, scale: float) -> float:
    return abs(a - b) / max(scale, 1e-300)


def _fields(seed: int, grid, count: int, stream0: int = 0):
    spec = RandomFieldSpec(seed)
    return [random_field(spec, grid, stream=stream0 + i) for i in range(count)]


def spectral_checks(seed: int, n: int = 16, samples: int = 20, pairs: int = 100) -> list[dict]:
    grid = make_grid(n)
    us = _fields(seed, grid, samples)
    ws = _fields(seed, grid, samples, stream0=samples)
    out = []

    worst = 0.0
    for u, w in zip(us, ws):
        Bu = nonlinear_B(u)
        worst = max(worst, abs(inner_H(Bu, u)) / (norms(Bu).h * norms(u).h))
        Buw = convect(u, w)
        worst = max(worst, abs(inner_H(Buw, w)) / (norms(Buw).h * norms(w).h))
    out.append(_record("trilinear_skew", worst, 1e-10))

    worst = 0.0
    for u in us:
        Bu, Au = nonlinear_B(u), stokes_apply(u)
        worst = max(worst, abs(inner_H(Bu, Au)) / (norms(Bu).h * norms(Au).h))
    out.append(_record("convection_enstrophy", worst, 1e-10))

    # |Q(u1) - Q(u2)|_H / (|u1 - u2|_V (|u1|_V + |u2|_V)^2), amplitudes spread over decades
    rng = np.random.default_rng(np.random.SeedSequence([seed, 21]))
    ps = _fields(seed, grid, 2 * pairs, stream0=2 * samples)
    worst = 0.0
    for i in range(pairs):
        u1 = ps[2 * i] * 10 ** rng.uniform(-2, 1)
        u2 = ps[2 * i + 1] * 10 ** rng.uniform(-2, 1) if i % 2 else u1 + ps[2 * i + 1] * 1e-3
        d = norms(u1 - u2).v * (norms(u1).v + norms(u2).v) ** 2
        worst = max(worst, norms(constraint_Q(u1) - constraint_Q(u2)).h / d)
    out.append(_record("Q_lipschitz_ratio", worst, 1 + 1e-9))

    worst = 0.0
    for u in us:
        Bu = nonlinear_B(u)
        worst = max(worst, Bu.reality_defect() / max(np.abs(Bu.coeffs).max(), 1e-300))
    out.append(_record("reality_preserved", worst, 1e-12))

    worst = 0.0
    m = grid.physical_size()
    for u in us:
        ux, uy = to_physical(u)
        quad = (ux ** 2 + uy ** 2).mean() * (2 * np.pi) ** 2
        worst = max(worst, _rel(quad, norms(u).h ** 2, norms(u).h ** 2))
        back = to_spectral(ux, uy, grid)
        worst = max(worst, norms(back - u).h / norms(u).h)
    out.append(_record("parseval_roundtrip", worst, 1e-10))

    worst = 0.0
    for u in us:
        vh = velocity_hat(u, m)
        p = leray_project(vh[0], vh[1], grid)
        worst = max(worst, norms(p - u).h / norms(u).h)
    out.append(_record("leray_identity_on_range", worst, 1e-12))

    worst = 0.0
    for u, v in zip(us, ws):
        pv = tangent_project(u, v)
        worst = max(worst, abs(inner_H(pv, u)) / norms(v).h)
        F = projected_drift(u, DivFreeField.zeros(grid))
        G = tangent_project(u, stokes_apply(u) + nonlinear_B(u))
        worst = max(worst, norms(F - G).h / norms(G).h)
        r = rhs_galerkin(u, tangent_project(u, v), 1.0)
        worst = max(worst, abs(inner_H(r, u)) / norms(r).h)
    out.append(_record("tangent_space", worst, 1e-10))

    a = random_field(RandomFieldSpec(seed), grid).coeffs
    b = random_field(RandomFieldSpec(seed), grid).coeffs
    out.append(_record("random_field_determinism", float(np.max(np.abs(a - b))), 0.0))
    return out


def dynamics_checks(seed: int, n: int = 16, horizon: float = 0.1, dt: float = 1e-3) -> list[dict]:
    grid = make_grid(n)
    out = []
    u0 = random_field(RandomFieldSpec(seed), grid)
    g = random_field(RandomFieldSpec(seed + 1), grid)
    cfg = SolverConfig(grid, dt=dt, horizon=horizon, forcing=ForcingSpec.tangent_constant(g))
    tr = solve_state(u0, cfg)
    out.append(_record("sphere_drift", np.max(np.abs(tr.norm_series("H") - 1)), 1e-8))
    e = DivFreeField.single_mode(grid, (1, 0))
    tr = solve_state(e, SolverConfig(grid, dt=dt, horizon=horizon))
    out.append(_record("equilibrium_drift", norms(tr[-1] - e).h, 1e-8))
    tr = solve_state(u0 * 0.5, SolverConfig(grid, dt=dt, horizon=horizon))
    out.append(_record("energy_identity", np.max(energy_identity_residual(tr)), 1e-4))
    out.append(_record("ball_invariance", np.max(tr.norm_series("H")), 1 + 1e-8))
    return out


def adjoint_term_checks(seed: int, n: int = 16, samples: int = 20, tol: float = 1e-10) -> list[dict]:
    """Inner-product tests of every linearized term and of the full operator."""
    grid = make_grid(n)
    fs = random_fields(seed, grid, 3 * samples)
    bp = rk = full = 0.0
    for i in range(samples):
        y, w, lam = fs[3 * i], fs[3 * i + 1], fs[3 * i + 2]
        a = y.coeffs
        lhs = np.vdot(lam.coeffs, bprime_coeffs(grid, a, w.coeffs)).real
        rhs = np.vdot(bprime_adjoint_coeffs(grid, a, lam.coeffs), w.coeffs).real
        scale = norms(DivFreeField(grid, bprime_coeffs(grid, a, w.coeffs))).h * norms(lam).h
        bp = max(bp, _rel(lhs, rhs, scale))
        ay = grid.ksq * a
        lhs = 2 * np.vdot(ay, w.coeffs).real * np.vdot(lam.coeffs, a).real
        rhs = 2 * np.vdot(a, lam.coeffs).real * np.vdot(w.coeffs, ay).real
        rk = max(rk, _rel(lhs, rhs, 2 * norms(y).v * norms(w).v * norms(y).h * norms(lam).h))
        op = _frozen_operator(y)
        Lw = -grid.ksq * w.coeffs + op._tangent(w.coeffs, a, None)
        Ll = -grid.ksq * lam.coeffs + op._cotangent(lam.coeffs, a, None)
        lhs, rhs = np.vdot(lam.coeffs, Lw).real, np.vdot(Ll, w.coeffs).real
        full = max(full, _rel(lhs, rhs, np.linalg.norm(Lw) * norms(lam).h))
    return [_record("bprime_adjoint", bp, tol), _record("rank_one_adjoint", rk, 1e-12),
            _record("full_operator_adjoint", full, tol)]


def _frozen_operator(y: DivFreeField) -> LinearizedOperator:
    cfg = SolverConfig(y.grid, dt=1.0, horizon=1.0)
    return LinearizedOperator(Trajectory.from_fields([0.0, 1.0], [y, y], config=cfg))


def duality_checks(seed: int, n: int = 16, horizon: float = 0.5, dt: float = 1e-3,
                   tol: float = 1e-6) -> list[dict]:
    """Discrete duality at ``dt`` and ``dt / 2``; the error should drop about 4x."""
    grid = make_grid(n)
    u0 = random_field(RandomFieldSpec(seed), grid)
    errs = []
    for step in (dt, dt / 2):
        cfg = SolverConfig(grid, dt=step, horizon=horizon)
        op = LinearizedOperator(solve_state(u0, cfg))
        h = random_control(seed + 1, grid, cfg.times, envelope="bump")
        g = random_control(seed + 2, grid, cfg.times, envelope="bump")
        errs.append(duality_record(op, h, g)["rel_err"])
    return [_record("duality", errs[0], tol),
            _record("duality_refinement_ratio", errs[0] / max(errs[1], 1e-300), 3.0, lower=True)]


def control_checks(seed: int, n: int = 16) -> list[dict]:
    grid = make_grid(n)
    y = random_field(RandomFieldSpec(seed), grid)
    times = np.linspace(0, 0.1, 11)
    U = random_control(seed + 1, grid, times, scale=20.0)
    P = admissible_project(U, y)
    vmax = float(np.max(P.norm_series("V")))
    return [_record("admissible_tangency", tangency_defect(P, y), 1e-12),
            _record("admissible_bound", vmax - P.v_bound, 1e-9)]


def run_invariants(seed: int, n: int = 16, samples: int = 20, pairs: int = 100) -> list[dict]:
    return (spectral_checks(seed, n, samples, pairs) + dynamics_checks(seed, n)
            + adjoint_term_checks(seed, n, samples) + control_checks(seed, n))
