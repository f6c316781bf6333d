import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cns2d import (DivFreeField, GridError, RealityError, constraint_Q, inner_H, inner_V,
                   leray_project, make_grid, nonlinear_B, norms, projected_drift, read_field_csv,
                   stokes_apply, stokes_inverse, tangent_project, to_physical, to_spectral, transfer,
                   trilinear_b, write_field_csv)
from cns2d.spectral import collocation_points, convect, symmetrize, velocity_hat

from conftest import rel


def direct_convection(u: DivFreeField, v: DivFreeField) -> np.ndarray:
    """Projected (u.grad)v by an explicit sum over mode pairs (no FFTs)."""
    g = u.grid
    K = g.K
    out = g.zeros()

    def vel(a, k):
        kk = np.hypot(*k)
        return a * np.array([-k[1], k[0]]) / (kk * 2 * np.pi)

    for p in g.modes:
        up = vel(u.coeffs[p[0] + K, p[1] + K], p)
        for q in g.modes:
            m = p + q
            if max(abs(m[0]), abs(m[1])) > K or not m.any():
                continue
            vq = vel(v.coeffs[q[0] + K, q[1] + K], q)
            nhat = 1j * (up @ q) * vq
            mm = np.hypot(*m)
            out[m[0] + K, m[1] + K] += 2 * np.pi * nhat @ (np.array([-m[1], m[0]]) / mm)
    return out


class TestGrid:
    def test_mode_counts(self):
        g = make_grid(8)
        assert len(g.all_modes) == 63
        assert g.dealias_bound == 2
        assert g.shape == (5, 5)

    def test_n4_modes(self):
        g = make_grid(4)
        ks = {tuple(k) for k in g.all_modes}
        assert (0, 0) not in ks
        assert {k for kk in ks for k in kk} == {-1, 0, 1, 2}

    @pytest.mark.parametrize("n", [7, 2, 0, 5])
    def test_bad_n(self, n):
        with pytest.raises(GridError):
            make_grid(n)

    def test_bound_too_large(self):
        with pytest.raises(GridError):
            make_grid(8, dealias_bound=5)

    def test_padded_product_grid(self):
        g = make_grid(16)
        assert g.product_size >= 3 * g.K + 1
        assert g.product_size % 2 == 0


class TestNorms:
    def test_single_modes(self, grid8):
        assert norms(DivFreeField.single_mode(grid8, (1, 0))) == pytest.approx((1, 1, 1))
        assert norms(DivFreeField.single_mode(grid8, (2, 1))) == pytest.approx((1, np.sqrt(5), 5))

    def test_poincare_ordering(self, grid16, field_factory):
        for s in range(5):
            h, v, e = norms(field_factory(grid16, s, normalize=None))
            assert h <= v <= e

    def test_inner_products(self, grid16, field_factory):
        u, v = field_factory(grid16, 1), field_factory(grid16, 2)
        assert inner_H(u, u) == pytest.approx(norms(u).h ** 2, rel=1e-12)
        assert inner_V(u, v) == pytest.approx(inner_H(stokes_apply(u), v), rel=1e-12)
        assert inner_H(u, v) == pytest.approx(inner_H(v, u), rel=1e-12)
        assert norms(u).v ** 2 == pytest.approx(inner_H(stokes_apply(u), u), rel=1e-12)

    def test_orthogonal_modes(self, grid8):
        a = DivFreeField.single_mode(grid8, (1, 0))
        b = DivFreeField.single_mode(grid8, (1, 1))
        assert inner_H(a, b) == 0.0

    def test_grid_mismatch(self, grid8, grid16):
        with pytest.raises(GridError):
            inner_H(DivFreeField.zeros(grid8), DivFreeField.zeros(grid16))


class TestStokes:
    def test_eigenvalues(self, grid8):
        e = DivFreeField.single_mode(grid8, (1, 0))
        assert norms(stokes_apply(e) - e).h == 0
        f = DivFreeField.single_mode(grid8, (2, 1))
        assert norms(stokes_apply(f) - 5 * f).h < 1e-15

    def test_inverse(self, grid16, field_factory):
        u = field_factory(grid16)
        assert norms(stokes_inverse(stokes_apply(u)) - u).h < 1e-14


class TestTransforms:
    def test_single_mode_values(self, grid8):
        u = DivFreeField.single_mode(grid8, (1, 0))
        m = grid8.physical_size()
        x1, _ = collocation_points(m)
        ux, uy = to_physical(u)
        # psi_(1,0) = (0, 1) e^{i x1} / (2 pi), real pair with |u|_H = 1
        assert np.max(np.abs(ux)) < 1e-15
        assert np.max(np.abs(uy - np.sqrt(2) / (2 * np.pi) * np.cos(x1))) < 1e-14

    def test_zero_roundtrip(self, grid8):
        ux, uy = to_physical(DivFreeField.zeros(grid8))
        assert not ux.any() and not uy.any()
        assert not to_spectral(ux, uy, grid8).coeffs.any()

    def test_roundtrip(self, grid16, field_factory):
        for s in range(5):
            u = field_factory(grid16, s)
            assert norms(to_spectral(*to_physical(u), grid16) - u).h <= 1e-12

    def test_parseval(self, grid16, field_factory):
        u = field_factory(grid16, normalize=None)
        ux, uy = to_physical(u)
        quad = (ux ** 2 + uy ** 2).mean() * (2 * np.pi) ** 2
        assert quad == pytest.approx(norms(u).h ** 2, rel=1e-10)

    def test_divergence_free(self, grid16, field_factory):
        vh = velocity_hat(field_factory(grid16))
        m = vh.shape[-1]
        k = np.fft.fftfreq(m, 1 / m)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        assert np.max(np.abs(K1 * vh[0] + K2 * vh[1])) < 1e-15


class TestLeray:
    def test_gradient_field_removed(self, grid16):
        m = grid16.physical_size()
        x1, x2 = collocation_points(m)
        # v = grad(sin x1 cos 2 x2)
        vx = np.cos(x1) * np.cos(2 * x2)
        vy = -2 * np.sin(x1) * np.sin(2 * x2)
        vh = np.fft.fft2(np.stack([vx, vy]), norm="forward")
        assert norms(leray_project(vh[0], vh[1], grid16)).h < 1e-12

    def test_identity_on_range(self, grid16, field_factory):
        u = field_factory(grid16)
        vh = velocity_hat(u)
        assert norms(leray_project(vh[0], vh[1], grid16) - u).h < 1e-12 * norms(u).h

    def test_idempotent_and_self_adjoint(self, grid16):
        rng = np.random.default_rng(3)
        m = grid16.physical_size()
        v = [np.fft.fft2(rng.standard_normal((2, m, m)), norm="forward") for _ in range(2)]
        p = [leray_project(x[0], x[1], grid16) for x in v]
        pp = leray_project(*velocity_hat(p[0]), grid16)
        assert norms(pp - p[0]).h < 1e-14
        # <P v, w> = <v, P w>, pairing in physical L2
        def pair(a, b):
            return (2 * np.pi) ** 2 * np.sum(a * np.conj(b)).real
        lhs = pair(velocity_hat(p[0], m), v[1])
        rhs = pair(v[0], velocity_hat(p[1], m))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestConvection:
    def test_shear_mode_vanishes(self, grid8):
        assert norms(nonlinear_B(DivFreeField.single_mode(grid8, (1, 0)))).h < 1e-15

    def test_direct_convolution(self, grid8, field_factory):
        u = field_factory(grid8, 1, normalize=None)
        v = field_factory(grid8, 2, normalize=None)
        assert rel(convect(u, v).coeffs, direct_convection(u, v)) < 1e-10
        assert rel(nonlinear_B(u).coeffs, direct_convection(u, u)) < 1e-10

    def test_direct_convolution_unpadded_differs(self, field_factory):
        # without padding the product aliases back into retained modes
        g = make_grid(8, 3, dealias=False)
        u = field_factory(g, 4, normalize=None, decay=0.5)
        assert rel(nonlinear_B(u).coeffs, direct_convection(u, u)) > 1e-6

    def test_single_mode_triple(self, grid8):
        # u = c (0,1) cos x1, v = c (-1,0) cos x2, w_1 = c/sqrt2 sin(x1+x2), c = sqrt2/(2 pi):
        # b = int c^2 cos x1 sin x2 * c/sqrt2 sin(x1+x2) dx = c^3 pi^2 / sqrt2 = 1/(4 pi)
        u = DivFreeField.single_mode(grid8, (1, 0))
        v = DivFreeField.single_mode(grid8, (0, 1))
        w = DivFreeField.single_mode(grid8, (1, 1), 1j)
        assert trilinear_b(u, v, w) == pytest.approx(1 / (4 * np.pi), rel=1e-12)
        # the real-phase partner is orthogonal
        assert abs(trilinear_b(u, v, DivFreeField.single_mode(grid8, (1, 1)))) < 1e-15

    def test_skew_identities(self, grid16, field_factory):
        for s in range(20):
            u = field_factory(grid16, s)
            w = field_factory(grid16, s, stream=1)
            assert abs(trilinear_b(u, u, u)) <= 1e-10 * norms(u).v * norms(u).h
            assert abs(trilinear_b(u, w, w)) <= 1e-10 * norms(w).v * norms(u).v

    def test_enstrophy_identity(self, grid16, field_factory):
        for s in range(20):
            u = field_factory(grid16, s)
            assert abs(inner_H(nonlinear_B(u), stokes_apply(u))) <= 1e-10 * norms(u).v ** 2 * norms(u).e

    def test_reality_preserved(self, grid16, field_factory):
        B = nonlinear_B(field_factory(grid16))
        assert B.reality_defect() <= 1e-15 * np.abs(B.coeffs).max()


class TestConstraint:
    def test_zero(self, grid8):
        assert not constraint_Q(DivFreeField.zeros(grid8)).coeffs.any()

    def test_single_mode_scaling(self, grid8):
        a = 0.7
        u = DivFreeField.single_mode(grid8, (2, 1), a)
        q = constraint_Q(u)
        assert norms(q - (a ** 2 * 5) * u).h < 1e-15

    def test_lipschitz_ratio(self, grid16, field_factory):
        rng = np.random.default_rng(11)
        worst = 0.0
        for i in range(100):
            u1 = field_factory(grid16, i, 0) * 10 ** rng.uniform(-2, 1)
            u2 = field_factory(grid16, i, 1) * 10 ** rng.uniform(-2, 1)
            num = norms(constraint_Q(u1) - constraint_Q(u2)).h
            worst = max(worst, num / (norms(u1 - u2).v * (norms(u1).v + norms(u2).v) ** 2))
        assert worst <= 1 + 1e-9


class TestTangent:
    def test_projection(self, grid16, field_factory):
        u, v = field_factory(grid16, 1), field_factory(grid16, 2, normalize=3.0)
        p = tangent_project(u, v)
        assert abs(inner_H(p, u)) <= 1e-12 * norms(v).h
        assert norms(tangent_project(u, p) - p).h <= 1e-14 * norms(v).h
        assert norms(tangent_project(u, u)).h < 1e-15

    def test_projected_drift_equilibrium(self, grid8):
        e = DivFreeField.single_mode(grid8, (0, 1))
        assert norms(projected_drift(e, DivFreeField.zeros(grid8))).h < 1e-15

    def test_projected_drift_matches_projection(self, grid16, field_factory):
        for s in range(20):
            u = field_factory(grid16, s)
            f = field_factory(grid16, s, stream=2)
            lhs = projected_drift(u, tangent_project(u, f))
            rhs = tangent_project(u, stokes_apply(u) + nonlinear_B(u) - f)
            assert norms(lhs - rhs).h <= 1e-10 * norms(rhs).h
            assert abs(inner_H(lhs, u)) <= 1e-10 * norms(lhs).h


class TestFieldIO:
    def test_csv_roundtrip(self, tmp_path, grid16, field_factory):
        u = field_factory(grid16)
        write_field_csv(u, tmp_path / "u.csv")
        v = read_field_csv(tmp_path / "u.csv", grid16)
        assert np.array_equal(u.coeffs, v.coeffs)
        assert read_field_csv(tmp_path / "u.csv").grid.K == grid16.K

    def test_reality_violation(self, tmp_path, grid8):
        u = DivFreeField.single_mode(grid8, (1, 0))
        write_field_csv(u, tmp_path / "u.csv")
        lines = (tmp_path / "u.csv").read_text().splitlines()
        # corrupt the first data row
        k1, k2, re, im = lines[1].split(",")
        lines[1] = ",".join([k1, k2, "0.25", im])
        (tmp_path / "u.csv").write_text("\n".join(lines) + "\n")
        with pytest.raises(RealityError):
            read_field_csv(tmp_path / "u.csv", grid8)

    def test_transfer(self, grid8, grid16, field_factory):
        u = field_factory(grid8)
        back = transfer(transfer(u, grid16), grid8)
        assert np.array_equal(back.coeffs, u.coeffs)


class TestProperties:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31), st.floats(-3, 3), st.floats(-3, 3))
    def test_convection_bilinear(self, seed, a, b):
        from cns2d import RandomFieldSpec, random_field
        g = make_grid(8)
        u, v, w = (random_field(RandomFieldSpec(seed), g, stream=s) for s in range(3))
        lhs = convect(u, a * v + b * w)
        rhs = a * convect(u, v) + b * convect(u, w)
        assert norms(lhs - rhs).h <= 1e-12 * (1 + norms(lhs).h)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_symmetrize_makes_real(self, seed):
        g = make_grid(8)
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        u = DivFreeField(g, symmetrize(a))
        assert u.reality_defect() < 1e-15
        ux, uy = to_physical(u)
        assert np.isrealobj(ux)
