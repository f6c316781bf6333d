"""Divergence-free Fourier fields on the 2π-periodic torus.

A field is stored as one complex amplitude per wavevector ``k = (k1, k2)``
along the divergence-free eigenbasis

    psi_k(x) = (k_perp / |k|) exp(i k.x) / (2 pi),    k_perp = (-k2, k1),

which is orthonormal in L2 and diagonalises the Stokes operator
(``A psi_k = |k|^2 psi_k``).  Amplitudes live in a centred square array of
shape ``(2K+1, 2K+1)`` indexed by ``k + K`` where ``K`` is the grid's
``dealias_bound``; the centre (zero mode) is always zero.

Quadratic terms are evaluated pseudo-spectrally on a zero-padded
collocation grid of size ``M >= 3K + 1`` so that products of retained modes
are alias-free (the 2/3 rule).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, InputError

TWO_PI = 2.0 * np.pi


class GridError(ConfigError):
    """Invalid grid configuration or mismatched grids."""


class RealityError(InputError):
    """Coefficients violate a_{-k} = -conj(a_k)."""


@dataclass(frozen=True)
class WaveGrid:
    """Square torus of side 2π sampled with ``n`` points per dimension.

    Parameters
    ----------
    n : int
        Collocation points per dimension (even, >= 4).
    dealias_bound : int
        Largest retained ``|k|_inf``.  Defaults to ``n // 3``.
    dealias : bool
        If False, quadratic products are formed on the unpadded ``n`` grid
        and therefore alias.  Only useful to demonstrate why padding is on.
    """

    n: int
    dealias_bound: int
    dealias: bool = True

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 4 or self.n % 2:
            raise GridError(f"n must be an even integer >= 4, got {self.n!r}")
        K = self.dealias_bound
        if K < 1 or K > self.n // 2:
            raise GridError(f"dealias_bound must lie in [1, n/2], got {K}")
        if not self.dealias and 2 * K >= self.n:
            raise GridError("without padding dealias_bound must be < n/2")

    # -- mode bookkeeping -------------------------------------------------
    @property
    def K(self) -> int:
        return self.dealias_bound

    @property
    def shape(self) -> tuple[int, int]:
        return (2 * self.K + 1, 2 * self.K + 1)

    @cached_property
    def all_modes(self) -> np.ndarray:
        """Every nonzero wavevector resolved by ``n`` points, ``(n*n - 1, 2)``."""
        r = np.arange(-self.n // 2 + 1, self.n // 2 + 1)
        k1, k2 = np.meshgrid(r, r, indexing="ij")
        k = np.stack([k1.ravel(), k2.ravel()], axis=1)
        return k[np.any(k != 0, axis=1)]

    @cached_property
    def modes(self) -> np.ndarray:
        """Retained wavevectors (``|k|_inf <= K``, k != 0), lexicographic."""
        r = np.arange(-self.K, self.K + 1)
        k1, k2 = np.meshgrid(r, r, indexing="ij")
        k = np.stack([k1.ravel(), k2.ravel()], axis=1)
        return k[np.any(k != 0, axis=1)]

    @cached_property
    def k1(self) -> np.ndarray:
        r = np.arange(-self.K, self.K + 1, dtype=float)
        return np.broadcast_to(r[:, None], self.shape).copy()

    @cached_property
    def k2(self) -> np.ndarray:
        r = np.arange(-self.K, self.K + 1, dtype=float)
        return np.broadcast_to(r[None, :], self.shape).copy()

    @cached_property
    def ksq(self) -> np.ndarray:
        """``|k|^2`` with the zero mode set to 0."""
        return self.k1 ** 2 + self.k2 ** 2

    @cached_property
    def mask(self) -> np.ndarray:
        return self.ksq > 0

    @cached_property
    def inv_ksq(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.mask] = 1.0 / self.ksq[self.mask]
        return out

    @cached_property
    def e1(self) -> np.ndarray:
        """First component of the unit direction ``k_perp / |k|``."""
        out = np.zeros(self.shape)
        out[self.mask] = -self.k2[self.mask] / np.sqrt(self.ksq[self.mask])
        return out

    @cached_property
    def e2(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.mask] = self.k1[self.mask] / np.sqrt(self.ksq[self.mask])
        return out

    @cached_property
    def product_size(self) -> int:
        """Collocation size used for quadratic products."""
        if not self.dealias:
            return self.n
        m = max(self.n, 3 * self.K + 1)
        return m + (m % 2)

    def physical_size(self) -> int:
        """Smallest collocation size that represents every retained mode."""
        return self.n if 2 * self.K < self.n else self.product_size

    def _fft_index(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        r = np.arange(-self.K, self.K + 1) % m
        return np.ix_(r, r)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=complex)

    def mode_index(self, k) -> tuple[int, int]:
        k1, k2 = int(k[0]), int(k[1])
        if max(abs(k1), abs(k2)) > self.K or (k1 == 0 and k2 == 0):
            raise GridError(f"mode {k} is not retained on this grid")
        return k1 + self.K, k2 + self.K


def make_grid(n: int, dealias_bound: int | None = None, dealias: bool = True) -> WaveGrid:
    """Build a :class:`WaveGrid`; ``dealias_bound`` defaults to ``n // 3``."""
    if not isinstance(n, (int, np.integer)) or n < 4 or n % 2:
        raise GridError(f"n must be an even integer >= 4, got {n!r}")
    if dealias_bound is None:
        dealias_bound = n // 3 if dealias else n // 2 - 1
    return WaveGrid(int(n), int(dealias_bound), dealias)


# ---------------------------------------------------------------------------
# field value type
# ---------------------------------------------------------------------------

def symmetrize(a: np.ndarray) -> np.ndarray:
    """Project an amplitude array onto the reality-consistent subspace."""
    out = 0.5 * (a - np.conj(a[::-1, ::-1]))
    K = a.shape[0] // 2
    out[K, K] = 0.0
    return out


@dataclass(frozen=True, eq=False)
class DivFreeField:
    """Real, mean-zero, divergence-free vector field (immutable)."""

    grid: WaveGrid
    coeffs: np.ndarray

    def __post_init__(self):
        a = np.array(self.coeffs, dtype=complex)
        if a.shape != self.grid.shape:
            raise GridError(f"coefficient shape {a.shape} does not match grid {self.grid.shape}")
        a[self.grid.K, self.grid.K] = 0.0
        a.flags.writeable = False
        object.__setattr__(self, "coeffs", a)

    @classmethod
    def zeros(cls, grid: WaveGrid) -> "DivFreeField":
        return cls(grid, grid.zeros())

    @classmethod
    def single_mode(cls, grid: WaveGrid, k, amplitude: complex = 1.0) -> "DivFreeField":
        """Real field along the pair ``{k, -k}`` with ``|u|_H = |amplitude|``.

        ``a_k = amplitude / sqrt(2)`` and ``a_{-k} = -conj(a_k)``.
        """
        a = grid.zeros()
        c = complex(amplitude) / np.sqrt(2.0)
        a[grid.mode_index(k)] = c
        a[grid.mode_index((-k[0], -k[1]))] = -np.conj(c)
        return cls(grid, a)

    def __add__(self, other: "DivFreeField") -> "DivFreeField":
        _check_same(self, other)
        return DivFreeField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "DivFreeField") -> "DivFreeField":
        _check_same(self, other)
        return DivFreeField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "DivFreeField":
        return DivFreeField(self.grid, -self.coeffs)

    def __mul__(self, s: float) -> "DivFreeField":
        return DivFreeField(self.grid, s * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, s: float) -> "DivFreeField":
        return DivFreeField(self.grid, self.coeffs / s)

    def amplitude(self, k) -> complex:
        return complex(self.coeffs[self.grid.mode_index(k)])

    def reality_defect(self) -> float:
        """``max |a_k + conj(a_{-k})|``; zero for a real field."""
        a = self.coeffs
        return float(np.max(np.abs(a + np.conj(a[::-1, ::-1]))))


def _check_same(u: DivFreeField, v: DivFreeField):
    if u.grid != v.grid:
        raise GridError("fields live on different grids")


class NormTriple(NamedTuple):
    h: float
    v: float
    e: float


# ---------------------------------------------------------------------------
# diagonal operators and inner products
# ---------------------------------------------------------------------------

def norms(u: DivFreeField) -> NormTriple:
    """H, V and E norms: ``|u|``, ``|grad u|`` and ``|Au|``."""
    p = np.abs(u.coeffs) ** 2
    ksq = u.grid.ksq
    return NormTriple(float(np.sqrt(p.sum())), float(np.sqrt((ksq * p).sum())),
                      float(np.sqrt((ksq ** 2 * p).sum())))


def _inner(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.vdot(b, a).real)


def inner_H(u: DivFreeField, v: DivFreeField) -> float:
    _check_same(u, v)
    return _inner(u.coeffs, v.coeffs)


def inner_V(u: DivFreeField, v: DivFreeField) -> float:
    _check_same(u, v)
    return _inner(u.grid.ksq * u.coeffs, v.coeffs)


def stokes_apply(u: DivFreeField) -> DivFreeField:
    return DivFreeField(u.grid, u.grid.ksq * u.coeffs)


def stokes_inverse(u: DivFreeField) -> DivFreeField:
    """``A^{-1} u``; also the Riesz map taking an H-pairing to its V representative."""
    return DivFreeField(u.grid, u.grid.inv_ksq * u.coeffs)


def constraint_Q(u: DivFreeField) -> DivFreeField:
    """``|grad u|^2 u`` with the global (not pointwise) squared V-norm."""
    return u * norms(u).v ** 2


def tangent_project(u: DivFreeField, v: DivFreeField) -> DivFreeField:
    """``v - <v, u>_H u``: projection onto the tangent space of the unit sphere at u."""
    _check_same(u, v)
    return v - inner_H(v, u) * u


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def velocity_hat(u: DivFreeField, m: int | None = None) -> np.ndarray:
    """Velocity Fourier coefficients in FFT layout, shape ``(2, m, m)``.

    The physical field is ``u(x_j) = sum_k vhat[:, k] exp(i k.x_j)``.
    """
    grid = u.grid
    m = grid.physical_size() if m is None else m
    if m <= 2 * grid.K:
        raise GridError(f"collocation size {m} cannot hold |k| <= {grid.K}")
    out = np.zeros((2, m, m), dtype=complex)
    idx = grid._fft_index(m)
    out[0][idx] = grid.e1 * u.coeffs / TWO_PI
    out[1][idx] = grid.e2 * u.coeffs / TWO_PI
    return out


def leray_project(vx: np.ndarray, vy: np.ndarray, grid: WaveGrid) -> DivFreeField:
    """Divergence-free part of a vector field given by its Fourier coefficients.

    ``vx``, ``vy`` are square arrays in FFT layout with the convention of
    ``np.fft.fft2(v, norm="forward")``.  Modes beyond the grid's
    ``dealias_bound`` and the zero mode are discarded.
    """
    vx = np.asarray(vx)
    vy = np.asarray(vy)
    m = vx.shape[0]
    if vx.shape != (m, m) or vy.shape != (m, m):
        raise GridError("leray_project expects two square Fourier arrays")
    if m <= 2 * grid.K:
        raise GridError(f"Fourier array of size {m} cannot hold |k| <= {grid.K}")
    idx = grid._fft_index(m)
    a = TWO_PI * (grid.e1 * vx[idx] + grid.e2 * vy[idx])
    return DivFreeField(grid, symmetrize(a))


def to_physical(u: DivFreeField, m: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Velocity components on the collocation points ``x_j = 2 pi j / m``."""
    uh = velocity_hat(u, m)
    phys = np.fft.ifft2(uh, norm="forward").real
    return phys[0], phys[1]


def to_spectral(ux: np.ndarray, uy: np.ndarray, grid: WaveGrid) -> DivFreeField:
    """Inverse of :func:`to_physical` (Leray-projects whatever it is given)."""
    vh = np.fft.fft2(np.stack([ux, uy]), norm="forward")
    return leray_project(vh[0], vh[1], grid)


def collocation_points(m: int) -> tuple[np.ndarray, np.ndarray]:
    x = TWO_PI * np.arange(m) / m
    return np.meshgrid(x, x, indexing="ij")


# ---------------------------------------------------------------------------
# quadratic terms (array kernels; reused by the time steppers)
# ---------------------------------------------------------------------------

def _phys_with_grad(grid: WaveGrid, a: np.ndarray, m: int) -> np.ndarray:
    """Stack ``[u1, u2, d1u1, d2u1, d1u2, d2u2]`` on an ``m x m`` grid."""
    idx = grid._fft_index(m)
    u1 = grid.e1 * a / TWO_PI
    u2 = grid.e2 * a / TWO_PI
    ik1 = 1j * grid.k1
    ik2 = 1j * grid.k2
    spec = np.zeros((6, m, m), dtype=complex)
    for s, c in enumerate((u1, u2, ik1 * u1, ik2 * u1, ik1 * u2, ik2 * u2)):
        spec[s][idx] = c
    return np.fft.ifft2(spec, norm="forward").real


def _project_products(grid: WaveGrid, n1: np.ndarray, n2: np.ndarray) -> np.ndarray:
    vh = np.fft.fft2(np.stack([n1, n2]), norm="forward")
    idx = grid._fft_index(vh.shape[-1])
    return symmetrize(TWO_PI * (grid.e1 * vh[0][idx] + grid.e2 * vh[1][idx]))


def convect_coeffs(grid: WaveGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Leray-projected ``(u . grad) v`` for amplitude arrays ``a`` (u), ``b`` (v)."""
    m = grid.product_size
    pu = _phys_with_grad(grid, a, m)
    pv = pu if b is a else _phys_with_grad(grid, b, m)
    n1 = pu[0] * pv[2] + pu[1] * pv[3]
    n2 = pu[0] * pv[4] + pu[1] * pv[5]
    return _project_products(grid, n1, n2)


def phys_with_grad(grid: WaveGrid, a: np.ndarray) -> np.ndarray:
    """Velocity and its gradient on the product grid (cache for a frozen state)."""
    return _phys_with_grad(grid, a, grid.product_size)


def bprime_coeffs(grid: WaveGrid, a: np.ndarray, w: np.ndarray, pu=None) -> np.ndarray:
    """Leray-projected ``(u . grad) w + (w . grad) u``.

    ``pu`` optionally supplies ``phys_with_grad(grid, a)``.
    """
    m = grid.product_size
    if pu is None:
        pu = _phys_with_grad(grid, a, m)
    pw = _phys_with_grad(grid, w, m)
    n1 = pu[0] * pw[2] + pu[1] * pw[3] + pw[0] * pu[2] + pw[1] * pu[3]
    n2 = pu[0] * pw[4] + pu[1] * pw[5] + pw[0] * pu[4] + pw[1] * pu[5]
    return _project_products(grid, n1, n2)


def bprime_adjoint_coeffs(grid: WaveGrid, a: np.ndarray, lam: np.ndarray, pu=None) -> np.ndarray:
    """Leray-projected ``-(u . grad) lam + (grad u)^T lam``.

    Component i of ``(grad u)^T lam`` is ``sum_j lam_j d_i u_j``.
    """
    m = grid.product_size
    if pu is None:
        pu = _phys_with_grad(grid, a, m)
    pl = _phys_with_grad(grid, lam, m)
    n1 = -(pu[0] * pl[2] + pu[1] * pl[3]) + pl[0] * pu[2] + pl[1] * pu[4]
    n2 = -(pu[0] * pl[4] + pu[1] * pl[5]) + pl[0] * pu[3] + pl[1] * pu[5]
    return _project_products(grid, n1, n2)


def convect(u: DivFreeField, v: DivFreeField) -> DivFreeField:
    """Two-argument convection ``B(u, v) = P[(u . grad) v]``."""
    _check_same(u, v)
    return DivFreeField(u.grid, convect_coeffs(u.grid, u.coeffs, v.coeffs))


def nonlinear_B(u: DivFreeField) -> DivFreeField:
    """``B(u) = P[(u . grad) u]``, dealiased."""
    return DivFreeField(u.grid, convect_coeffs(u.grid, u.coeffs, u.coeffs))


def trilinear_b(u: DivFreeField, v: DivFreeField, w: DivFreeField) -> float:
    """``b(u, v, w) = sum_ij int u_i (d_i v_j) w_j dx``."""
    _check_same(u, w)
    return inner_H(convect(u, v), w)


def projected_drift(u: DivFreeField, f: DivFreeField) -> DivFreeField:
    """``Au - |grad u|^2 u + B(u) - f``."""
    return stokes_apply(u) - constraint_Q(u) + nonlinear_B(u) - f


# ---------------------------------------------------------------------------
# grid transfer
# ---------------------------------------------------------------------------

def transfer(u: DivFreeField, grid: WaveGrid) -> DivFreeField:
    """Copy shared modes of ``u`` onto ``grid`` (zero-fill or truncate)."""
    a = grid.zeros()
    K = min(grid.K, u.grid.K)
    a[grid.K - K:grid.K + K + 1, grid.K - K:grid.K + K + 1] = \
        u.coeffs[u.grid.K - K:u.grid.K + K + 1, u.grid.K - K:u.grid.K + K + 1]
    return DivFreeField(grid, a)


# ---------------------------------------------------------------------------
# snapshot CSV
# ---------------------------------------------------------------------------

def write_field_csv(u: DivFreeField, path) -> None:
    """Write ``kx,ky,re,im``, one row per retained mode in lexicographic order."""
    K = u.grid.K
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["kx", "ky", "re", "im"])
        for k1, k2 in u.grid.modes:
            c = u.coeffs[k1 + K, k2 + K]
            w.writerow([int(k1), int(k2), repr(float(c.real)), repr(float(c.imag))])


def read_field_csv(path, grid: WaveGrid | None = None, tol: float = 1e-12) -> DivFreeField:
    """Read a snapshot written by :func:`write_field_csv`.

    Without ``grid`` the smallest padded grid holding the listed modes is used.
    Raises :class:`RealityError` if ``a_{-k} != -conj(a_k)`` beyond ``tol``
    relative to the field scale.
    """
    rows = []
    with open(Path(path), newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["kx", "ky", "re", "im"]:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        for r in reader:
            rows.append((int(r["kx"]), int(r["ky"]), complex(float(r["re"]), float(r["im"]))))
    if grid is None:
        K = max(max(abs(k1), abs(k2)) for k1, k2, _ in rows)
        n = 3 * K + 1
        grid = make_grid(n + n % 2, K)
    a = grid.zeros()
    for k1, k2, c in rows:
        a[grid.mode_index((k1, k2))] = c
    defect = np.max(np.abs(a + np.conj(a[::-1, ::-1])))
    scale = max(np.max(np.abs(a)), 1e-300)
    if defect > tol * scale:
        raise RealityError(f"reality invariant violated by {defect:.3e}")
    return DivFreeField(grid, a)
