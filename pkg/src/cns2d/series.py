"""Time-sampled sequences of divergence-free fields."""

from __future__ import annotations

import numpy as np

from .errors import InputError
from .spectral import DivFreeField, GridError, WaveGrid

_TIME_SLACK = 1e-9


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros(len(times))
    if len(times) > 1:
        d = np.diff(times)
        w[:-1] += d / 2
        w[1:] += d / 2
    return w


class FieldSeries:
    """Fields sampled on increasing times, stored as one ``(nt, 2K+1, 2K+1)`` array."""

    def __init__(self, grid: WaveGrid, times, coeffs):
        times = np.array(times, dtype=float)
        coeffs = np.array(coeffs, dtype=complex)
        if times.ndim != 1 or len(times) == 0:
            raise InputError("times must be a non-empty 1-d sequence")
        if np.any(np.diff(times) <= 0):
            raise InputError("times must be strictly increasing")
        if coeffs.shape != (len(times),) + grid.shape:
            raise GridError(f"coefficients of shape {coeffs.shape} do not match "
                            f"{len(times)} samples on grid {grid.shape}")
        coeffs[:, grid.K, grid.K] = 0.0
        times.flags.writeable = False
        coeffs.flags.writeable = False
        self.grid = grid
        self.times = times
        self.coeffs = coeffs

    @classmethod
    def from_fields(cls, times, fields, **kw):
        fields = list(fields)
        return cls(fields[0].grid, times, np.stack([f.coeffs for f in fields]), **kw)

    def _like(self, coeffs):
        return type(self)(self.grid, self.times, coeffs, **self._extra())

    def _extra(self) -> dict:
        return {}

    def __len__(self) -> int:
        return len(self.times)

    def __getitem__(self, i) -> DivFreeField:
        return DivFreeField(self.grid, self.coeffs[i])

    @property
    def fields(self) -> list[DivFreeField]:
        return [self[i] for i in range(len(self))]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def spacing(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self) > 1 else 0.0

    def _check_compatible(self, other: "FieldSeries"):
        if other.grid != self.grid:
            raise GridError("series live on different grids")
        if len(other.times) != len(self.times) or not np.allclose(other.times, self.times,
                                                                   rtol=0, atol=1e-12):
            raise InputError("series are sampled on different times")

    def __add__(self, other):
        self._check_compatible(other)
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return self._like(self.coeffs - other.coeffs)

    def __mul__(self, s: float):
        return self._like(s * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.coeffs)

    def at(self, t: float) -> np.ndarray:
        """Coefficients at time ``t`` by linear interpolation between samples."""
        t0, t1 = self.times[0], self.times[-1]
        slack = _TIME_SLACK * max(1.0, abs(t1))
        if t < t0 - slack or t > t1 + slack:
            raise InputError(f"time {t} outside sampled range [{t0}, {t1}]")
        if len(self) == 1:
            return self.coeffs[0]
        x = (t - t0) / self.spacing
        i = int(np.clip(np.floor(x + 1e-9), 0, len(self) - 1))
        frac = x - i
        if i >= len(self) - 1 or abs(frac) < 1e-9:
            return self.coeffs[min(i, len(self) - 1)]
        return (1 - frac) * self.coeffs[i] + frac * self.coeffs[i + 1]

    # -- time-integrated quantities ------------------------------------------
    def quad_weights(self) -> np.ndarray:
        return trapezoid_weights(self.times)

    def norm_series(self, kind: str = "H") -> np.ndarray:
        p = np.abs(self.coeffs) ** 2
        power = {"H": 0, "V": 1, "E": 2}[kind]
        return np.sqrt(np.sum(self.grid.ksq ** power * p, axis=(1, 2)))

    def inner_series(self, other: "FieldSeries", kind: str = "H") -> np.ndarray:
        self._check_compatible(other)
        power = {"H": 0, "V": 1, "E": 2}[kind]
        w = self.grid.ksq ** power
        return np.sum(w * self.coeffs * np.conj(other.coeffs), axis=(1, 2)).real

    def l2_inner(self, other: "FieldSeries", kind: str = "H") -> float:
        """Trapezoid approximation of ``int_0^T <self, other>_kind dt``."""
        return float(self.quad_weights() @ self.inner_series(other, kind))

    def l2_norm(self, kind: str = "H") -> float:
        return float(np.sqrt(self.quad_weights() @ self.norm_series(kind) ** 2))

    def sup_norm(self, kind: str = "V") -> float:
        return float(np.max(self.norm_series(kind)))


class ControlTrajectory(FieldSeries):
    """Control ``U(t)``, piecewise linear between samples.

    ``v_bound`` is the radius of the admissible V-ball.
    """

    def __init__(self, grid: WaveGrid, times, coeffs, v_bound: float = 10.0):
        super().__init__(grid, times, coeffs)
        if not v_bound > 0:
            raise InputError("v_bound must be positive")
        self.v_bound = float(v_bound)

    def _extra(self) -> dict:
        return {"v_bound": self.v_bound}

    @classmethod
    def zeros(cls, grid: WaveGrid, times, v_bound: float = 10.0) -> "ControlTrajectory":
        return cls(grid, times, np.zeros((len(times),) + grid.shape, dtype=complex), v_bound)

    @classmethod
    def constant(cls, field: DivFreeField, times, v_bound: float = 10.0) -> "ControlTrajectory":
        c = np.broadcast_to(field.coeffs, (len(times),) + field.grid.shape)
        return cls(field.grid, times, c, v_bound)
