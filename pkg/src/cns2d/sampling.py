"""Deterministic random fields.

Every mode draws its phase from a generator seeded by ``(seed, k1, k2)``,
so a field generated on a finer grid agrees with the coarse one on all
shared modes (before normalisation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .series import ControlTrajectory
from .spectral import DivFreeField, WaveGrid, norms

_OFFSET = 1 << 20


@dataclass(frozen=True)
class RandomFieldSpec:
    seed: int = 0
    decay: float = 3.0
    normalize: float | None = 1.0


def _phase(seed: int, k1: int, k2: int, stream: int) -> float:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, k1 + _OFFSET, k2 + _OFFSET, stream])
    return float(np.random.default_rng(ss).uniform(0.0, 2 * np.pi))


def random_field(spec: RandomFieldSpec, grid: WaveGrid, stream: int = 0) -> DivFreeField:
    """Field with ``|a_k| = |k|^-decay`` and seeded phases, optionally normalised in H.

    ``stream`` selects an independent family for the same seed.
    """
    a = grid.zeros()
    K = grid.K
    for k1, k2 in grid.modes:
        # canonical half-plane; the partner follows from a_{-k} = -conj(a_k)
        if k1 < 0 or (k1 == 0 and k2 < 0):
            continue
        c = (k1 * k1 + k2 * k2) ** (-spec.decay / 2) * np.exp(1j * _phase(spec.seed, k1, k2, stream))
        a[k1 + K, k2 + K] = c
        a[K - k1, K - k2] = -np.conj(c)
    u = DivFreeField(grid, a)
    if spec.normalize is not None:
        u = u * (spec.normalize / norms(u).h)
    return u


def random_fields(seed: int, grid: WaveGrid, count: int, decay: float = 3.0,
                  normalize: float | None = 1.0) -> list[DivFreeField]:
    """``count`` independent fields (streams 0..count-1) for one seed."""
    spec = RandomFieldSpec(seed, decay, normalize)
    return [random_field(spec, grid, stream=s) for s in range(count)]


def random_control(seed: int, grid: WaveGrid, times, scale: float = 1.0, decay: float = 3.0,
                   v_bound: float = 10.0, modes: int = 3,
                   envelope: str = "none") -> ControlTrajectory:
    """Smooth-in-time control: a few random fields with slow sinusoidal profiles.

    Component ``j`` is ``cos((j + 1) t + j)`` times a field of V-norm ``scale``.
    ``envelope="bump"`` multiplies by ``sin^2(pi t / T)`` so the control and
    its time derivative vanish at both ends.
    """
    if envelope not in ("none", "bump"):
        raise ValueError(f"unknown envelope {envelope!r}")
    times = np.asarray(times, float)
    fields = random_fields(seed, grid, modes, decay, normalize=None)
    c = np.zeros((len(times),) + grid.shape, dtype=complex)
    for j, f in enumerate(fields):
        f = f * (scale / norms(f).v)
        profile = np.cos((j + 1) * times + j)
        c += profile[:, None, None] * f.coeffs
    if envelope == "bump" and len(times) > 1:
        span = times[-1] - times[0]
        c *= (np.sin(np.pi * (times - times[0]) / span) ** 2)[:, None, None]
    return ControlTrajectory(grid, times, c, v_bound)
