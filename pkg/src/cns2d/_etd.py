"""Fourth-order exponential time differencing (Cox & Matthews ETDRK4).

The stiff part ``L`` is diagonal, so every coefficient is an array of the
same shape as the state.  Coefficients are evaluated by contour averages
(Kassam & Trefethen) to avoid cancellation for small ``|L dt|``.
"""

import numpy as np

_CONTOUR_POINTS = 32


class ETDRK4:
    """One-step map ``u' = L u + N(u, t)`` for diagonal ``L``."""

    def __init__(self, L: np.ndarray, dt: float):
        self.dt = dt
        z = L * dt
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2)
        r = np.exp(1j * np.pi * (np.arange(_CONTOUR_POINTS) + 0.5) / _CONTOUR_POINTS)
        lr = z[..., None] + r
        elr = np.exp(lr)
        self.Q = dt * ((np.exp(lr / 2) - 1) / lr).mean(-1).real
        self.f1 = dt * ((-4 - lr + elr * (4 - 3 * lr + lr ** 2)) / lr ** 3).mean(-1).real
        self.f2 = dt * ((2 + lr + elr * (lr - 2)) / lr ** 3).mean(-1).real
        self.f3 = dt * ((-4 - 3 * lr - lr ** 2 + elr * (4 - lr)) / lr ** 3).mean(-1).real

    def step(self, u, N, stages):
        """Advance ``u`` by one step.

        ``N(u, s)`` evaluates the non-stiff part at stage ``s`` where
        ``stages = (start, middle, end)`` are opaque labels (times or
        snapshot positions) passed through unchanged.
        """
        s0, sm, s1 = stages
        Nu = N(u, s0)
        a = self.E2 * u + self.Q * Nu
        Na = N(a, sm)
        b = self.E2 * u + self.Q * Na
        Nb = N(b, sm)
        c = self.E2 * a + self.Q * (2 * Nb - Nu)
        Nc = N(c, s1)
        return self.E * u + self.f1 * Nu + 2 * self.f2 * (Na + Nb) + self.f3 * Nc
