"""Right-hand sides and exact solutions used by the benchmark runs."""

import numpy as np


def sin3_derivative(n, t):
    """``d^n/dt^n sin^3(pi t)`` via ``sin^3 a = (3 sin a - sin 3a) / 4``."""
    s = n * np.pi / 2
    return (3 * np.pi**n * np.sin(np.pi * t + s)
            - (3 * np.pi) ** n * np.sin(3 * np.pi * t + s)) / 4


class SmoothSquareSolution:
    """``phi = sin^3(pi x) sin^3(pi y)`` with ``u = curl phi`` on the unit square."""

    @staticmethod
    def _S(n, t):
        return sin3_derivative(n, t)

    def phi(self, p):
        return self._S(0, p[..., 0]) * self._S(0, p[..., 1])

    def u(self, p):
        x, y = p[..., 0], p[..., 1]
        return np.stack([self._S(0, x) * self._S(1, y), -self._S(1, x) * self._S(0, y)], axis=-1)

    def xi(self, p):
        """``curl u = -Laplace phi``."""
        x, y = p[..., 0], p[..., 1]
        S = self._S
        return -(S(2, x) * S(0, y) + S(0, x) * S(2, y))

    def grad_xi(self, p):
        x, y = p[..., 0], p[..., 1]
        S = self._S
        return -np.stack([S(3, x) * S(0, y) + S(1, x) * S(2, y),
                          S(2, x) * S(1, y) + S(0, x) * S(3, y)], axis=-1)

    def f(self, p):
        """``curl`` of the bilaplacian of ``phi``."""
        x, y = p[..., 0], p[..., 1]
        S = self._S
        f1 = S(4, x) * S(1, y) + 2 * S(2, x) * S(3, y) + S(0, x) * S(5, y)
        f2 = -(S(5, x) * S(0, y) + 2 * S(3, x) * S(2, y) + S(1, x) * S(4, y))
        return np.stack([f1, f2], axis=-1)

    __call__ = f


def piecewise_rhs(p):
    """Radially piecewise constant load, discontinuous at ``|x| = 2^-1/2`` and ``1``."""
    r = np.hypot(p[..., 0], p[..., 1])
    f1 = np.where(r < 2**-0.5, 0.25, np.where(r < 1.0, 0.5, 1.0))
    f2 = np.where(r < 2**-0.5, 1.25, np.where(r < 1.0, 1.5, 2.0))
    return np.stack([f1, f2], axis=-1)


def smooth_rhs(p):
    x1, x2 = p[..., 0], p[..., 1]
    f1 = (x1**2 + 1) * np.sin(x1) + x1 * x2**3 + 2
    f2 = (x2**2 + 1) * np.cos(x1) + x1**3 * x2**2 - 1
    return np.stack([f1, f2], axis=-1)


RHS = {
    "smooth_square": SmoothSquareSolution(),
    "piecewise": piecewise_rhs,
    "smooth": smooth_rhs,
}


def get_rhs(name):
    try:
        return RHS[name]
    except KeyError:
        raise KeyError(f"unknown right-hand side {name!r}; choose from {sorted(RHS)}") from None
