"""Shared constructors for test fields."""

import numpy as np

from mongeplate.grid import GridDomain, ScalarField


def random_smooth(dom: GridDomain, rng, modes: int = 3, amplitude: float = 0.02) -> ScalarField:
    """Low-frequency trigonometric field with random coefficients (not vanishing on the boundary)."""
    X, Y = dom.coordinates()
    x, y = X / dom.extent_x, Y / dom.extent_y
    out = np.zeros(dom.shape)
    for p in range(1, modes + 1):
        for q in range(1, modes + 1):
            a, b, c = rng.uniform(-1, 1, 3)
            out += a / (p * q) ** 2 * np.sin(p * np.pi * x + b) * np.cos(q * np.pi * y + c)
    return ScalarField(dom, amplitude * out)


def half_norm(dom: GridDomain, scale: float = 0.5) -> ScalarField:
    return dom.sample(lambda x, y: scale * (x**2 + y**2))
