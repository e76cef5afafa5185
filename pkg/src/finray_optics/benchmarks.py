"""Standard test functions (minimisation form) for validating the optimiser."""

import numpy as np


def sphere(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.dot(x, x))


def rosenbrock(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def negated(f):
    """Wrap a minimisation benchmark for the maximising optimiser."""
    def g(x):
        return -f(x)
    g.__name__ = f"neg_{f.__name__}"
    return g
