"""Central finite-difference verification of analytic gradients.

All checks run at 64-bit regardless of the model's storage precision.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_EPSILON = 1e-4


def finite_diff_check(
    loss_fn: Callable[[dict[str, np.ndarray]], float],
    grad_fn: Callable[[dict[str, np.ndarray]], dict[str, np.ndarray]],
    inputs: dict[str, np.ndarray],
    epsilon: float = DEFAULT_EPSILON,
) -> float:
    """Max relative error between analytic gradients and central differences.

    ``loss_fn`` maps the input dict to a scalar; ``grad_fn`` returns the
    analytic gradient for every key.  The relative error per coordinate is
    |analytic - numeric| / max(1, |analytic|, |numeric|), so near-zero
    gradients are compared absolutely.
    """
    inputs = {k: np.asarray(v, dtype=np.float64) for k, v in inputs.items()}
    analytic = grad_fn(inputs)
    worst = 0.0
    for name, value in inputs.items():
        grad_a = np.asarray(analytic[name], dtype=np.float64)
        if grad_a.shape != value.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        flat = value.reshape(-1)
        ga = grad_a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            up = loss_fn(inputs)
            flat[i] = orig - epsilon
            down = loss_fn(inputs)
            flat[i] = orig
            numeric = (up - down) / (2.0 * epsilon)
            err = abs(ga[i] - numeric) / max(1.0, abs(ga[i]), abs(numeric))
            worst = max(worst, err)
    return worst
