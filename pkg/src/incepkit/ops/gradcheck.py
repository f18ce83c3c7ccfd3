from __future__ import annotations

import numpy as np


def finite_difference_gradient(f, x, h=1e-5, indices=None):
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h``.

    ``x`` is perturbed in place and restored. When ``indices`` (flat) is given
    only those coordinates are evaluated; the rest stay zero.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    coords = range(flat.size) if indices is None else indices
    for i in coords:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-6):
    """Max-norm relative error ``|a - n|_inf / max(|a|_inf, |n|_inf, floor)``."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    diff = np.max(np.abs(analytic - numeric), initial=0.0)
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), floor)
    return float(diff / scale)
