"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from . import tensor as tn


def numeric_grad(f, tensor, h=1e-5, rows=None) -> np.ndarray:
    """d f() / d tensor by central differences; ``f`` returns a float.

    With ``rows``, only those leading-axis rows are perturbed; the rest stay 0.
    """
    x = tensor.data
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    if rows is None:
        positions = range(flat.size)
    else:
        width = int(np.prod(x.shape[1:], dtype=np.int64))
        positions = [r * width + j for r in sorted(set(int(r) for r in rows)) for j in range(width)]
    with tn.no_grad():
        for i in positions:
            old = flat[i]
            flat[i] = old + h
            fp = f()
            flat[i] = old - h
            fm = f()
            flat[i] = old
            gflat[i] = (fp - fm) / (2 * h)
    return g


# gradients that vanish identically (e.g. attention key biases) leave only
# finite-difference roundoff, around 1e-11; the floor keeps those from
# reading as relative error 1
ABS_FLOOR = 1e-6


def relative_error(analytic, numeric, floor=ABS_FLOOR) -> float:
    """||a - n|| / max(||a||, ||n||, floor)."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)


def check(loss_fn, tensors: dict, h=1e-5, rows: dict | None = None) -> dict:
    """Relative error per named tensor between backprop and finite differences.

    ``loss_fn`` builds a scalar Tensor from the current tensor values.
    ``rows`` maps a tensor name to the leading-axis rows the loss can reach
    (embedding lookups); the analytic gradient must be exactly 0 elsewhere,
    or the error is reported as inf.
    """
    rows = rows or {}
    for t in tensors.values():
        t.grad = None
    loss = loss_fn()
    tn.backward(loss)
    f = lambda: float(loss_fn().data)
    out = {}
    for name, t in tensors.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        used = rows.get(name)
        err = relative_error(analytic, numeric_grad(f, t, h, used))
        if used is not None:
            idle = np.ones(t.shape[0], dtype=bool)
            idle[list(used)] = False
            if np.any(analytic[idle] != 0):
                err = float("inf")
        out[name] = err
    return out
