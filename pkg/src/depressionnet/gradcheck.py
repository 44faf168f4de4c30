"""Central finite-difference gradient oracle.

Independent of the tape: it only perturbs ``Tensor.data`` and re-evaluates
the scalar function under ``no_grad``.
"""
import numpy as np

from .tensor import Graph, no_grad


def numeric_grads(f, tensors, step=1e-4):
    grads = []
    for t in tensors:
        g = np.zeros_like(t.data)
        flat, gflat = t.data.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            with no_grad():
                up = float(f().data)
            flat[i] = orig - step
            with no_grad():
                down = float(f().data)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def analytic_grads(f, tensors):
    for t in tensors:
        t.grad = None
    with Graph() as g:
        loss = f()
        g.backward(loss)
    return [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in tensors]


def max_relative_error(analytic, numeric, floor=1e-8):
    """Largest |a - n| / max(|a|, |n|, floor) over every entry of every pair."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        if a.size:
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def check(f, tensors, step=1e-4, floor=1e-8):
    """Max relative error between tape gradients and central differences."""
    return max_relative_error(analytic_grads(f, tensors), numeric_grads(f, tensors, step), floor)


def sampled_check(f, tensors, n, rng, step=1e-4, floor=1e-8):
    """Like :func:`check` but only ``n`` randomly chosen entries are perturbed;
    used where a full sweep over every parameter would be too slow."""
    analytic = analytic_grads(f, tensors)
    sizes = np.array([t.data.size for t in tensors])
    flat_ids = rng.choice(int(sizes.sum()), size=min(n, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for fid in flat_ids:
        ti = int(np.searchsorted(offsets, fid, side="right") - 1)
        i = int(fid - offsets[ti])
        flat = tensors[ti].data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + step
        with no_grad():
            up = float(f().data)
        flat[i] = orig - step
        with no_grad():
            down = float(f().data)
        flat[i] = orig
        num = (up - down) / (2 * step)
        a = analytic[ti].reshape(-1)[i]
        worst = max(worst, abs(a - num) / max(abs(a), abs(num), floor))
    return worst
