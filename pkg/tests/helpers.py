"""Independent oracles shared by the test modules."""
import numpy as np

from flowbench.diffmath import Tape, Tensor


def numerical_grad(fn, array, eps=1e-6, indices=None):
    """Central finite differences of scalar ``fn()`` w.r.t. entries of ``array`` (mutated in place)."""
    flat = array.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = {}
    for i in idx:
        old = flat[i]
        flat[i] = old + eps
        fp = fn()
        flat[i] = old - eps
        fm = fn()
        flat[i] = old
        out[i] = (fp - fm) / (2 * eps)
    if indices is None:
        return np.array([out[i] for i in range(flat.size)]).reshape(array.shape)
    return out


def analytic_grads(loss_fn, tensors):
    for t in tensors:
        t.grad = None
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)
    return [t.grad for t in tensors]


def rel_err(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def check_grad(loss_fn, tensors, eps=1e-6):
    """Largest relative error between tape gradients and finite differences."""
    grads = analytic_grads(loss_fn, tensors)
    worst = 0.0
    for t, g in zip(tensors, grads):
        fd = numerical_grad(lambda: float(loss_fn().data), t.data, eps=eps)
        g = np.zeros_like(t.data) if g is None else g
        worst = max(worst, rel_err(g, fd))
    return worst


def circular_conv_bruteforce(x, k):
    """y[h, w] = sum_{a,b} k[a,b] * x[(h-a) % H, (w-b) % W] by direct summation."""
    H, W = x.shape
    y = np.zeros_like(x)
    for h in range(H):
        for w in range(W):
            s = 0.0
            for a in range(H):
                for b in range(W):
                    s += k[a, b] * x[(h - a) % H, (w - b) % W]
            y[h, w] = s
    return y


def dft2_bruteforce(k):
    """Dense 2-D DFT by explicit summation."""
    H, W = k.shape
    out = np.zeros((H, W), dtype=complex)
    for p in range(H):
        for q in range(W):
            s = 0j
            for a in range(H):
                for b in range(W):
                    s += k[a, b] * np.exp(-2j * np.pi * (p * a / H + q * b / W))
            out[p, q] = s
    return out


def rand_tensor(rng, *shape, requires_grad=True):
    return Tensor(rng.standard_normal(shape), requires_grad=requires_grad)
