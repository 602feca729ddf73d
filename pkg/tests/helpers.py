"""Shared independent oracles for the test suite.

These deliberately avoid the library's own code paths: finite differences
for gradients, cubic-time substring search for match lengths, quadratic
direct summation for the DFT.
"""
import numpy as np

from mppn import tensor as T


def fd_gradient(loss_fn, tensor, h=1e-6):
    """Central finite differences of a scalar closure wrt one tensor."""
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.ravel()
    gf = grad.ravel()
    with T.no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            plus = loss_fn()
            flat[i] = orig - h
            minus = loss_fn()
            flat[i] = orig
            gf[i] = (plus - minus) / (2.0 * h)
    return grad


def max_rel_err(a, b):
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def check_grads(loss_fn, tensors, tol=1e-5, h=1e-6):
    """Backprop once, then compare every tensor's gradient against finite
    differences; returns the worst relative error."""
    for t in tensors:
        t.grad = None
    T.clear_tape()
    loss = loss_fn()
    T.backward(loss)
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "missing gradient"
        fd = fd_gradient(lambda: float(loss_fn().data), t, h=h)
        worst = max(worst, max_rel_err(t.grad, fd))
    assert worst <= tol, f"gradient mismatch: rel err {worst:.3e} > {tol:.0e}"
    return worst


def brute_match_lengths(symbols):
    """O(n^3) shortest-substring-never-seen-earlier lengths."""
    s = list(int(v) for v in symbols)
    n = len(s)
    lam = []
    for i in range(n):
        length = 1
        while True:
            if i + length > n:
                lam.append(n - i + 1)
                break
            sub = s[i:i + length]
            if any(s[j:j + length] == sub for j in range(i)):
                length += 1
            else:
                lam.append(length)
                break
    return np.asarray(lam, dtype=np.int64)


def direct_dft_amplitude(x):
    """O(T^2) single-channel magnitude spectrum at frequencies 0..T//2,
    computed after mean removal."""
    x = np.asarray(x, dtype=np.float64)
    x = x - x.mean()
    t = len(x)
    n = np.arange(t)
    amps = []
    for f in range(t // 2 + 1):
        re = float(np.sum(x * np.cos(-2.0 * np.pi * f * n / t)))
        im = float(np.sum(x * np.sin(-2.0 * np.pi * f * n / t)))
        amps.append(np.hypot(re, im))
    return np.asarray(amps)
