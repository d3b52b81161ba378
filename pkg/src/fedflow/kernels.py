"""Hot numeric kernels: numba-jitted when available, pure numpy otherwise.

The lane is picked once at import time from the ``FEDFLOW_BACKEND``
environment variable ("numba" | "numpy" | "auto"; default auto = numba if
importable). Both lanes implement the same arithmetic; matrix products are
left to BLAS in either case. ``benchmarks/bench_kernels.py`` compares
throughput of the two lanes.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - mirror env always ships numba
    numba = None


def _pick_backend() -> str:
    choice = os.environ.get("FEDFLOW_BACKEND", "auto").strip().lower()
    if choice in ("", "auto"):
        return "numba" if numba is not None else "numpy"
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        if numba is None:
            raise RuntimeError("FEDFLOW_BACKEND=numba but numba is not importable")
        return "numba"
    raise RuntimeError(f"unknown FEDFLOW_BACKEND value: {choice!r}")


BACKEND = _pick_backend()


# ---------------------------------------------------------------- numpy lane

def embed_mean_numpy(emb: np.ndarray, tokens: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Mean embedding row per token segment.

    `tokens` is the concatenation of all sequences, `offsets` the n+1 segment
    boundaries (offsets[-1] == len(tokens)); every segment must be non-empty.
    """
    gathered = emb[tokens]
    sums = np.add.reduceat(gathered, offsets[:-1], axis=0)
    lengths = np.diff(offsets).astype(np.float64)
    return sums / lengths[:, None]


def embed_mean_grad_numpy(d_out: np.ndarray, tokens: np.ndarray, offsets: np.ndarray,
                          vocab_size: int) -> np.ndarray:
    """Scatter-add gradient of embed_mean back onto the embedding table."""
    lengths = np.diff(offsets)
    scaled = np.repeat(d_out / lengths[:, None].astype(np.float64), lengths, axis=0)
    grad = np.zeros((vocab_size, d_out.shape[1]))
    np.add.at(grad, tokens, scaled)
    return grad


def softmax_xent_numpy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    denom = ez.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    loss = float(np.mean(np.log(denom[:, 0]) - z[rows, labels]))
    dlogits = ez / denom
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return loss, dlogits


def adam_update_numpy(param: np.ndarray, grad: np.ndarray, m: np.ndarray, v: np.ndarray,
                      step: int, lr: float, beta1: float, beta2: float, eps: float) -> None:
    """One in-place Adam update on flat float64 views."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


# ---------------------------------------------------------------- numba lane

if numba is not None:

    @numba.njit(cache=True)
    def embed_mean_numba(emb, tokens, offsets):
        n = offsets.shape[0] - 1
        d = emb.shape[1]
        out = np.zeros((n, d))
        for s in range(n):
            lo = offsets[s]
            hi = offsets[s + 1]
            for t in range(lo, hi):
                row = tokens[t]
                for j in range(d):
                    out[s, j] += emb[row, j]
            cnt = float(hi - lo)
            for j in range(d):
                out[s, j] /= cnt
        return out

    @numba.njit(cache=True)
    def embed_mean_grad_numba(d_out, tokens, offsets, vocab_size):
        d = d_out.shape[1]
        grad = np.zeros((vocab_size, d))
        n = offsets.shape[0] - 1
        for s in range(n):
            lo = offsets[s]
            hi = offsets[s + 1]
            cnt = float(hi - lo)
            for t in range(lo, hi):
                row = tokens[t]
                for j in range(d):
                    grad[row, j] += d_out[s, j] / cnt
        return grad

    @numba.njit(cache=True)
    def softmax_xent_numba(logits, labels):
        n, c = logits.shape
        dlogits = np.empty((n, c))
        loss = 0.0
        for i in range(n):
            mx = logits[i, 0]
            for j in range(1, c):
                if logits[i, j] > mx:
                    mx = logits[i, j]
            s = 0.0
            for j in range(c):
                e = np.exp(logits[i, j] - mx)
                dlogits[i, j] = e
                s += e
            loss += np.log(s) - (logits[i, labels[i]] - mx)
            for j in range(c):
                dlogits[i, j] /= s
            dlogits[i, labels[i]] -= 1.0
        loss /= n
        for i in range(n):
            for j in range(c):
                dlogits[i, j] /= n
        return loss, dlogits

    @numba.njit(cache=True)
    def adam_update_numba(param, grad, m, v, step, lr, beta1, beta2, eps):
        c1 = 1.0 - beta1 ** step
        c2 = 1.0 - beta2 ** step
        for i in range(param.shape[0]):
            g = grad[i]
            m[i] = beta1 * m[i] + (1.0 - beta1) * g
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g
            param[i] -= lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


if BACKEND == "numba":
    embed_mean = embed_mean_numba
    embed_mean_grad = embed_mean_grad_numba
    softmax_xent = softmax_xent_numba
    adam_update = adam_update_numba
else:
    embed_mean = embed_mean_numpy
    embed_mean_grad = embed_mean_grad_numpy
    softmax_xent = softmax_xent_numpy
    adam_update = adam_update_numpy
