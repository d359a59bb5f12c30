"""Compiled single-path SGD loop.

Mirrors ``trainer._sweep`` for one path at a time, fused with the parameter
update, so a training iteration costs a few microseconds instead of a few
hundred.  The numpy sweep remains the reference the kernel is tested against.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def sgd_chunk(W, b, sig, h, inputs, labels, idx, omega, k0, lr_scale, right, train_sigma, losses, gnorms):
    """Run ``len(idx)`` SGD iterations in place on ``W``, ``b``, ``sig``.

    Iteration ``i`` uses sample ``idx[i]`` and noise ``omega[i]`` with step
    ``lr_scale / sqrt(k0 + i)``.  Returns the number of completed iterations;
    a value short of ``len(idx)`` means a non-finite value was met at that
    iteration and the controls hold the last finite state.
    """
    N, D = b.shape
    L = labels.shape[1]
    P = inputs.shape[1]
    sqh = math.sqrt(h)
    X = np.empty((N + 1, D))
    S = np.empty((N + 1, D))
    y = np.empty(D)
    yp = np.empty(D)
    v = np.empty(D)
    gW = np.empty((N, D, D))
    gb = np.empty((N, D))
    gs = np.empty((N, D))
    for it in range(idx.shape[0]):
        q = idx[it]
        for j in range(D):
            X[0, j] = inputs[q, j] if j < P else 0.0
        for n in range(N):
            for i in range(D):
                z = b[n, i]
                for j in range(D):
                    z += W[n, i, j] * X[n, j]
                s = _sigmoid(z)
                S[n, i] = s
                X[n + 1, i] = X[n, i] + h * s + sqh * (sig[n, i] * omega[it, n, i])
        for i in range(D):
            z = b[N - 1, i]
            for j in range(D):
                z += W[N - 1, i, j] * X[N, j]
            S[N, i] = _sigmoid(z)
        loss = 0.0
        for j in range(D):
            y[j] = 0.0
        for j in range(L):
            r = X[N, j] - labels[q, j]
            loss += r * r
            y[j] = 2.0 * r
        for n in range(N - 1, -1, -1):
            m = n
            e = n
            if right:
                e = n + 1
                m = n + 1 if n + 1 < N else N - 1
            for i in range(D):
                v[i] = S[e, i] * (1.0 - S[e, i]) * y[i]
            for j in range(D):
                acc = 0.0
                for i in range(D):
                    acc += v[i] * W[m, i, j]
                yp[j] = y[j] + h * acc
            for i in range(D):
                gs[n, i] = sqh * (y[i] * omega[it, n, i]) / h
                a = yp[i] if right else y[i]
                vi = S[n, i] * (1.0 - S[n, i]) * a
                gb[n, i] = vi
                for j in range(D):
                    gW[n, i, j] = vi * X[n, j]
            for j in range(D):
                y[j] = yp[j]
        g2 = 0.0
        for n in range(N):
            for i in range(D):
                g2 += gb[n, i] * gb[n, i]
                if train_sigma:
                    g2 += gs[n, i] * gs[n, i]
                for j in range(D):
                    g2 += gW[n, i, j] * gW[n, i, j]
        if not (math.isfinite(loss) and math.isfinite(g2)):
            return it
        eta = lr_scale / math.sqrt(k0 + it)
        for n in range(N):
            for i in range(D):
                b[n, i] -= eta * gb[n, i]
                if train_sigma:
                    sig[n, i] -= eta * gs[n, i]
                for j in range(D):
                    W[n, i, j] -= eta * gW[n, i, j]
        losses[it] = loss
        gnorms[it] = math.sqrt(g2)
    return idx.shape[0]
