# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the training hot spots.

Same signatures and semantics as ``_pykernels``; reductions accumulate in
double regardless of the array dtype.  Built as an optional extension, see
setup.py.
"""

import numpy as np

cimport cython
from libc.math cimport (exp, expf, log, sqrt, sqrtf, tanh, tanhf, INFINITY,
                        pow)

NAME = "cython"

ctypedef fused floating:
    float
    double

cdef double GELU_C = sqrt(2.0 / 3.14159265358979323846)
cdef double GELU_A = 0.044715

cdef inline floating _tanh(floating x) noexcept nogil:
    if floating is float:
        return tanhf(x)
    else:
        return tanh(x)

cdef inline floating _exp(floating x) noexcept nogil:
    if floating is float:
        return expf(x)
    else:
        return exp(x)

cdef inline floating _sqrt(floating x) noexcept nogil:
    if floating is float:
        return sqrtf(x)
    else:
        return sqrt(x)


def layernorm_fwd(x, g, b, double eps=1e-5):
    x = np.ascontiguousarray(x)
    y = np.empty_like(x)
    mean = np.empty(x.shape[0], dtype=x.dtype)
    rstd = np.empty(x.shape[0], dtype=x.dtype)
    _layernorm_fwd(x, np.ascontiguousarray(g), np.ascontiguousarray(b),
                   y, mean, rstd, eps)
    return y, mean, rstd


def _layernorm_fwd(floating[:, ::1] x, floating[::1] g, floating[::1] b,
                   floating[:, ::1] y, floating[::1] mean,
                   floating[::1] rstd, double eps):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], i, j
    cdef double mu, var, d, r
    for i in range(n):
        mu = 0.0
        for j in range(c):
            mu += x[i, j]
        mu /= c
        var = 0.0
        for j in range(c):
            d = x[i, j] - mu
            var += d * d
        var /= c
        r = 1.0 / sqrt(var + eps)
        mean[i] = <floating> mu
        rstd[i] = <floating> r
        for j in range(c):
            y[i, j] = <floating> ((x[i, j] - mu) * r * g[j] + b[j])


def layernorm_bwd(dy, x, g, mean, rstd):
    dy = np.ascontiguousarray(dy)
    x = np.ascontiguousarray(x)
    dx = np.empty_like(x)
    dg = np.zeros_like(np.asarray(g))
    db = np.zeros_like(np.asarray(g))
    _layernorm_bwd(dy, x, np.ascontiguousarray(g),
                   np.ascontiguousarray(mean), np.ascontiguousarray(rstd),
                   dx, dg, db)
    return dx, dg, db


def _layernorm_bwd(floating[:, ::1] dy, floating[:, ::1] x, floating[::1] g,
                   floating[::1] mean, floating[::1] rstd,
                   floating[:, ::1] dx, floating[::1] dg, floating[::1] db):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], i, j
    cdef double mu, r, xh, dxh, s1, s2
    for i in range(n):
        mu = mean[i]
        r = rstd[i]
        s1 = 0.0
        s2 = 0.0
        for j in range(c):
            xh = (x[i, j] - mu) * r
            dxh = dy[i, j] * g[j]
            s1 += dxh
            s2 += dxh * xh
            dg[j] += <floating> (dy[i, j] * xh)
            db[j] += dy[i, j]
        s1 /= c
        s2 /= c
        for j in range(c):
            xh = (x[i, j] - mu) * r
            dxh = dy[i, j] * g[j]
            dx[i, j] = <floating> (r * (dxh - s1 - xh * s2))


def gelu_fwd(x):
    x = np.ascontiguousarray(x)
    y = np.empty_like(x)
    _gelu_fwd(x.reshape(-1), y.reshape(-1))
    return y


def _gelu_fwd(floating[::1] x, floating[::1] y):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef floating v, c = <floating> GELU_C, a = <floating> GELU_A
    cdef floating half = <floating> 0.5, one = <floating> 1.0
    for i in range(n):
        v = x[i]
        y[i] = half * v * (one + _tanh(c * (v + a * v * v * v)))


def gelu_bwd(x, dy):
    x = np.ascontiguousarray(x)
    dy = np.ascontiguousarray(dy)
    dx = np.empty_like(x)
    _gelu_bwd(x.reshape(-1), dy.reshape(-1), dx.reshape(-1))
    return dx


def _gelu_bwd(floating[::1] x, floating[::1] dy, floating[::1] dx):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef floating v, t, dinner, c = <floating> GELU_C, a = <floating> GELU_A
    cdef floating half = <floating> 0.5, one = <floating> 1.0
    cdef floating three_a = <floating> (3.0 * GELU_A)
    for i in range(n):
        v = x[i]
        t = _tanh(c * (v + a * v * v * v))
        dinner = c * (one + three_a * v * v)
        dx[i] = dy[i] * (half * (one + t) + half * v * (one - t * t) * dinner)


def causal_softmax_fwd(scores):
    scores = np.ascontiguousarray(scores)
    probs = np.zeros_like(scores)
    _causal_softmax_fwd(scores, probs)
    return probs


def _causal_softmax_fwd(floating[:, :, ::1] s, floating[:, :, ::1] p):
    cdef Py_ssize_t m = s.shape[0], t = s.shape[1], b, i, j
    cdef double mx, z, e
    for b in range(m):
        for i in range(t):
            mx = -INFINITY
            for j in range(i + 1):
                if s[b, i, j] > mx:
                    mx = s[b, i, j]
            z = 0.0
            for j in range(i + 1):
                e = exp(s[b, i, j] - mx)
                p[b, i, j] = <floating> e
                z += e
            for j in range(i + 1):
                p[b, i, j] = <floating> (p[b, i, j] / z)


def causal_softmax_bwd(probs, dprobs):
    probs = np.ascontiguousarray(probs)
    dprobs = np.ascontiguousarray(dprobs)
    ds = np.zeros_like(probs)
    _causal_softmax_bwd(probs, dprobs, ds)
    return ds


def _causal_softmax_bwd(floating[:, :, ::1] p, floating[:, :, ::1] dp,
                        floating[:, :, ::1] ds):
    cdef Py_ssize_t m = p.shape[0], t = p.shape[1], b, i, j
    cdef double dot
    for b in range(m):
        for i in range(t):
            dot = 0.0
            for j in range(i + 1):
                dot += p[b, i, j] * dp[b, i, j]
            for j in range(i + 1):
                ds[b, i, j] = <floating> (p[b, i, j] * (dp[b, i, j] - dot))


def softmax_xent(logits, targets, valid, bint want_grad=True):
    logits = np.ascontiguousarray(logits)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    valid_u8 = np.ascontiguousarray(valid, dtype=np.uint8)
    nll = np.zeros(logits.shape[0], dtype=logits.dtype)
    if want_grad:
        dlogits = np.zeros_like(logits)
        _softmax_xent_grad(logits, targets, valid_u8, nll, dlogits)
        return nll, dlogits
    _softmax_xent_nograd(logits, targets, valid_u8, nll)
    return nll, None


def _softmax_xent_grad(floating[:, ::1] logits, long long[::1] targets,
                       unsigned char[::1] valid, floating[::1] nll,
                       floating[:, ::1] dlogits):
    cdef Py_ssize_t n = logits.shape[0], v = logits.shape[1], i, j
    cdef long long t
    cdef floating mx, e, inv_z
    cdef double z
    for i in range(n):
        if not valid[i]:
            continue
        t = targets[i]
        mx = logits[i, 0]
        for j in range(1, v):
            if logits[i, j] > mx:
                mx = logits[i, j]
        z = 0.0
        for j in range(v):
            e = _exp(logits[i, j] - mx)
            dlogits[i, j] = e
            z += e
        nll[i] = <floating> (-(logits[i, t] - mx - log(z)))
        inv_z = <floating> (1.0 / z)
        for j in range(v):
            dlogits[i, j] = dlogits[i, j] * inv_z
        dlogits[i, t] -= <floating> 1.0


def _softmax_xent_nograd(floating[:, ::1] logits, long long[::1] targets,
                         unsigned char[::1] valid, floating[::1] nll):
    cdef Py_ssize_t n = logits.shape[0], v = logits.shape[1], i, j
    cdef long long t
    cdef floating mx
    cdef double z
    for i in range(n):
        if not valid[i]:
            continue
        t = targets[i]
        mx = logits[i, 0]
        for j in range(1, v):
            if logits[i, j] > mx:
                mx = logits[i, j]
        z = 0.0
        for j in range(v):
            z += _exp(logits[i, j] - mx)
        nll[i] = <floating> (-(logits[i, t] - mx - log(z)))


def adamw_step(p, g, m, v, long long step, double lr, double beta1,
               double beta2, double eps, double weight_decay):
    _adamw_step(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                m.reshape(-1), v.reshape(-1), step, lr, beta1, beta2, eps,
                weight_decay)


def _adamw_step(floating[::1] p, floating[::1] g, floating[::1] m,
                floating[::1] v, long long step, double lr, double beta1,
                double beta2, double eps, double weight_decay):
    cdef Py_ssize_t i, n = p.shape[0]
    cdef floating b1 = <floating> beta1, b2 = <floating> beta2
    cdef floating one_m_b1 = <floating> (1.0 - beta1)
    cdef floating one_m_b2 = <floating> (1.0 - beta2)
    cdef floating inv_bc1 = <floating> (1.0 / (1.0 - pow(beta1, <double> step)))
    cdef floating inv_bc2 = <floating> (1.0 / (1.0 - pow(beta2, <double> step)))
    cdef floating lr_f = <floating> lr, eps_f = <floating> eps
    cdef floating wd = <floating> weight_decay
    cdef floating mi, vi, gi
    for i in range(n):
        gi = g[i]
        mi = b1 * m[i] + one_m_b1 * gi
        vi = b2 * v[i] + one_m_b2 * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] = p[i] - lr_f * ((mi * inv_bc1)
                              / (_sqrt(vi * inv_bc2) + eps_f)
                              + wd * p[i])
