"""Sequential inner loops shared by the numpy and numba backends.

Every function here is written in the numba-nopython subset so the numba
backend can wrap the same source with ``@njit``.  Keep functions
self-contained: no calls into other Python helpers.

LSTM gate layout is [input, forget, cell, output] along the last axis; gate
pre-activations are expected with the input projection (x @ W_ih + b)
already applied, so the sweep only carries the hidden-to-hidden term.
"""
import numpy as np


def lstm_sequence_forward(pre, w_hh):
    """Run one LSTM direction over precomputed input projections.

    pre: (N, 4H) input pre-activations; w_hh: (H, 4H).
    Returns hidden states (N, H), cell states (N, H) and post-activation
    gates (N, 4H).  Initial hidden and cell states are zero.
    """
    n, four_h = pre.shape
    h_dim = four_h // 4
    h = np.zeros((n, h_dim))
    c = np.zeros((n, h_dim))
    gates = np.zeros((n, four_h))
    h_prev = np.zeros(h_dim)
    c_prev = np.zeros(h_dim)
    for t in range(n):
        z = pre[t] + np.dot(h_prev, w_hh)
        gi = 1.0 / (1.0 + np.exp(-z[:h_dim]))
        gf = 1.0 / (1.0 + np.exp(-z[h_dim : 2 * h_dim]))
        gc = np.tanh(z[2 * h_dim : 3 * h_dim])
        go = 1.0 / (1.0 + np.exp(-z[3 * h_dim :]))
        c_t = gf * c_prev + gi * gc
        h_t = go * np.tanh(c_t)
        gates[t, :h_dim] = gi
        gates[t, h_dim : 2 * h_dim] = gf
        gates[t, 2 * h_dim : 3 * h_dim] = gc
        gates[t, 3 * h_dim :] = go
        c[t] = c_t
        h[t] = h_t
        h_prev = h_t
        c_prev = c_t
    return h, c, gates


def lstm_sequence_backward(dh_out, gates, c, h, w_hh):
    """Backpropagate through one LSTM direction.

    dh_out: (N, H) gradients on the hidden outputs.  Returns gradients on
    the input pre-activations (N, 4H) and on w_hh.
    """
    n, h_dim = dh_out.shape
    dpre = np.zeros((n, 4 * h_dim))
    dw_hh = np.zeros(w_hh.shape)
    dh_rec = np.zeros(h_dim)
    dc_rec = np.zeros(h_dim)
    zeros_h = np.zeros(h_dim)
    for t in range(n - 1, -1, -1):
        gi = gates[t, :h_dim]
        gf = gates[t, h_dim : 2 * h_dim]
        gc = gates[t, 2 * h_dim : 3 * h_dim]
        go = gates[t, 3 * h_dim :]
        c_prev = c[t - 1] if t > 0 else zeros_h
        h_prev = h[t - 1] if t > 0 else zeros_h
        tc = np.tanh(c[t])
        dh = dh_out[t] + dh_rec
        d_go = dh * tc
        dc = dc_rec + dh * go * (1.0 - tc * tc)
        d_gi = dc * gc
        d_gc = dc * gi
        d_gf = dc * c_prev
        dc_rec = dc * gf
        dpre[t, :h_dim] = d_gi * gi * (1.0 - gi)
        dpre[t, h_dim : 2 * h_dim] = d_gf * gf * (1.0 - gf)
        dpre[t, 2 * h_dim : 3 * h_dim] = d_gc * (1.0 - gc * gc)
        dpre[t, 3 * h_dim :] = d_go * go * (1.0 - go)
        row = dpre[t]
        dh_rec = np.dot(w_hh, row)
        dw_hh += h_prev.reshape(h_dim, 1) * row.reshape(1, 4 * h_dim)
    return dpre, dw_hh


def crf_forward(g, trans, start, end):
    """Log-space forward recursion; returns (log-partition, alpha (N, S))."""
    n, s = g.shape
    alpha = np.zeros((n, s))
    alpha[0] = start + g[0]
    for t in range(1, n):
        for j in range(s):
            m = alpha[t - 1, 0] + trans[0, j]
            for i in range(1, s):
                v = alpha[t - 1, i] + trans[i, j]
                if v > m:
                    m = v
            acc = 0.0
            for i in range(s):
                acc += np.exp(alpha[t - 1, i] + trans[i, j] - m)
            alpha[t, j] = m + np.log(acc) + g[t, j]
    m = alpha[n - 1, 0] + end[0]
    for j in range(1, s):
        v = alpha[n - 1, j] + end[j]
        if v > m:
            m = v
    acc = 0.0
    for j in range(s):
        acc += np.exp(alpha[n - 1, j] + end[j] - m)
    return m + np.log(acc), alpha


def crf_posteriors(g, trans, start, end, alpha, log_z):
    """Forward-backward posteriors given a forward pass.

    Returns per-position tag marginals (N, S) and pairwise transition
    marginals (N-1, S, S).
    """
    n, s = g.shape
    beta = np.zeros((n, s))
    beta[n - 1] = end
    for t in range(n - 2, -1, -1):
        for i in range(s):
            m = trans[i, 0] + g[t + 1, 0] + beta[t + 1, 0]
            for j in range(1, s):
                v = trans[i, j] + g[t + 1, j] + beta[t + 1, j]
                if v > m:
                    m = v
            acc = 0.0
            for j in range(s):
                acc += np.exp(trans[i, j] + g[t + 1, j] + beta[t + 1, j] - m)
            beta[t, i] = m + np.log(acc)
    unary = np.zeros((n, s))
    for t in range(n):
        for i in range(s):
            unary[t, i] = np.exp(alpha[t, i] + beta[t, i] - log_z)
    pairwise = np.zeros((n - 1, s, s))
    for t in range(1, n):
        for i in range(s):
            for j in range(s):
                pairwise[t - 1, i, j] = np.exp(
                    alpha[t - 1, i] + trans[i, j] + g[t, j] + beta[t, j] - log_z
                )
    return unary, pairwise


def crf_viterbi(g, trans, start, end):
    """Max-product decode; ties break toward the lowest tag index.

    Returns the best path (N,) and its score.
    """
    n, s = g.shape
    delta = np.zeros((n, s))
    back = np.zeros((n, s), dtype=np.int64)
    delta[0] = start + g[0]
    for t in range(1, n):
        for j in range(s):
            best = delta[t - 1, 0] + trans[0, j]
            arg = 0
            for i in range(1, s):
                v = delta[t - 1, i] + trans[i, j]
                if v > best:
                    best = v
                    arg = i
            delta[t, j] = best + g[t, j]
            back[t, j] = arg
    best = delta[n - 1, 0] + end[0]
    arg = 0
    for j in range(1, s):
        v = delta[n - 1, j] + end[j]
        if v > best:
            best = v
            arg = j
    path = np.zeros(n, dtype=np.int64)
    path[n - 1] = arg
    for t in range(n - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, best
