"""Forward/backward primitives for the agent kernel.

Every forward returns (output, cache); the matching backward consumes the
cache and upstream gradients and returns gradients for inputs and weights.
Gradients are derived by hand; nothing here depends on an autodiff
framework.  All math is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z)
    e = np.exp(shifted)
    return e / e.sum()


# --------------------------------------------------------------------------
# LSTM cell
# --------------------------------------------------------------------------

@dataclass
class LstmCache:
    x: np.ndarray
    h_in: np.ndarray
    c_in: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    c: np.ndarray


def lstm_cell_forward(x, h_in, c_in, wx, wh, b):
    """One step of a 4-gate recurrent cell (gate order: input, forget,
    candidate, output)."""
    hidden = h_in.shape[0]
    pre = wx @ x + wh @ h_in + b
    i = sigmoid(pre[:hidden])
    f = sigmoid(pre[hidden:2 * hidden])
    g = np.tanh(pre[2 * hidden:3 * hidden])
    o = sigmoid(pre[3 * hidden:])
    c = f * c_in + i * g
    h = o * np.tanh(c)
    return h, c, LstmCache(x=x, h_in=h_in, c_in=c_in, i=i, f=f, g=g, o=o, c=c)


def lstm_cell_backward(dh, dc_out, cache: LstmCache, wx, wh):
    """Returns (dx, dh_in, dc_in, dwx, dwh, db)."""
    tc = np.tanh(cache.c)
    do = dh * tc
    dc = dc_out + dh * cache.o * (1.0 - tc * tc)
    di = dc * cache.g
    df = dc * cache.c_in
    dg = dc * cache.i
    dc_in = dc * cache.f
    dpre = np.concatenate([
        di * cache.i * (1.0 - cache.i),
        df * cache.f * (1.0 - cache.f),
        dg * (1.0 - cache.g * cache.g),
        do * cache.o * (1.0 - cache.o),
    ])
    dwx = np.outer(dpre, cache.x)
    dwh = np.outer(dpre, cache.h_in)
    dx = wx.T @ dpre
    dh_in = wh.T @ dpre
    return dx, dh_in, dc_in, dwx, dwh, dpre


# --------------------------------------------------------------------------
# soft attention
# --------------------------------------------------------------------------

@dataclass
class AttentionCache:
    query: np.ndarray     # (d,)
    keys: np.ndarray      # (n, d)
    values: np.ndarray    # (n, dv)
    weights: np.ndarray   # (n,)


def attention_forward(query, keys, values):
    """Dot-product attention: softmax(keys @ query) applied to values."""
    z = keys @ query
    weights = softmax(z)
    attended = weights @ values
    return attended, weights, AttentionCache(query=query, keys=keys,
                                             values=values, weights=weights)


def attention_backward(d_attended, cache: AttentionCache, d_weights_extra=None):
    """Returns (d_query, d_keys, d_values).

    ``d_weights_extra`` lets a caller add a gradient arriving directly at the
    attention weights (none of the current consumers need it, but the loss
    layer may inspect weights).
    """
    w = cache.weights
    d_w = cache.values @ d_attended
    if d_weights_extra is not None:
        d_w = d_w + d_weights_extra
    # softmax jacobian applied to the weight gradient
    d_z = w * (d_w - np.dot(w, d_w))
    d_query = cache.keys.T @ d_z
    d_keys = np.outer(d_z, cache.query)
    d_values = np.outer(w, d_attended)
    return d_query, d_keys, d_values


# --------------------------------------------------------------------------
# two-layer perceptron with tanh (feature projection g)
# --------------------------------------------------------------------------

@dataclass
class MlpCache:
    x: np.ndarray       # (n, d_in)
    t1: np.ndarray      # (n, d_hidden)


def mlp_forward(x, w1, b1, w2, b2):
    """Row-wise projection: x (n, d_in) -> (n, d_out)."""
    a1 = x @ w1.T + b1
    t1 = np.tanh(a1)
    out = t1 @ w2.T + b2
    return out, MlpCache(x=x, t1=t1)


def mlp_backward(d_out, cache: MlpCache, w1, w2):
    """Returns (dx, dw1, db1, dw2, db2)."""
    dw2 = d_out.T @ cache.t1
    db2 = d_out.sum(axis=0)
    dt1 = d_out @ w2
    da1 = dt1 * (1.0 - cache.t1 * cache.t1)
    dw1 = da1.T @ cache.x
    db1 = da1.sum(axis=0)
    dx = da1 @ w1
    return dx, dw1, db1, dw2, db2


# --------------------------------------------------------------------------
# affine layer (the shift-module projections)
# --------------------------------------------------------------------------

def affine_forward(x, w, b):
    return w @ x + b


def affine_backward(d_out, x, w):
    """Returns (dx, dw, db)."""
    dw = np.outer(d_out, x)
    db = d_out.copy()
    dx = w.T @ d_out
    return dx, dw, db
