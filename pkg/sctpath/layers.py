#!/usr/bin/env python
# pylint: disable=C0103,R0913,R0914
#
# A library that implements the sparse convolutional transformer for
# tissue-block classification on grids of tile embeddings.
# Copyright (C) 2026
# The sctpath developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU Lesser Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU Lesser Public License for more details.
#
# You should have received a copy of the GNU Lesser Public License
# along with this program.  If not, see [http://www.gnu.org/licenses/].
"""This module provides the numeric kernels of the sparse convolutional
transformer, each as a forward/backward pair.

``x_forward(...)`` returns the output and a cache; ``x_backward(dout, cache)``
returns the gradient with respect to the input and a dict of parameter
gradients keyed like the parameter mapping ``p`` the forward received.

Receptive-field kernels work on all centres at once: a field batch is an
N x k^2 x Z array whose PAD slots are zero rows, with an N x k^2 mask.
"""
import math

import numpy as np
from scipy.special import erf, expit

from sctpath.errors import ConfigError

LAYERNORM_EPS = 1e-5
_SQRT2 = math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _check(cond, message, *args):
    if not cond:
        raise ConfigError(message.format(*args))


# Elementary layers


def linear_forward(x, p):
    """y = x W (+ b) over the last axis of x."""
    out = x @ p["W"]
    if "b" in p:
        out = out + p["b"]
    return out, (x, p)


def linear_backward(dout, cache):
    x, p = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    grads = {"W": x2.T @ d2}
    if "b" in p:
        grads["b"] = d2.sum(axis=0)
    return dout @ p["W"].T, grads


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(dout, cache):
    return dout * (cache > 0), {}


def gelu_forward(x):
    """Exact GELU, x * Phi(x)."""
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    return x * cdf, (x, cdf)


def gelu_backward(dout, cache):
    x, cdf = cache
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
    return dout * (cdf + x * pdf), {}


def layernorm_forward(x, p):
    """Normalises every token over its channels, then applies gain and bias."""
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True)
                            + LAYERNORM_EPS)
    xhat = centered * inv_std
    return xhat * p["g"] + p["b"], (xhat, inv_std, p)


def layernorm_backward(dout, cache):
    xhat, inv_std, p = cache
    grads = {
        "g": (dout * xhat).reshape(-1, xhat.shape[-1]).sum(axis=0),
        "b": dout.reshape(-1, xhat.shape[-1]).sum(axis=0)
    }
    dxhat = dout * p["g"]
    dx = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True) -
                    xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, grads


def masked_softmax(scores, mask=None):
    """
    Softmax over the last axis. Entries where ``mask`` is false get weight
    exactly 0; every row must keep at least one entry.
    """
    if mask is not None:
        scores = np.where(mask, scores, -np.inf)
    top = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - top)
    if mask is not None:
        e = np.where(mask, e, 0.0)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dprob, prob):
    return prob * (dprob - (dprob * prob).sum(axis=-1, keepdims=True))


def mlp_forward(x, p):
    """x + W_2 GELU(W_1 x + b_1) + b_2."""
    h, c1 = linear_forward(x, {"W": p["W_1"], "b": p["b_1"]})
    a, c2 = gelu_forward(h)
    out, c3 = linear_forward(a, {"W": p["W_2"], "b": p["b_2"]})
    return out + x, (c1, c2, c3)


def mlp_backward(dout, cache):
    c1, c2, c3 = cache
    da, g2 = linear_backward(dout, c3)
    dh, _ = gelu_backward(da, c2)
    dx, g1 = linear_backward(dh, c1)
    grads = {"W_1": g1["W"], "b_1": g1["b"], "W_2": g2["W"], "b_2": g2["b"]}
    return dx + dout, grads


# Element-wise self-attention


def esa_forward(fields, mask, p):
    """
    Element-wise self-attention over receptive fields.

    Each field is embedded with ``W_r`` into E (queries, keys and values
    alike). Spatial attention softmax(E E^T / sqrt(C)) runs over the filled
    slots; channel attention softmax(E^T E / sqrt(k_eff)) runs over the
    channels with k_eff the number of filled slots. The two attended maps are
    summed, projected back with ``W_o`` and added to the input.

    Args:
        fields (numpy.ndarray): N x k^2 x Z (or a single k^2 x Z field).
        mask (numpy.ndarray): N x k^2 booleans (or k^2), centre slot true.
        p (dict): ``W_r`` (Z x C) and ``W_o`` (C x Z).

    Returns:
        (numpy.ndarray, tuple): Attended fields shaped like ``fields``, cache.
    """
    single = fields.ndim == 2
    if single:
        fields, mask = fields[None], np.asarray(mask)[None]
    mask = np.asarray(mask, dtype=bool)
    n, kk, z = fields.shape
    _check(mask.shape == (n, kk), "mask shape {} does not match fields {}",
           mask.shape, fields.shape)
    _check(p["W_r"].shape[0] == z and p["W_o"].shape == p["W_r"].shape[::-1],
           "ESA weights {} / {} do not fit Z={}", p["W_r"].shape,
           p["W_o"].shape, z)
    _check(mask.any(axis=1).all(), "every field needs a filled slot")
    m = mask[..., None].astype(fields.dtype)
    r = fields * m
    e = r @ p["W_r"]
    c = e.shape[-1]
    et = e.transpose(0, 2, 1)
    a_sp = masked_softmax(e @ et / math.sqrt(c), mask[:, None, :])
    y = (a_sp @ e) * m
    keff = mask.sum(axis=1).astype(fields.dtype)[:, None, None]
    a_ch = masked_softmax(et @ e / np.sqrt(keff))
    yc = (a_ch @ et).transpose(0, 2, 1)
    g = y + yc
    out = g @ p["W_o"] + r
    cache = (single, r, m, e, a_sp, a_ch, keff, g, p)
    return (out[0] if single else out), cache


def esa_backward(dout, cache):
    single, r, m, e, a_sp, a_ch, keff, g, p = cache
    if single:
        dout = dout[None]
    dout = dout * m
    c = e.shape[-1]
    et = e.transpose(0, 2, 1)
    grads = {"W_o": np.einsum("nkc,nkz->cz", g, dout)}
    dg = dout @ p["W_o"].T
    # spatial branch
    dy = dg * m
    da_sp = dy @ et
    de = a_sp.transpose(0, 2, 1) @ dy
    ds = softmax_backward(da_sp, a_sp) / math.sqrt(c)
    de += (ds + ds.transpose(0, 2, 1)) @ e
    # channel branch
    dyc = dg.transpose(0, 2, 1)
    da_ch = dyc @ e
    det = a_ch.transpose(0, 2, 1) @ dyc
    ds_ch = softmax_backward(da_ch, a_ch) / np.sqrt(keff)
    det += (ds_ch + ds_ch.transpose(0, 2, 1)) @ et
    de += det.transpose(0, 2, 1)
    grads["W_r"] = np.einsum("nkz,nkc->zc", r, de)
    dr = (dout + de @ p["W_r"].T) * m
    return (dr[0] if single else dr), grads


# Spatially sparse convolutional self-attention


def gather_fields(x, rf):
    """N x k^2 x Z field batch of ``x`` with PAD slots zeroed."""
    idx = np.where(rf.mask, rf.fields, 0)
    return x[idx] * rf.mask[..., None].astype(x.dtype)


def ssc_sa_forward(x, rf, p):
    """
    Sparse convolutional self-attention.

    Every field is attended with ESA, then convolved with ``W_c``
    (D_out x k^2 x Z); PAD slots contribute nothing. The block input is added
    to the result on the first min(Z, D_out) channels.

    Args:
        x (numpy.ndarray): N x Z tokens.
        rf (ReceptiveFieldIndex): Fields built with the kernel size of ``W_c``.
        p (dict): ``W_r``, ``W_o`` and ``W_c``.

    Returns:
        (numpy.ndarray, tuple): N x D_out tokens, cache.
    """
    w_c = p["W_c"]
    _check(w_c.shape[1] == rf.k * rf.k,
           "receptive fields use k={} but W_c has {} slots", rf.k, w_c.shape[1])
    _check(w_c.shape[2] == x.shape[1], "W_c expects Z={}, tokens have Z={}",
           w_c.shape[2], x.shape[1])
    fields = gather_fields(x, rf)
    attended, esa_cache = esa_forward(fields, rf.mask, p)
    out = np.einsum("nkz,dkz->nd", attended, w_c)
    q = min(x.shape[1], w_c.shape[0])
    out[:, :q] += x[:, :q]
    return out, (x.shape, rf, attended, esa_cache, p, q)


def ssc_sa_backward(dout, cache):
    shape, rf, attended, esa_cache, p, q = cache
    grads = {"W_c": np.einsum("nd,nkz->dkz", dout, attended)}
    dattended = np.einsum("nd,dkz->nkz", dout, p["W_c"])
    dfields, esa_grads = esa_backward(dattended, esa_cache)
    grads.update(esa_grads)
    dx = np.zeros(shape, dtype=dout.dtype)
    np.add.at(dx, rf.fields[rf.mask], dfields[rf.mask])
    dx[:, :q] += dout[:, :q]
    return dx, grads


# Spatially sparse pooling


def ssp_forward(x, partition, mode="max"):
    """
    Pools the tokens of every cell of ``partition``.

    Args:
        x (numpy.ndarray): N x Z tokens.
        partition (CellPartition): Cells over the current coordinates.
        mode (str): ``max`` or ``avg``.

    Returns:
        (numpy.ndarray, numpy.ndarray, tuple): M x Z pooled tokens, M x 2 cell
        coordinates, cache.
    """
    _check(mode in ("max", "avg"), "pooling mode must be max or avg, got {}",
           mode)
    m = len(partition.cells)
    z = x.shape[1]
    out = np.empty((m, z), dtype=x.dtype)
    cols = np.arange(z)
    src = np.empty((m, z), dtype=np.int64) if mode == "max" else None
    for c, (_, members) in enumerate(partition.cells):
        seg = x[members]
        if mode == "max":
            first = seg.argmax(axis=0)
            src[c] = members[first]
            out[c] = seg[first, cols]
        else:
            out[c] = seg.mean(axis=0)
    return out, partition.cell_coords, (x.shape, partition, mode, src)


def ssp_backward(dout, cache):
    shape, partition, mode, src = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    if mode == "max":
        dx[src, np.arange(shape[1])[None, :]] = dout
    else:
        for c, (_, members) in enumerate(partition.cells):
            dx[members] = dout[c] / members.size
    return dx, {}


# Global multi-head self-attention


def mha_forward(x, p, n_heads):
    """
    Scaled dot-product attention over all N tokens with ``n_heads`` heads of
    width Z / n_heads, output projection, plus the input (skip).

    Args:
        x (numpy.ndarray): N x Z tokens.
        p (dict): ``W_q``, ``b_q``, ``W_k``, ``b_k``, ``W_v``, ``b_v``,
            ``W_o``, ``b_o``.
        n_heads (int): Head count, must divide Z.
    """
    n, z = x.shape
    _check(z % n_heads == 0, "n_h={} does not divide Z={}", n_heads, z)
    d = z // n_heads

    def heads(t):
        return t.reshape(n, n_heads, d).transpose(1, 0, 2)

    q = heads(x @ p["W_q"] + p["b_q"])
    k = heads(x @ p["W_k"] + p["b_k"])
    v = heads(x @ p["W_v"] + p["b_v"])
    att = masked_softmax(q @ k.transpose(0, 2, 1) / math.sqrt(d))
    o = (att @ v).transpose(1, 0, 2).reshape(n, z)
    out = o @ p["W_o"] + p["b_o"] + x
    return out, (x, q, k, v, att, o, p, d)


def mha_backward(dout, cache):
    x, q, k, v, att, o, p, d = cache
    n, z = x.shape
    h = q.shape[0]
    grads = {"W_o": o.T @ dout, "b_o": dout.sum(axis=0)}
    do = (dout @ p["W_o"].T).reshape(n, h, d).transpose(1, 0, 2)
    datt = do @ v.transpose(0, 2, 1)
    dv = att.transpose(0, 2, 1) @ do
    ds = softmax_backward(datt, att) / math.sqrt(d)
    dq = ds @ k
    dk = ds.transpose(0, 2, 1) @ q
    dx = dout.copy()
    for name, dt in (("q", dq), ("k", dk), ("v", dv)):
        flat = dt.transpose(1, 0, 2).reshape(n, z)
        grads["W_" + name] = x.T @ flat
        grads["b_" + name] = flat.sum(axis=0)
        dx += flat @ p["W_" + name].T
    return dx, grads


# Block-level aggregation and attention pooling


def aggregate_forward(x, mode="mean"):
    """Reduces N x Z tokens to one Z vector by mean or max."""
    _check(mode in ("mean", "max"), "aggregation must be mean or max, got {}",
           mode)
    if mode == "mean":
        return x.mean(axis=0), (x.shape, mode, None)
    first = x.argmax(axis=0)
    return x[first, np.arange(x.shape[1])], (x.shape, mode, first)


def aggregate_backward(dout, cache):
    shape, mode, first = cache
    if mode == "mean":
        return np.broadcast_to(dout / shape[0], shape).copy(), {}
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[first, np.arange(shape[1])] = dout
    return dx, {}


def attention_pool_forward(h, p):
    """
    Attention pooling of N x E instance embeddings.

    Scores are w^T tanh(V h) or, when ``U`` is present, the gated
    w^T (tanh(V h) * sigmoid(U h)); weights are their softmax over instances.

    Returns:
        (numpy.ndarray, tuple): The E pooled vector and a cache whose second
        entry holds the N attention weights.
    """
    t = np.tanh(h @ p["V"] + p["b_V"])
    gate = expit(h @ p["U"] + p["b_U"]) if "U" in p else None
    u = t * gate if gate is not None else t
    alpha = masked_softmax(u @ p["w"][:, 0])
    return alpha @ h, (h, alpha, t, gate, u, p)


def attention_pool_backward(dout, cache):
    h, alpha, t, gate, u, p = cache
    dalpha = h @ dout
    dh = alpha[:, None] * dout[None, :]
    da = softmax_backward(dalpha, alpha)
    grads = {"w": u.T @ da[:, None]}
    du = da[:, None] * p["w"][:, 0][None, :]
    dt = du
    if gate is not None:
        dt = du * gate
        dpre_u = du * t * gate * (1.0 - gate)
        grads["U"] = h.T @ dpre_u
        grads["b_U"] = dpre_u.sum(axis=0)
        dh += dpre_u @ p["U"].T
    dpre_v = dt * (1.0 - t * t)
    grads["V"] = h.T @ dpre_v
    grads["b_V"] = dpre_v.sum(axis=0)
    dh += dpre_v @ p["V"].T
    return dh, grads


def sigmoid(x):
    return expit(x)
