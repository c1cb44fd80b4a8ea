"""Compiled training kernel for the NeuralODE experiment.

The per-epoch work (unrolled RK4 forward, reverse sweep, Adam update)
runs on arrays far too small for numpy to amortize its call overhead, so
train_node spends its life here instead. The scalar activation formulas
below mirror actfn exactly, including the MoLU saturation guard; tests
pin the two implementations together and pin whole training runs
against the pure-numpy reference path in node.

Weights live in zero-padded (n_layers, maxdim, maxdim) arrays. Padded
entries never receive gradient, so Adam leaves them at exactly zero.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .actfn import U_SAT
from .ndcore import Mlp

_LOG_U_SAT = math.log(U_SAT)

# activation dispatch codes for the kernels below
CODES = {
    "molu": 0,
    "gelu": 1,
    "mish": 2,
    "silu": 3,
    "elu": 4,
    "tanh": 5,
    "relu": 6,
    "leaky_relu": 7,
}

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


@njit(cache=True)
def act_value(x, code, alpha, beta, slope):
    if code == 0:  # molu
        t = beta * x + math.log(alpha)
        if t > _LOG_U_SAT:
            return x
        u = math.exp(t)
        return x * math.tanh(u)
    elif code == 1:  # gelu (tanh form)
        return 0.5 * x * (1.0 + math.tanh(_GELU_C * (x + _GELU_K * x * x * x)))
    elif code == 2:  # mish
        sp = max(x, 0.0) + math.log1p(math.exp(-abs(x)))
        return x * math.tanh(sp)
    elif code == 3:  # silu
        t = math.exp(-abs(x))
        s = 1.0 / (1.0 + t) if x >= 0 else t / (1.0 + t)
        return x * s
    elif code == 4:  # elu
        return x if x >= 0 else alpha * math.expm1(x)
    elif code == 5:  # tanh
        return math.tanh(x)
    elif code == 6:  # relu
        return x if x > 0 else 0.0
    else:  # leaky_relu
        return x if x >= 0 else slope * x


@njit(cache=True)
def act_deriv(x, code, alpha, beta, slope):
    if code == 0:
        t = beta * x + math.log(alpha)
        if t > _LOG_U_SAT:
            return 1.0
        u = math.exp(t)
        th = math.tanh(u)
        return th + x * beta * u * (1.0 - th * th)
    elif code == 1:
        th = math.tanh(_GELU_C * (x + _GELU_K * x * x * x))
        return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_K * x * x)
    elif code == 2:
        sp = max(x, 0.0) + math.log1p(math.exp(-abs(x)))
        th = math.tanh(sp)
        t = math.exp(-abs(x))
        s = 1.0 / (1.0 + t) if x >= 0 else t / (1.0 + t)
        return th + x * (1.0 - th * th) * s
    elif code == 3:
        t = math.exp(-abs(x))
        s = 1.0 / (1.0 + t) if x >= 0 else t / (1.0 + t)
        return s * (1.0 + x * (1.0 - s))
    elif code == 4:
        return 1.0 if x >= 0 else alpha * math.exp(x)
    elif code == 5:
        th = math.tanh(x)
        return 1.0 - th * th
    elif code == 6:
        return 1.0 if x >= 0 else 0.0
    else:
        return 1.0 if x >= 0 else slope


@njit(cache=True)
def _train_kernel(Ws, bs, dims, code, alpha, beta, slope, times, substeps,
                  targets, include_row0, epochs, lr, beta1, beta2, eps,
                  clip_norm, thresh, losses):
    """Full-batch Adam over `epochs`; returns diverged epoch or -1.

    Mutates Ws/bs in place and fills losses[e] with the loss evaluated
    before epoch e's update. Gradients are rescaled to global L2 norm
    clip_norm when they exceed it (0 disables clipping). Stops (without
    recording) at the first epoch whose forward pass leaves
    [-thresh, thresh] or goes non-finite.
    """
    n = times.size
    L = dims.size - 1
    maxd = 0
    for i in range(dims.size):
        if dims[i] > maxd:
            maxd = dims[i]
    sdim = dims[0]
    n_sub = (n - 1) * substeps
    n_evals = n_sub * 4

    Z = np.zeros((n_evals, L, maxd))      # pre-activations per field eval
    hs = np.zeros(n_sub)
    ustart = np.zeros((n_sub, sdim))
    pred = np.zeros((n, sdim))
    k = np.zeros((4, sdim))

    mW = np.zeros_like(Ws)
    vW = np.zeros_like(Ws)
    mb = np.zeros_like(bs)
    vb = np.zeros_like(bs)
    gW = np.zeros_like(Ws)
    gb = np.zeros_like(bs)

    u = np.zeros(sdim)
    x = np.zeros(sdim)
    cur = np.zeros(maxd)
    nxt = np.zeros(maxd)
    acts = np.zeros((L, maxd))            # recomputed hidden activations
    dcur = np.zeros(maxd)
    dprev = np.zeros(maxd)
    a_adj = np.zeros(sdim)
    a_new = np.zeros(sdim)
    bx = np.zeros(sdim)
    bk = np.zeros(sdim)

    row0 = 0 if include_row0 == 1 else 1

    for epoch in range(epochs):
        # ---------- forward, caching every field evaluation ----------
        for j in range(sdim):
            u[j] = targets[0, j]
            pred[0, j] = u[j]
        e = 0
        s_idx = 0
        for i in range(n - 1):
            h = (times[i + 1] - times[i]) / substeps
            for _ in range(substeps):
                hs[s_idx] = h
                for j in range(sdim):
                    ustart[s_idx, j] = u[j]
                for st in range(4):
                    if st == 0:
                        for j in range(sdim):
                            x[j] = u[j]
                    elif st == 1:
                        for j in range(sdim):
                            x[j] = u[j] + 0.5 * h * k[0, j]
                    elif st == 2:
                        for j in range(sdim):
                            x[j] = u[j] + 0.5 * h * k[1, j]
                    else:
                        for j in range(sdim):
                            x[j] = u[j] + h * k[2, j]
                    for j in range(sdim):
                        cur[j] = x[j]
                    for l in range(L):
                        nout = dims[l + 1]
                        nin = dims[l]
                        for oi in range(nout):
                            s = bs[l, oi]
                            for ji in range(nin):
                                s += Ws[l, oi, ji] * cur[ji]
                            Z[e, l, oi] = s
                            if l < L - 1:
                                nxt[oi] = act_value(s, code, alpha, beta, slope)
                            else:
                                nxt[oi] = s
                        tmp = cur
                        cur = nxt
                        nxt = tmp
                    for j in range(sdim):
                        k[st, j] = cur[j]
                    e += 1
                for j in range(sdim):
                    u[j] = u[j] + (h / 6.0) * (k[0, j] + 2.0 * k[1, j] + 2.0 * k[2, j] + k[3, j])
                for j in range(sdim):
                    if not np.isfinite(u[j]) or abs(u[j]) > thresh:
                        return epoch
                s_idx += 1
            for j in range(sdim):
                pred[i + 1, j] = u[j]

        # ---------- loss ----------
        n_entries = (n - row0) * sdim
        loss = 0.0
        for i in range(row0, n):
            for j in range(sdim):
                d = pred[i, j] - targets[i, j]
                loss += d * d
        loss /= n_entries
        losses[epoch] = loss

        # ---------- reverse sweep ----------
        gW[:] = 0.0
        gb[:] = 0.0
        for j in range(sdim):
            a_adj[j] = 0.0
        e = n_evals
        s_idx = n_sub
        for i in range(n - 1, 0, -1):
            for j in range(sdim):
                a_adj[j] += 2.0 * (pred[i, j] - targets[i, j]) / n_entries
            for _ in range(substeps):
                s_idx -= 1
                h = hs[s_idx]
                e_base = e - 4
                for j in range(sdim):
                    a_new[j] = a_adj[j]
                # stages in reverse: 4, 3, 2, 1
                for st in range(3, -1, -1):
                    if st == 3:
                        for j in range(sdim):
                            bk[j] = (h / 6.0) * a_adj[j]
                    elif st == 2:
                        for j in range(sdim):
                            bk[j] = (h / 3.0) * a_adj[j] + h * bx[j]
                    elif st == 1:
                        for j in range(sdim):
                            bk[j] = (h / 3.0) * a_adj[j] + 0.5 * h * bx[j]
                    else:
                        for j in range(sdim):
                            bk[j] = (h / 6.0) * a_adj[j] + 0.5 * h * bx[j]
                    ei = e_base + st
                    # stage input: rebuild exactly as the forward pass did,
                    # using cached stage outputs k_j = Z[e_base + j, L-1, :]
                    if st == 0:
                        for j in range(sdim):
                            x[j] = ustart[s_idx, j]
                    elif st == 1:
                        for j in range(sdim):
                            x[j] = ustart[s_idx, j] + 0.5 * h * Z[e_base, L - 1, j]
                    elif st == 2:
                        for j in range(sdim):
                            x[j] = ustart[s_idx, j] + 0.5 * h * Z[e_base + 1, L - 1, j]
                    else:
                        for j in range(sdim):
                            x[j] = ustart[s_idx, j] + h * Z[e_base + 2, L - 1, j]
                    # hidden activations for this eval
                    for l in range(L - 1):
                        for oi in range(dims[l + 1]):
                            acts[l, oi] = act_value(Z[ei, l, oi], code, alpha, beta, slope)
                    # backprop through the layers
                    for j in range(sdim):
                        dcur[j] = bk[j]
                    for l in range(L - 1, -1, -1):
                        nout = dims[l + 1]
                        nin = dims[l]
                        for ji in range(nin):
                            dprev[ji] = 0.0
                        for oi in range(nout):
                            dz = dcur[oi]
                            if l < L - 1:
                                dz *= act_deriv(Z[ei, l, oi], code, alpha, beta, slope)
                            gb[l, oi] += dz
                            if l == 0:
                                for ji in range(nin):
                                    gW[l, oi, ji] += dz * x[ji]
                                    dprev[ji] += Ws[l, oi, ji] * dz
                            else:
                                for ji in range(nin):
                                    gW[l, oi, ji] += dz * acts[l - 1, ji]
                                    dprev[ji] += Ws[l, oi, ji] * dz
                        tmp = dcur
                        dcur = dprev
                        dprev = tmp
                    # dcur now holds this stage's input adjoint
                    for j in range(sdim):
                        bx[j] = dcur[j]
                        a_new[j] += dcur[j]
                for j in range(sdim):
                    a_adj[j] = a_new[j]
                e = e_base

        # ---------- gradient clipping ----------
        if clip_norm > 0.0:
            sq = 0.0
            for l in range(L):
                for oi in range(dims[l + 1]):
                    sq += gb[l, oi] * gb[l, oi]
                    for ji in range(dims[l]):
                        sq += gW[l, oi, ji] * gW[l, oi, ji]
            gnorm = math.sqrt(sq)
            if gnorm > clip_norm:
                scale = clip_norm / gnorm
                for l in range(L):
                    for oi in range(dims[l + 1]):
                        gb[l, oi] *= scale
                        for ji in range(dims[l]):
                            gW[l, oi, ji] *= scale

        # ---------- Adam update ----------
        t = epoch + 1
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for l in range(L):
            nout = dims[l + 1]
            nin = dims[l]
            for oi in range(nout):
                g = gb[l, oi]
                mb[l, oi] = beta1 * mb[l, oi] + (1.0 - beta1) * g
                vb[l, oi] = beta2 * vb[l, oi] + (1.0 - beta2) * g * g
                bs[l, oi] -= lr * (mb[l, oi] / c1) / (math.sqrt(vb[l, oi] / c2) + eps)
                for ji in range(nin):
                    g = gW[l, oi, ji]
                    mW[l, oi, ji] = beta1 * mW[l, oi, ji] + (1.0 - beta1) * g
                    vW[l, oi, ji] = beta2 * vW[l, oi, ji] + (1.0 - beta2) * g * g
                    Ws[l, oi, ji] -= lr * (mW[l, oi, ji] / c1) / (math.sqrt(vW[l, oi, ji] / c2) + eps)

    return -1


def _pack(model: Mlp):
    dims = np.asarray(model.dims, dtype=np.int64)
    n_layers = len(model.layers)
    maxd = int(dims.max())
    Ws = np.zeros((n_layers, maxd, maxd))
    bs = np.zeros((n_layers, maxd))
    for l, layer in enumerate(model.layers):
        out, inn = layer.weights.shape
        Ws[l, :out, :inn] = layer.weights
        bs[l, :out] = layer.bias
    return Ws, bs, dims


def _unpack(model: Mlp, Ws, bs):
    for l, layer in enumerate(model.layers):
        out, inn = layer.weights.shape
        layer.weights[:] = Ws[l, :out, :inn]
        layer.bias[:] = bs[l, :out]


def train_run(model: Mlp, data, cfg, activation):
    """Run the compiled training loop, mutating model parameters.

    Returns (losses, diverged_epoch_or_None); losses stops at the last
    epoch that completed its forward pass.
    """
    for layer in model.layers[:-1]:
        if layer.activation != activation:
            raise ValueError("hidden layers must all use the trained activation")
    if model.layers[-1].activation is not None:
        raise ValueError("final layer must be identity")
    dims_list = model.dims
    if dims_list[0] != dims_list[-1] or dims_list[0] != data.states.shape[1]:
        raise ValueError(
            f"field dims {dims_list} incompatible with state dim {data.states.shape[1]}"
        )
    Ws, bs, dims = _pack(model)
    losses = np.full(cfg.epochs, np.nan)
    div = _train_kernel(
        Ws, bs, dims, CODES[activation.kind],
        float(activation.alpha), float(activation.beta), float(activation.leaky_slope),
        np.ascontiguousarray(data.times, dtype=np.float64),
        int(cfg.rk4_substeps),
        np.ascontiguousarray(data.states, dtype=np.float64),
        1 if cfg.include_initial_row else 0,
        int(cfg.epochs), float(cfg.learning_rate),
        0.9, 0.999, 1e-8,
        float(cfg.grad_clip_norm),
        float(cfg.divergence_threshold),
        losses,
    )
    _unpack(model, Ws, bs)
    if div >= 0:
        return losses[:div], int(div)
    return losses, None
