"""LSTM recurrence kernels: numba-compiled with a pure-numpy fallback.

These two functions dominate training time. The input projection for all
timesteps is hoisted into one large GEMM; only the hidden-to-hidden product
and the gate nonlinearities run per step. The numba build fuses the per-step
element-wise work in explicit loops; the numpy build vectorizes it. Which one
runs is decided per call via :func:`tickex._accel.use_numba`, so the env flag
can flip paths without re-importing.

Shapes (float64 throughout): ``x`` is (T, B, D) padded input, ``lengths``
(B,) int64 true sequence lengths, ``w_xT`` (D, 4H) and ``w_hT`` (H, 4H) the
transposed input and recurrent blocks of the packed gate matrix, ``bias``
(4H,). Gate packing order along 4H is [input, forget, output,
cell-candidate]. Sequences shorter than T freeze their hidden and cell state
once t reaches their length, so row ``T`` of the returned state arrays holds
every sequence's final state.
"""

from __future__ import annotations

import numpy as np

from .._accel import HAS_NUMBA, njit, use_numba


def _forward_np(w_xT, w_hT, bias, x, lengths):
    steps, batch, input_dim = x.shape
    hidden = w_hT.shape[0]
    hs = np.zeros((steps + 1, batch, hidden))
    cs = np.zeros((steps + 1, batch, hidden))
    gates = np.empty((steps, batch, 4 * hidden))
    x_proj = (x.reshape(steps * batch, input_dim) @ w_xT + bias)
    x_proj = x_proj.reshape(steps, batch, 4 * hidden)
    for t in range(steps):
        z = x_proj[t] + hs[t] @ w_hT
        i = 1.0 / (1.0 + np.exp(-z[:, :hidden]))
        f = 1.0 / (1.0 + np.exp(-z[:, hidden : 2 * hidden]))
        o = 1.0 / (1.0 + np.exp(-z[:, 2 * hidden : 3 * hidden]))
        g = np.tanh(z[:, 3 * hidden :])
        c_new = f * cs[t] + i * g
        h_new = o * np.tanh(c_new)
        active = (t < lengths).astype(np.float64)[:, None]
        cs[t + 1] = active * c_new + (1.0 - active) * cs[t]
        hs[t + 1] = active * h_new + (1.0 - active) * hs[t]
        # masked steps store zero gates, matching the loop kernel's cache
        gates[t, :, :hidden] = i * active
        gates[t, :, hidden : 2 * hidden] = f * active
        gates[t, :, 2 * hidden : 3 * hidden] = o * active
        gates[t, :, 3 * hidden :] = g * active
    return hs, cs, gates


def _backward_np(w_h, x, lengths, hs, cs, gates, dh_last):
    steps, batch, input_dim = x.shape
    hidden = w_h.shape[1]
    dw_h = np.zeros_like(w_h)
    db = np.zeros(4 * hidden)
    dz_all = np.zeros((steps, batch, 4 * hidden))
    dh = dh_last.copy()
    dc = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        active = (t < lengths).astype(np.float64)[:, None]
        i = gates[t, :, :hidden]
        f = gates[t, :, hidden : 2 * hidden]
        o = gates[t, :, 2 * hidden : 3 * hidden]
        g = gates[t, :, 3 * hidden :]
        tanh_c = np.tanh(cs[t + 1])
        dh_act = dh * active
        dc_act = dc * active + dh_act * o * (1.0 - tanh_c * tanh_c)
        do = dh_act * tanh_c
        dz = dz_all[t]
        dz[:, :hidden] = dc_act * g * i * (1.0 - i)
        dz[:, hidden : 2 * hidden] = dc_act * cs[t] * f * (1.0 - f)
        dz[:, 2 * hidden : 3 * hidden] = do * o * (1.0 - o)
        dz[:, 3 * hidden :] = dc_act * i * (1.0 - g * g)
        dw_h += dz.T @ hs[t]
        db += dz.sum(axis=0)
        dh = dz @ w_h + dh * (1.0 - active)
        dc = dc_act * f + dc * (1.0 - active)
    flat_dz = dz_all.reshape(steps * batch, 4 * hidden)
    dw_x = flat_dz.T @ x.reshape(steps * batch, input_dim)
    return dw_x, dw_h, db


def _forward_loops(w_xT, w_hT, bias, x, lengths):
    steps, batch, input_dim = x.shape
    hidden = w_hT.shape[0]
    hs = np.zeros((steps + 1, batch, hidden))
    cs = np.zeros((steps + 1, batch, hidden))
    gates = np.empty((steps, batch, 4 * hidden))
    x_flat = np.ascontiguousarray(x).reshape(steps * batch, input_dim)
    x_proj = np.dot(x_flat, w_xT).reshape(steps, batch, 4 * hidden)
    for t in range(steps):
        z = np.dot(hs[t], w_hT)
        for b in range(batch):
            if t < lengths[b]:
                for h in range(hidden):
                    zi = x_proj[t, b, h] + z[b, h] + bias[h]
                    zf = x_proj[t, b, hidden + h] + z[b, hidden + h] + bias[hidden + h]
                    zo = (x_proj[t, b, 2 * hidden + h] + z[b, 2 * hidden + h]
                          + bias[2 * hidden + h])
                    zg = (x_proj[t, b, 3 * hidden + h] + z[b, 3 * hidden + h]
                          + bias[3 * hidden + h])
                    i = 1.0 / (1.0 + np.exp(-zi))
                    f = 1.0 / (1.0 + np.exp(-zf))
                    o = 1.0 / (1.0 + np.exp(-zo))
                    g = np.tanh(zg)
                    c_new = f * cs[t, b, h] + i * g
                    cs[t + 1, b, h] = c_new
                    hs[t + 1, b, h] = o * np.tanh(c_new)
                    gates[t, b, h] = i
                    gates[t, b, hidden + h] = f
                    gates[t, b, 2 * hidden + h] = o
                    gates[t, b, 3 * hidden + h] = g
            else:
                for h in range(hidden):
                    cs[t + 1, b, h] = cs[t, b, h]
                    hs[t + 1, b, h] = hs[t, b, h]
                    gates[t, b, h] = 0.0
                    gates[t, b, hidden + h] = 0.0
                    gates[t, b, 2 * hidden + h] = 0.0
                    gates[t, b, 3 * hidden + h] = 0.0
    return hs, cs, gates


def _backward_loops(w_h, x, lengths, hs, cs, gates, dh_last):
    steps, batch, input_dim = x.shape
    hidden = w_h.shape[1]
    dw_h = np.zeros_like(w_h)
    db = np.zeros(4 * hidden)
    dz_all = np.zeros((steps, batch, 4 * hidden))
    dh = dh_last.copy()
    dc = np.zeros((batch, hidden))
    dzT = np.empty((4 * hidden, batch))
    for t in range(steps - 1, -1, -1):
        for b in range(batch):
            if t < lengths[b]:
                for h in range(hidden):
                    i = gates[t, b, h]
                    f = gates[t, b, hidden + h]
                    o = gates[t, b, 2 * hidden + h]
                    g = gates[t, b, 3 * hidden + h]
                    tanh_c = np.tanh(cs[t + 1, b, h])
                    dc_act = dc[b, h] + dh[b, h] * o * (1.0 - tanh_c * tanh_c)
                    do = dh[b, h] * tanh_c
                    dz_all[t, b, h] = dc_act * g * i * (1.0 - i)
                    dz_all[t, b, hidden + h] = dc_act * cs[t, b, h] * f * (1.0 - f)
                    dz_all[t, b, 2 * hidden + h] = do * o * (1.0 - o)
                    dz_all[t, b, 3 * hidden + h] = dc_act * i * (1.0 - g * g)
                    dc[b, h] = dc_act * f
        for b in range(batch):
            for k in range(4 * hidden):
                dzT[k, b] = dz_all[t, b, k]
        dw_h += np.dot(dzT, hs[t])
        for k in range(4 * hidden):
            acc = 0.0
            for b in range(batch):
                acc += dzT[k, b]
            db[k] += acc
        dzw = np.dot(dz_all[t], w_h)
        for b in range(batch):
            if t < lengths[b]:
                for h in range(hidden):
                    dh[b, h] = dzw[b, h]
            else:
                for h in range(hidden):
                    dh[b, h] = dh[b, h] + dzw[b, h]
    flat_dz = dz_all.reshape(steps * batch, 4 * hidden)
    dzT_flat = np.ascontiguousarray(flat_dz.T)
    x_flat = np.ascontiguousarray(x).reshape(steps * batch, input_dim)
    dw_x = np.dot(dzT_flat, x_flat)
    return dw_x, dw_h, db


if HAS_NUMBA:
    _forward_nb = njit(cache=True)(_forward_loops)
    _backward_nb = njit(cache=True)(_backward_loops)


def lstm_forward_kernel(w_xT, w_hT, bias, x, lengths):
    if use_numba():
        return _forward_nb(w_xT, w_hT, bias, x, lengths)
    return _forward_np(w_xT, w_hT, bias, x, lengths)


def lstm_backward_kernel(w_h, x, lengths, hs, cs, gates, dh_last):
    if use_numba():
        return _backward_nb(w_h, x, lengths, hs, cs, gates, dh_last)
    return _backward_np(w_h, x, lengths, hs, cs, gates, dh_last)
