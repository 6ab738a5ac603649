"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Both implementations of every kernel are always importable as ``<name>_numpy``
and (when numba is active) ``<name>_numba``; the undecorated public name is
bound to whichever backend ``fedpls._accel`` selected.

Gain tensor convention: ``gain[b, l, c]`` is the linear power gain from the
base station of cell ``b`` toward user ``l`` of cell ``c``.

Parameter layout: for each layer (input to output order) a row-major
``(fan_in, fan_out)`` weight block followed by ``fan_out`` biases.
"""
from __future__ import annotations

import numpy as np

from ._accel import BACKEND, HAVE_NUMBA, njit


# ----------------------------------------------------------------------------
# interference and per-slot link evaluation
# ----------------------------------------------------------------------------

def interference_numpy(powers: np.ndarray, gain: np.ndarray) -> np.ndarray:
    n_cells, n_users = powers.shape
    serving = gain[np.arange(n_cells), :, np.arange(n_cells)]  # (B, L): g[b, l, b]
    intra = (powers * serving) @ (1.0 - np.eye(n_users))
    tx_total = powers.sum(axis=1)
    contrib = tx_total[:, None, None] * gain  # (j, l, b)
    contrib[np.arange(n_cells), :, np.arange(n_cells)] = 0.0
    inter = contrib.sum(axis=0).T  # (b, l)
    return intra + inter


@njit(cache=True)
def _interference_loops(powers, gain):
    n_cells, n_users = powers.shape
    out = np.zeros((n_cells, n_users))
    tx_total = np.zeros(n_cells)
    for j in range(n_cells):
        s = 0.0
        for c in range(n_users):
            s += powers[j, c]
        tx_total[j] = s
    for b in range(n_cells):
        for l in range(n_users):
            acc = 0.0
            for i in range(n_users):
                if i != l:
                    acc += powers[b, i] * gain[b, i, b]
            for j in range(n_cells):
                if j != b:
                    acc += tx_total[j] * gain[j, l, b]
            out[b, l] = acc
    return out


def evaluate_slot_numpy(powers, gain, eve_gain, n0):
    """Vectorised link budget for one slot.

    Returns ``(interference, sinr, rate, sinr_eve, rate_eve, secrecy, rewards)``;
    all per-(cell, user) except ``rewards`` which is per cell.
    """
    n_cells = powers.shape[0]
    interf = interference_numpy(powers, gain)
    serving = gain[np.arange(n_cells), :, np.arange(n_cells)]
    sinr = powers * serving / (interf + n0)
    rate = np.log2(1.0 + sinr)
    sinr_eve = powers * eve_gain[:, None] / n0
    rate_eve = np.log2(1.0 + sinr_eve)
    secrecy = np.maximum(rate - rate_eve, 0.0)
    cell_rate = rate.sum(axis=1)
    # masked sum rather than total-minus-own: no cancellation error
    rewards = secrecy.sum(axis=1) + (1.0 - np.eye(n_cells)) @ cell_rate
    return interf, sinr, rate, sinr_eve, rate_eve, secrecy, rewards


@njit(cache=True)
def _evaluate_slot_loops(powers, gain, eve_gain, n0):
    n_cells, n_users = powers.shape
    interf = _interference_loops(powers, gain)
    sinr = np.empty((n_cells, n_users))
    rate = np.empty((n_cells, n_users))
    sinr_eve = np.empty((n_cells, n_users))
    rate_eve = np.empty((n_cells, n_users))
    secrecy = np.empty((n_cells, n_users))
    cell_rate = np.zeros(n_cells)
    cell_secrecy = np.zeros(n_cells)
    for b in range(n_cells):
        for l in range(n_users):
            p = powers[b, l]
            s = p * gain[b, l, b] / (interf[b, l] + n0)
            r = np.log2(1.0 + s)
            se = p * eve_gain[b] / n0
            re = np.log2(1.0 + se)
            c = r - re
            if c < 0.0:
                c = 0.0
            sinr[b, l] = s
            rate[b, l] = r
            sinr_eve[b, l] = se
            rate_eve[b, l] = re
            secrecy[b, l] = c
            cell_rate[b] += r
            cell_secrecy[b] += c
    rewards = np.empty(n_cells)
    for b in range(n_cells):
        acc = cell_secrecy[b]
        for j in range(n_cells):
            if j != b:
                acc += cell_rate[j]
        rewards[b] = acc
    return interf, sinr, rate, sinr_eve, rate_eve, secrecy, rewards


# ----------------------------------------------------------------------------
# feed-forward network passes
# ----------------------------------------------------------------------------

def mlp_forward_numpy(values, sizes, x):
    """Return the list of layer outputs for a batch ``x`` of shape (n, sizes[0]).

    Hidden layers are post-ReLU; the last entry holds the output logits.
    """
    acts = []
    h = x
    off = 0
    n_layers = len(sizes) - 1
    for k in range(n_layers):
        fi, fo = sizes[k], sizes[k + 1]
        w = values[off:off + fi * fo].reshape(fi, fo)
        off += fi * fo
        bias = values[off:off + fo]
        off += fo
        z = h @ w + bias
        if k < n_layers - 1:
            z = np.maximum(z, 0.0)
        acts.append(z)
        h = z
    return acts


def mlp_backward_numpy(values, sizes, x, acts, d_out):
    """Gradient of ``sum(d_out * logits)`` w.r.t. the flat parameters."""
    grad = np.empty_like(values)
    n_layers = len(sizes) - 1
    offsets = np.zeros(n_layers + 1, dtype=np.int64)
    for k in range(n_layers):
        offsets[k + 1] = offsets[k] + sizes[k] * sizes[k + 1] + sizes[k + 1]
    delta = d_out
    for k in range(n_layers - 1, -1, -1):
        fi, fo = sizes[k], sizes[k + 1]
        off = offsets[k]
        h_in = x if k == 0 else acts[k - 1]
        grad[off:off + fi * fo] = (h_in.T @ delta).ravel()
        grad[off + fi * fo:off + fi * fo + fo] = delta.sum(axis=0)
        if k > 0:
            w = values[off:off + fi * fo].reshape(fi, fo)
            delta = (delta @ w.T) * (acts[k - 1] > 0.0)
    return grad


@njit(cache=True)
def _mlp_forward_flat(values, sizes, x):
    # activations of all non-input layers packed column-wise
    n = x.shape[0]
    n_layers = sizes.shape[0] - 1
    total = 0
    for k in range(1, n_layers + 1):
        total += sizes[k]
    packed = np.empty((n, total))
    h = np.ascontiguousarray(x)
    off = 0
    col = 0
    for k in range(n_layers):
        fi = sizes[k]
        fo = sizes[k + 1]
        w = values[off:off + fi * fo].reshape((fi, fo))
        off += fi * fo
        z = np.dot(h, w)
        for i in range(n):
            for j in range(fo):
                v = z[i, j] + values[off + j]
                if k < n_layers - 1 and v < 0.0:
                    v = 0.0
                z[i, j] = v
                packed[i, col + j] = v
        off += fo
        col += fo
        h = z
    return packed


@njit(cache=True)
def _mlp_backward_flat(values, sizes, x, packed, d_out):
    n = x.shape[0]
    n_layers = sizes.shape[0] - 1
    grad = np.empty_like(values)
    offsets = np.zeros(n_layers + 1, dtype=np.int64)
    cols = np.zeros(n_layers + 1, dtype=np.int64)
    for k in range(n_layers):
        offsets[k + 1] = offsets[k] + sizes[k] * sizes[k + 1] + sizes[k + 1]
        cols[k + 1] = cols[k] + sizes[k + 1]
    delta = np.ascontiguousarray(d_out)
    for k in range(n_layers - 1, -1, -1):
        fi = sizes[k]
        fo = sizes[k + 1]
        off = offsets[k]
        if k == 0:
            h_in = np.ascontiguousarray(x)
        else:
            h_in = np.ascontiguousarray(packed[:, cols[k - 1]:cols[k]])
        gw = np.dot(h_in.T, delta)
        for a in range(fi):
            for j in range(fo):
                grad[off + a * fo + j] = gw[a, j]
        for j in range(fo):
            s = 0.0
            for i in range(n):
                s += delta[i, j]
            grad[off + fi * fo + j] = s
        if k > 0:
            w = values[off:off + fi * fo].reshape((fi, fo))
            prev = np.dot(delta, w.T)
            for i in range(n):
                for a in range(fi):
                    if h_in[i, a] <= 0.0:
                        prev[i, a] = 0.0
            delta = prev
    return grad


def _unpack(packed, sizes):
    acts = []
    col = 0
    for fo in sizes[1:]:
        acts.append(packed[:, col:col + fo])
        col += fo
    return acts


def _pack(acts):
    return np.concatenate(acts, axis=1)


if HAVE_NUMBA:
    interference_numba = _interference_loops
    evaluate_slot_numba = _evaluate_slot_loops

    def mlp_forward_numba(values, sizes, x):
        sizes_arr = np.asarray(sizes, dtype=np.int64)
        packed = _mlp_forward_flat(values, sizes_arr, np.ascontiguousarray(x, dtype=np.float64))
        return _unpack(packed, sizes)

    def mlp_backward_numba(values, sizes, x, acts, d_out):
        sizes_arr = np.asarray(sizes, dtype=np.int64)
        return _mlp_backward_flat(
            values,
            sizes_arr,
            np.ascontiguousarray(x, dtype=np.float64),
            _pack(acts),
            np.ascontiguousarray(d_out, dtype=np.float64),
        )

    interference = interference_numba
    evaluate_slot = evaluate_slot_numba
    mlp_forward = mlp_forward_numba
    mlp_backward = mlp_backward_numba
else:
    interference = interference_numpy
    evaluate_slot = evaluate_slot_numpy
    mlp_forward = mlp_forward_numpy
    mlp_backward = mlp_backward_numpy

__all__ = [
    "BACKEND",
    "evaluate_slot",
    "interference",
    "mlp_backward",
    "mlp_forward",
]
