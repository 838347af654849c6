"""Dense numeric kernel with hand-derived backward passes.

Every op follows the same shape: ``forward`` returns ``(out, cache)`` and
``backward`` consumes the upstream gradient plus that cache.  All math is
float64; any NaN/Inf in a forward output raises NumericalError naming the
layer.  Sequences are right-padded and carry a boolean mask (True = valid
step); padded steps must never influence any output.
"""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{name}: non-finite values in forward output")
    return arr


def sigmoid(x):
    # split by sign to avoid exp overflow on large negatives
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# ---------------------------------------------------------------------------
# LSTM


def lstm_cell_forward(x, h_prev, c_prev, W, U, b):
    """One LSTM step for a batch.

    x: (B, D); h_prev, c_prev: (B, H); W: (4H, D); U: (4H, H); b: (4H,).
    Gate order along the 4H axis is input, forget, cell candidate, output.
    """
    H = h_prev.shape[1]
    z = x @ W.T + h_prev @ U.T + b
    i = sigmoid(z[:, 0 * H : 1 * H])
    f = sigmoid(z[:, 1 * H : 2 * H])
    g = np.tanh(z[:, 2 * H : 3 * H])
    o = sigmoid(z[:, 3 * H : 4 * H])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    cache = (x, h_prev, c_prev, W, U, i, f, g, o, c)
    return h, c, cache


def lstm_cell_backward(dh, dc, cache):
    """Backprop one step; returns (dx, dh_prev, dc_prev, dW, dU, db)."""
    x, h_prev, c_prev, W, U, i, f, g, o, c = cache
    tanh_c = np.tanh(c)
    do = dh * tanh_c
    dc_total = dc + dh * o * (1.0 - tanh_c * tanh_c)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    dz = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ],
        axis=1,
    )
    dW = dz.T @ x
    dU = dz.T @ h_prev
    db = dz.sum(axis=0)
    dx = dz @ W
    dh_prev = dz @ U
    return dx, dh_prev, dc_prev, dW, dU, db


def stacked_lstm_forward(x, mask, layers, name="stacked_lstm"):
    """Run a forward-only LSTM stack over a padded batch.

    x: (B, T, D); mask: (B, T) bool; layers: list of (W, U, b) tuples.
    Masked steps carry h and c through unchanged and emit zero output, so
    padded inputs cannot leak into any later state.  Returns (out, cache)
    with out (B, T, H_last).
    """
    B, T, _ = x.shape
    seq = x
    per_layer = []
    for W, U, b in layers:
        H = U.shape[1]
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        out = np.zeros((B, T, H))
        step_caches = []
        for t in range(T):
            m = mask[:, t : t + 1]
            h_new, c_new, cc = lstm_cell_forward(seq[:, t, :], h, c, W, U, b)
            h = np.where(m, h_new, h)
            c = np.where(m, c_new, c)
            out[:, t, :] = np.where(m, h_new, 0.0)
            step_caches.append(cc)
        per_layer.append((step_caches, seq))
        seq = out
    check_finite(name, seq)
    return seq, (per_layer, mask)


def stacked_lstm_backward(d_out, cache):
    """Returns (dx, [(dW, dU, db) per layer])."""
    per_layer, mask = cache
    d_seq = d_out
    layer_grads = [None] * len(per_layer)
    for li in range(len(per_layer) - 1, -1, -1):
        step_caches, layer_in = per_layer[li]
        B, T, _ = layer_in.shape
        W = step_caches[0][3]
        U = step_caches[0][4]
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros(W.shape[0])
        dx = np.zeros_like(layer_in)
        dh_carry = np.zeros((B, U.shape[1]))
        dc_carry = np.zeros((B, U.shape[1]))
        for t in range(T - 1, -1, -1):
            m = mask[:, t : t + 1].astype(np.float64)
            # cell outputs reach downstream only where the step is valid;
            # elsewhere the carried state bypasses the cell entirely
            dh_new = m * (dh_carry + d_seq[:, t, :])
            dc_new = m * dc_carry
            dxt, dh_prev, dc_prev, dWt, dUt, dbt = lstm_cell_backward(
                dh_new, dc_new, step_caches[t]
            )
            dW += dWt
            dU += dUt
            db += dbt
            dx[:, t, :] = dxt
            dh_carry = dh_prev + (1.0 - m) * dh_carry
            dc_carry = dc_prev + (1.0 - m) * dc_carry
        layer_grads[li] = (dW, dU, db)
        d_seq = dx
    return d_seq, layer_grads


# ---------------------------------------------------------------------------
# Attention primitives


def masked_softmax_forward(scores, mask, name="masked_softmax"):
    """Softmax over valid steps only; padded entries get weight exactly 0.

    scores: (B, T); mask: (B, T) bool with at least one True per row.
    Stabilized by subtracting the per-row max over valid entries.
    """
    if not mask.any(axis=1).all():
        raise NumericalError(f"{name}: row with no valid steps")
    neg = np.where(mask, scores, -np.inf)
    vmax = neg.max(axis=1, keepdims=True)
    z = np.where(mask, scores - vmax, 0.0)
    e = np.exp(z) * mask
    denom = e.sum(axis=1, keepdims=True)
    w = e / denom
    check_finite(name, w)
    return w, (w,)


def masked_softmax_backward(d_w, cache):
    (w,) = cache
    # padded entries have w = 0, so their gradient is exactly 0 as well
    return w * (d_w - (d_w * w).sum(axis=1, keepdims=True))


def attention_forward(H, w_h, b_h, mask, name="attention"):
    """Scalar score per timestep, tanh-squashed, then masked softmax.

    H: (B, T, D); w_h: (D,); b_h: (1,).  Returns weights (B, T).
    """
    s = np.tanh(H @ w_h + b_h[0])
    weights, sm_cache = masked_softmax_forward(s, mask, name=name)
    return weights, (H, w_h, s, sm_cache)


def attention_backward(d_weights, cache):
    """Returns (dH, dw_h, db_h)."""
    H, w_h, s, sm_cache = cache
    ds = masked_softmax_backward(d_weights, sm_cache)
    dpre = ds * (1.0 - s * s)
    dH = dpre[:, :, None] * w_h[None, None, :]
    dw_h = np.einsum("bt,btd->d", dpre, H)
    db_h = np.array([dpre.sum()])
    return dH, dw_h, db_h


def reweight_forward(H, weights):
    """Scale each timestep state by its attention weight: (B,T,D)*(B,T)."""
    return H * weights[:, :, None], (H, weights)


def reweight_backward(d_out, cache):
    H, weights = cache
    dH = d_out * weights[:, :, None]
    d_weights = (d_out * H).sum(axis=2)
    return dH, d_weights


def weighted_sum_forward(H_new):
    """Sum the already-reweighted states over time: (B,T,D) -> (B,D)."""
    return H_new.sum(axis=1), (H_new.shape,)


def weighted_sum_backward(d_v, cache):
    (shape,) = cache
    return np.broadcast_to(d_v[:, None, :], shape).copy()


# ---------------------------------------------------------------------------
# Feedforward pieces

LN_EPS = 1e-5


def layer_norm_forward(x, gain, bias, name="layer_norm"):
    """Per-row normalization over features, then learned affine."""
    mu = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    out = gain * xhat + bias
    check_finite(name, out)
    return out, (xhat, inv, gain)


def layer_norm_backward(d_out, cache):
    """Returns (dx, dgain, dbias)."""
    xhat, inv, gain = cache
    D = xhat.shape[1]
    dgain = (d_out * xhat).sum(axis=0)
    dbias = d_out.sum(axis=0)
    dxhat = d_out * gain
    dx = (
        inv
        / D
        * (
            D * dxhat
            - dxhat.sum(axis=1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=1, keepdims=True)
        )
    )
    return dx, dgain, dbias


def dense_forward(x, W, b, name="dense"):
    """Affine map: x (B, Din) @ W.T (Din, Dout) + b."""
    out = x @ W.T + b
    check_finite(name, out)
    return out, (x, W)


def dense_backward(d_out, cache):
    x, W = cache
    return d_out @ W, d_out.T @ x, d_out.sum(axis=0)


LRELU_SLOPE = 0.01


def leaky_relu_forward(x, slope=LRELU_SLOPE):
    return np.where(x >= 0, x, slope * x), (x, slope)


def leaky_relu_backward(d_out, cache):
    x, slope = cache
    return d_out * np.where(x >= 0, 1.0, slope)


def dropout_forward(x, rate, training, rng):
    """Inverted dropout: survivors are scaled so E[out] = x during training."""
    if not training or rate == 0.0:
        return x, (None, 1.0)
    if rng is None:
        raise NumericalError("dropout: training-mode call without an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, (keep, rate)


def dropout_backward(d_out, cache):
    keep, _ = cache
    if keep is None:
        return d_out
    return d_out * keep


# ---------------------------------------------------------------------------
# Loss


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy over the batch.

    Returns (loss, d_logits) with d_logits = (softmax - onehot) / B,
    computed in the log-sum-exp form so confident predictions stay finite.
    """
    B = logits.shape[0]
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    lse = np.log(np.exp(z).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(B), labels]))
    p = softmax(logits)
    p[np.arange(B), labels] -= 1.0
    check_finite("cross_entropy", p)
    return loss, p / B
