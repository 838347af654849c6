"""Central finite-difference verification of every backward pass.

``grad_check`` perturbs each coordinate of each tensor by ±h and compares
the numerical slope against the analytic gradient.  ``run_gradient_suite``
wires a seeded instance of every layer (and the full network at toy dims)
through it; the CLI and the test suite both consume the same list.
"""

from __future__ import annotations

import numpy as np

from . import layers as L


def grad_check(f, params: dict, h: float = 1e-5, sample_per_tensor: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and numerical gradients.

    ``f(params) -> (loss, grads)`` must be deterministic and read the
    arrays in ``params`` by reference, so in-place coordinate pokes are
    visible.  Relative error per coordinate is |a-n| / max(|a|, |n|, 1e-8).
    With ``sample_per_tensor`` set, a seeded subset of coordinates per
    tensor is checked instead of all of them.
    """
    _, grads = f(params)
    worst = 0.0
    for name, theta in params.items():
        flat = theta.reshape(-1)
        g_flat = np.asarray(grads[name]).reshape(-1)
        if sample_per_tensor is None or flat.size <= sample_per_tensor:
            idxs = range(flat.size)
        else:
            idxs = rng.choice(flat.size, size=sample_per_tensor, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = f(params)
            flat[i] = orig - h
            lm, _ = f(params)
            flat[i] = orig
            num = (lp - lm) / (2.0 * h)
            ana = g_flat[i]
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, rel)
    return worst


def _prefix_mask(B, T, rng):
    """Random right-padding mask with at least one valid step per row."""
    lengths = rng.integers(1, T + 1, size=B)
    return np.arange(T)[None, :] < lengths[:, None]


def _check_lstm_cell(rng):
    B, D, H = 3, 4, 5
    params = {
        "x": rng.standard_normal((B, D)),
        "h_prev": rng.standard_normal((B, H)),
        "c_prev": rng.standard_normal((B, H)),
        "W": rng.standard_normal((4 * H, D)) * 0.4,
        "U": rng.standard_normal((4 * H, H)) * 0.4,
        "b": rng.standard_normal(4 * H) * 0.2,
    }
    Rh = rng.standard_normal((B, H))
    Rc = rng.standard_normal((B, H))

    def f(p):
        h, c, cache = L.lstm_cell_forward(p["x"], p["h_prev"], p["c_prev"],
                                          p["W"], p["U"], p["b"])
        loss = float((h * Rh).sum() + (c * Rc).sum())
        dx, dh_prev, dc_prev, dW, dU, db = L.lstm_cell_backward(Rh, Rc, cache)
        return loss, {"x": dx, "h_prev": dh_prev, "c_prev": dc_prev,
                      "W": dW, "U": dU, "b": db}

    return grad_check(f, params)


def _check_stacked_lstm(rng):
    B, T, D, H = 2, 3, 4, 6
    mask = _prefix_mask(B, T, rng)
    params = {
        "x": rng.standard_normal((B, T, D)),
        "W0": rng.standard_normal((4 * H, D)) * 0.4,
        "U0": rng.standard_normal((4 * H, H)) * 0.4,
        "b0": rng.standard_normal(4 * H) * 0.2,
        "W1": rng.standard_normal((4 * H, H)) * 0.4,
        "U1": rng.standard_normal((4 * H, H)) * 0.4,
        "b1": rng.standard_normal(4 * H) * 0.2,
    }
    R = rng.standard_normal((B, T, H))

    def f(p):
        lay = [(p["W0"], p["U0"], p["b0"]), (p["W1"], p["U1"], p["b1"])]
        out, cache = L.stacked_lstm_forward(p["x"], mask, lay)
        loss = float((out * R).sum())
        dx, lg = L.stacked_lstm_backward(R, cache)
        return loss, {"x": dx, "W0": lg[0][0], "U0": lg[0][1], "b0": lg[0][2],
                      "W1": lg[1][0], "U1": lg[1][1], "b1": lg[1][2]}

    return grad_check(f, params)


def _check_attention(rng):
    B, T, D = 3, 5, 4
    mask = _prefix_mask(B, T, rng)
    params = {
        "H": rng.standard_normal((B, T, D)),
        "w_h": rng.standard_normal(D) * 0.5,
        "b_h": rng.standard_normal(1) * 0.2,
    }
    R = rng.standard_normal((B, T))

    def f(p):
        w, cache = L.attention_forward(p["H"], p["w_h"], p["b_h"], mask)
        loss = float((w * R).sum())
        dH, dw_h, db_h = L.attention_backward(R, cache)
        return loss, {"H": dH, "w_h": dw_h, "b_h": db_h}

    return grad_check(f, params)


def _check_reweight(rng):
    B, T, D = 2, 4, 3
    params = {"H": rng.standard_normal((B, T, D)),
              "w": rng.standard_normal((B, T))}
    R = rng.standard_normal((B, T, D))

    def f(p):
        out, cache = L.reweight_forward(p["H"], p["w"])
        loss = float((out * R).sum())
        dH, dw = L.reweight_backward(R, cache)
        return loss, {"H": dH, "w": dw}

    return grad_check(f, params)


def _check_weighted_sum(rng):
    B, T, D = 2, 4, 3
    params = {"H": rng.standard_normal((B, T, D))}
    R = rng.standard_normal((B, D))

    def f(p):
        v, cache = L.weighted_sum_forward(p["H"])
        loss = float((v * R).sum())
        return loss, {"H": L.weighted_sum_backward(R, cache)}

    return grad_check(f, params)


def _check_layer_norm(rng):
    B, D = 3, 6
    params = {
        "x": rng.standard_normal((B, D)),
        "gain": 1.0 + 0.3 * rng.standard_normal(D),
        "bias": 0.3 * rng.standard_normal(D),
    }
    R = rng.standard_normal((B, D))

    def f(p):
        out, cache = L.layer_norm_forward(p["x"], p["gain"], p["bias"])
        loss = float((out * R).sum())
        dx, dgain, dbias = L.layer_norm_backward(R, cache)
        return loss, {"x": dx, "gain": dgain, "bias": dbias}

    return grad_check(f, params)


def _check_dense_lrelu(rng):
    B, Din, Dout = 3, 5, 4
    # keep pre-activations away from the LeakyReLU kink at 0
    x = rng.standard_normal((B, Din))
    params = {
        "x": x,
        "W": rng.standard_normal((Dout, Din)) * 0.5,
        "b": rng.standard_normal(Dout) * 0.5,
    }
    R = rng.standard_normal((B, Dout))

    def f(p):
        z, dcache = L.dense_forward(p["x"], p["W"], p["b"])
        a, acache = L.leaky_relu_forward(z)
        loss = float((a * R).sum())
        dz = L.leaky_relu_backward(R, acache)
        dx, dW, db = L.dense_backward(dz, dcache)
        return loss, {"x": dx, "W": dW, "b": db}

    z0, _ = L.dense_forward(x, params["W"], params["b"])
    if np.any(np.abs(z0) < 1e-3):  # resample-free nudge off the kink
        params["b"] = params["b"] + 0.01
    return grad_check(f, params)


def _check_cross_entropy(rng):
    B = 4
    params = {"logits": rng.standard_normal((B, 2))}
    labels = rng.integers(0, 2, size=B)

    def f(p):
        loss, d = L.cross_entropy(p["logits"], labels)
        return loss, {"logits": d}

    return grad_check(f, params)


def _check_full_model(rng):
    from .. import model as M

    cfg = M.ModelConfig(embed_dim=8, context_len=4, seed=11)
    params = M.init_params(cfg, np.random.default_rng(11))
    examples = M.random_examples(cfg, batch=2, rng=rng)

    def f(p):
        loss, grads, _ = M.loss_and_grads(p, examples, cfg, training=False)
        return loss, grads

    return grad_check(f, params, sample_per_tensor=48, rng=rng)


def run_gradient_suite(seed: int = 0, full_model: bool = True):
    """Gradient-check every layer; returns [(name, max_rel_err), ...]."""
    rng = np.random.default_rng(seed)
    checks = [
        ("lstm_cell", _check_lstm_cell),
        ("stacked_lstm", _check_stacked_lstm),
        ("attention", _check_attention),
        ("reweight", _check_reweight),
        ("weighted_sum", _check_weighted_sum),
        ("layer_norm", _check_layer_norm),
        ("dense_lrelu", _check_dense_lrelu),
        ("cross_entropy", _check_cross_entropy),
    ]
    if full_model:
        checks.append(("full_model", _check_full_model))
    return [(name, fn(rng)) for name, fn in checks]
