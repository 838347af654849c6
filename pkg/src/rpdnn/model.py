"""Context-aware early rumor classifier.

A thread is encoded as three input streams: the source tweet's content
vector (``sc``), the per-reply content vectors (``cc``), and the
per-reply metadata features (``cm``).  Each context stream runs through
its own two-layer forward LSTM; a first attention layer reweights each
branch's timesteps, the reweighted branches are concatenated per
timestep, a second attention layer scores the joint sequence, and the
weighted sum over time gives the context vector.  After layer
normalization it is concatenated with ``sc`` and classified by three
dense LeakyReLU layers with dropout, then a linear map to two logits.

Ablation flags disable streams structurally: a disabled stream's arrays
are never read and its parameters are never created, so perturbing it
cannot change the output.  With attention disabled, the hidden state at
each branch's last valid timestep stands in for the attended summary.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .evaluation import metrics
from .features import N_FEATURES, extract_features, normalize
from .ingest import Thread
from .nn import adagrad_step, he_init, OptimizerState
from .nn import layers as L

# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 1024
    meta_dim: int = N_FEATURES
    context_len: int = 200
    lstm_layers: int = 2
    hidden_multiplier: int = 2
    classifier_dims: tuple[int, ...] | None = None  # None: halving pyramid
    dropout_rates: tuple[float, float, float] = (0.2, 0.3, 0.3)
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 128
    epochs: int = 10
    seed: int = 0
    use_source: bool = True
    use_cc: bool = True
    use_cm: bool = True
    use_attention: bool = True

    def __post_init__(self):
        if not (self.use_source or self.use_cc or self.use_cm):
            raise ConfigError("at least one input stream must be enabled")
        if self.context_len < 1:
            raise ConfigError("context_len must be >= 1")
        if self.lstm_layers < 1:
            raise ConfigError("lstm_layers must be >= 1")
        if len(self.dropout_rates) != 3:
            raise ConfigError("exactly three dropout rates are required")

    @property
    def cc_hidden(self) -> int:
        return self.hidden_multiplier * self.embed_dim

    @property
    def cm_hidden(self) -> int:
        return self.hidden_multiplier * self.meta_dim

    @property
    def uses_context(self) -> bool:
        return self.use_cc or self.use_cm

    @property
    def joint_dim(self) -> int:
        return (self.cc_hidden if self.use_cc else 0) + (
            self.cm_hidden if self.use_cm else 0
        )

    @property
    def classifier_input(self) -> int:
        return (self.embed_dim if self.use_source else 0) + (
            self.joint_dim if self.uses_context else 0
        )

    def classifier_sizes(self) -> tuple[int, ...]:
        if self.classifier_dims is not None:
            return tuple(self.classifier_dims)
        c = self.classifier_input
        return tuple(max(2, c // d) for d in (2, 4, 8))

    def with_variant(self, name: str) -> "ModelConfig":
        if name not in VARIANTS:
            raise ConfigError(f"unknown variant {name!r}; pick one of {sorted(VARIANTS)}")
        return dataclasses.replace(self, **VARIANTS[name])


# The eight input/mechanism combinations the ablation harness runs.
VARIANTS: dict[str, dict] = {
    "full": dict(use_source=True, use_cc=True, use_cm=True, use_attention=True),
    "source-only": dict(use_source=True, use_cc=False, use_cm=False, use_attention=True),
    "no-source": dict(use_source=False, use_cc=True, use_cm=True, use_attention=True),
    "no-cc": dict(use_source=True, use_cc=False, use_cm=True, use_attention=True),
    "no-cm": dict(use_source=True, use_cc=True, use_cm=False, use_attention=True),
    "no-attention": dict(use_source=True, use_cc=True, use_cm=True, use_attention=False),
    "cm-only": dict(use_source=False, use_cc=False, use_cm=True, use_attention=True),
    "cc-only": dict(use_source=False, use_cc=True, use_cm=False, use_attention=True),
}

PROFILES: dict[str, dict] = {
    "paper": {},
    "desk": dict(embed_dim=32, context_len=16, batch_size=16, lr=0.05, epochs=30),
}


def make_config(profile: str = "desk", seed: int = 0, **overrides) -> ModelConfig:
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; pick one of {sorted(PROFILES)}")
    fields = dict(PROFILES[profile])
    fields.update(overrides)
    return ModelConfig(seed=seed, **fields)


# ---------------------------------------------------------------------------
# Encoding


@dataclass(frozen=True)
class EncodedExample:
    thread_id: str
    event: str
    label: int
    sc: np.ndarray  # (E,)
    cc: np.ndarray  # (T, E)
    cm: np.ndarray  # (T, meta_dim)
    mask: np.ndarray  # (T,) bool, prefix-valid


def encode(thread: Thread, stats, provider, cfg: ModelConfig) -> EncodedExample:
    """Turn one thread into padded model inputs.

    Replies beyond ``context_len`` are dropped from the end (the earliest
    context is kept); shorter threads are zero-padded with the mask
    marking real steps.  Metadata rows are normalized with ``stats``,
    which must come from training folds only.
    """
    T = cfg.context_len
    sc = np.asarray(provider(thread.source), dtype=np.float64)
    if sc.shape != (cfg.embed_dim,):
        raise ConfigError(
            f"provider returned dim {sc.shape} for tweet {thread.source.tweet_id}, "
            f"expected ({cfg.embed_dim},)"
        )
    cc = np.zeros((T, cfg.embed_dim))
    cm = np.zeros((T, cfg.meta_dim))
    mask = np.zeros(T, dtype=bool)
    for t, reply in enumerate(thread.replies[:T]):
        cc[t] = provider(reply)
        cm[t] = normalize(extract_features(reply, thread.source), stats).values
        mask[t] = True
    return EncodedExample(
        thread_id=thread.thread_id,
        event=thread.event,
        label=thread.label,
        sc=sc,
        cc=cc,
        cm=cm,
        mask=mask,
    )


def encode_threads(threads, stats, provider, cfg: ModelConfig) -> list[EncodedExample]:
    return [encode(t, stats, provider, cfg) for t in threads]


def random_examples(cfg: ModelConfig, batch: int, rng) -> list[EncodedExample]:
    """Random padded examples at config dims (gradient-check scaffolding)."""
    out = []
    T = cfg.context_len
    for b in range(batch):
        n_valid = int(rng.integers(1, T + 1))
        mask = np.arange(T) < n_valid
        cc = np.zeros((T, cfg.embed_dim))
        cc[:n_valid] = rng.standard_normal((n_valid, cfg.embed_dim))
        cm = np.zeros((T, cfg.meta_dim))
        cm[:n_valid] = rng.standard_normal((n_valid, cfg.meta_dim))
        out.append(
            EncodedExample(
                thread_id=f"rand{b}",
                event="rand",
                label=int(rng.integers(0, 2)),
                sc=rng.standard_normal(cfg.embed_dim),
                cc=cc,
                cm=cm,
                mask=mask,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Parameters


def _branch_dims(cfg: ModelConfig, branch: str) -> tuple[int, int]:
    if branch == "cc":
        return cfg.embed_dim, cfg.cc_hidden
    return cfg.meta_dim, cfg.cm_hidden


def init_params(cfg: ModelConfig, rng) -> dict[str, np.ndarray]:
    """He-initialized weights, zero biases, unit layer-norm gain.

    Only enabled components get parameters, and creation order is fixed,
    so a given (config, seed) pair always produces the same tensors.
    """
    p: dict[str, np.ndarray] = {}

    def lstm_stack(prefix: str, in_dim: int, hidden: int):
        d = in_dim
        for li in range(cfg.lstm_layers):
            p[f"{prefix}_lstm{li}_W"] = he_init((4 * hidden, d), d, rng)
            p[f"{prefix}_lstm{li}_U"] = he_init((4 * hidden, hidden), hidden, rng)
            p[f"{prefix}_lstm{li}_b"] = np.zeros(4 * hidden)
            d = hidden

    for branch in ("cc", "cm"):
        if not getattr(cfg, f"use_{branch}"):
            continue
        in_dim, hidden = _branch_dims(cfg, branch)
        lstm_stack(branch, in_dim, hidden)
        if cfg.use_attention:
            p[f"{branch}_att_w"] = he_init(hidden, hidden, rng)
            p[f"{branch}_att_b"] = np.zeros(1)
    if cfg.uses_context:
        if cfg.use_attention:
            p["joint_att_w"] = he_init(cfg.joint_dim, cfg.joint_dim, rng)
            p["joint_att_b"] = np.zeros(1)
        p["ln_gain"] = np.ones(cfg.joint_dim)
        p["ln_bias"] = np.zeros(cfg.joint_dim)

    d = cfg.classifier_input
    for k, size in enumerate(cfg.classifier_sizes(), start=1):
        p[f"fc{k}_W"] = he_init((size, d), d, rng)
        p[f"fc{k}_b"] = np.zeros(size)
        d = size
    p["out_W"] = he_init((2, d), d, rng)
    p["out_b"] = np.zeros(2)
    return p


# ---------------------------------------------------------------------------
# Forward / backward


@dataclass(frozen=True)
class ForwardTrace:
    logits: np.ndarray  # (B, 2)
    probs: np.ndarray  # (B, 2)
    att_cc: np.ndarray | None = None  # (B, T)
    att_cm: np.ndarray | None = None
    att_joint: np.ndarray | None = None


def _assemble(examples, cfg: ModelConfig):
    """Stack per-example arrays; disabled streams are never touched."""
    mask = np.stack([e.mask for e in examples])
    return {
        "sc": np.stack([e.sc for e in examples]) if cfg.use_source else None,
        "cc": np.stack([e.cc for e in examples]) if cfg.use_cc else None,
        "cm": np.stack([e.cm for e in examples]) if cfg.use_cm else None,
        "mask": mask,
        "labels": np.array([e.label for e in examples], dtype=int),
    }


def _lstm_layer_params(p, prefix: str, n_layers: int):
    return [
        (p[f"{prefix}_lstm{li}_W"], p[f"{prefix}_lstm{li}_U"], p[f"{prefix}_lstm{li}_b"])
        for li in range(n_layers)
    ]


def _forward(p, arrays, cfg: ModelConfig, training: bool, rng):
    mask = arrays["mask"]
    B = mask.shape[0]
    caches: dict = {}
    trace_att: dict = {}
    branch_states = []  # per enabled branch: (name, lstm out (B,T,H))
    for branch in ("cc", "cm"):
        if arrays[branch] is None:
            continue
        seq, lstm_cache = L.stacked_lstm_forward(
            arrays[branch], mask, _lstm_layer_params(p, branch, cfg.lstm_layers),
            name=f"{branch}_lstm",
        )
        caches[f"{branch}_lstm"] = lstm_cache
        branch_states.append((branch, seq))

    v = None
    if branch_states:
        if cfg.use_attention:
            parts = []
            for branch, seq in branch_states:
                w, att_cache = L.attention_forward(
                    seq, p[f"{branch}_att_w"], p[f"{branch}_att_b"], mask,
                    name=f"{branch}_attention",
                )
                renew, rw_cache = L.reweight_forward(seq, w)
                caches[f"{branch}_att"] = att_cache
                caches[f"{branch}_rw"] = rw_cache
                trace_att[branch] = w
                parts.append(renew)
            joint = parts[0] if len(parts) == 1 else np.concatenate(parts, axis=2)
            w_joint, att_j = L.attention_forward(
                joint, p["joint_att_w"], p["joint_att_b"], mask, name="joint_attention"
            )
            joint_new, rw_j = L.reweight_forward(joint, w_joint)
            v, ws_cache = L.weighted_sum_forward(joint_new)
            caches["joint_att"] = att_j
            caches["joint_rw"] = rw_j
            caches["ws"] = ws_cache
            trace_att["joint"] = w_joint
        else:
            last = mask.sum(axis=1) - 1
            if (last < 0).any():
                raise NumericalError("context branch: example with no valid steps")
            v = np.concatenate(
                [seq[np.arange(B), last] for _, seq in branch_states], axis=1
            )
            caches["last_idx"] = last
        v, ln_cache = L.layer_norm_forward(v, p["ln_gain"], p["ln_bias"])
        caches["ln"] = ln_cache

    if arrays["sc"] is not None and v is not None:
        rep = np.concatenate([arrays["sc"], v], axis=1)
    elif arrays["sc"] is not None:
        rep = arrays["sc"]
    else:
        rep = v

    h = rep
    fc_caches = []
    for k, rate in enumerate(cfg.dropout_rates, start=1):
        z, dense_cache = L.dense_forward(h, p[f"fc{k}_W"], p[f"fc{k}_b"], name=f"fc{k}")
        a, act_cache = L.leaky_relu_forward(z)
        h, drop_cache = L.dropout_forward(a, rate, training, rng)
        fc_caches.append((dense_cache, act_cache, drop_cache))
    logits, out_cache = L.dense_forward(h, p["out_W"], p["out_b"], name="output")
    caches["fc"] = fc_caches
    caches["out"] = out_cache
    caches["branches"] = [b for b, _ in branch_states]
    caches["shapes"] = {b: seq.shape for b, seq in branch_states}
    return logits, caches, trace_att


def forward(
    params, examples, cfg: ModelConfig, training: bool = False, rng=None
) -> ForwardTrace:
    arrays = _assemble(examples, cfg)
    logits, _, trace_att = _forward(params, arrays, cfg, training, rng)
    return ForwardTrace(
        logits=logits,
        probs=L.softmax(logits),
        att_cc=trace_att.get("cc"),
        att_cm=trace_att.get("cm"),
        att_joint=trace_att.get("joint"),
    )


def loss_and_grads(params, examples, cfg: ModelConfig, training: bool = True, rng=None):
    """Full forward plus hand-derived backward; returns (loss, grads, trace)."""
    arrays = _assemble(examples, cfg)
    logits, caches, trace_att = _forward(params, arrays, cfg, training, rng)
    loss, d_logits = L.cross_entropy(logits, arrays["labels"])
    grads: dict[str, np.ndarray] = {}

    d_h, grads["out_W"], grads["out_b"] = L.dense_backward(d_logits, caches["out"])
    for k in (3, 2, 1):
        dense_cache, act_cache, drop_cache = caches["fc"][k - 1]
        d_a = L.dropout_backward(d_h, drop_cache)
        d_z = L.leaky_relu_backward(d_a, act_cache)
        d_h, grads[f"fc{k}_W"], grads[f"fc{k}_b"] = L.dense_backward(d_z, dense_cache)
    d_rep = d_h

    branches = caches["branches"]
    if branches:
        d_v = d_rep[:, cfg.embed_dim :] if cfg.use_source else d_rep
        d_v, grads["ln_gain"], grads["ln_bias"] = L.layer_norm_backward(
            d_v, caches["ln"]
        )
        if cfg.use_attention:
            d_joint_new = L.weighted_sum_backward(d_v, caches["ws"])
            d_joint, d_w_joint = L.reweight_backward(d_joint_new, caches["joint_rw"])
            d_joint_att, grads["joint_att_w"], grads["joint_att_b"] = (
                L.attention_backward(d_w_joint, caches["joint_att"])
            )
            d_joint = d_joint + d_joint_att
            offset = 0
            for branch in branches:
                width = caches["shapes"][branch][2]
                d_part = d_joint[:, :, offset : offset + width]
                offset += width
                d_seq, d_w = L.reweight_backward(d_part, caches[f"{branch}_rw"])
                d_seq_att, grads[f"{branch}_att_w"], grads[f"{branch}_att_b"] = (
                    L.attention_backward(d_w, caches[f"{branch}_att"])
                )
                _backprop_lstm(
                    d_seq + d_seq_att, caches[f"{branch}_lstm"], branch, grads, cfg
                )
        else:
            last = caches["last_idx"]
            B = last.shape[0]
            offset = 0
            for branch in branches:
                shape = caches["shapes"][branch]
                d_seq = np.zeros(shape)
                d_seq[np.arange(B), last] = d_v[:, offset : offset + shape[2]]
                offset += shape[2]
                _backprop_lstm(d_seq, caches[f"{branch}_lstm"], branch, grads, cfg)

    if set(grads) != set(params):
        missing = set(params) ^ set(grads)
        raise NumericalError(f"gradient bookkeeping mismatch for: {sorted(missing)}")
    return loss, grads, ForwardTrace(
        logits=logits,
        probs=L.softmax(logits),
        att_cc=trace_att.get("cc"),
        att_cm=trace_att.get("cm"),
        att_joint=trace_att.get("joint"),
    )


def _backprop_lstm(d_seq, lstm_cache, branch: str, grads: dict, cfg: ModelConfig):
    _, layer_grads = L.stacked_lstm_backward(d_seq, lstm_cache)
    for li, (dW, dU, db) in enumerate(layer_grads):
        grads[f"{branch}_lstm{li}_W"] = dW
        grads[f"{branch}_lstm{li}_U"] = dU
        grads[f"{branch}_lstm{li}_b"] = db


# ---------------------------------------------------------------------------
# Training and prediction


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    loss: float
    train_acc: float
    holdout_acc: float  # nan when no holdout set


def predict(examples, params, cfg: ModelConfig):
    """Argmax labels, probabilities, and attention traces (dropout off)."""
    bs = max(1, cfg.batch_size)
    chunks = [examples[i : i + bs] for i in range(0, len(examples), bs)]
    traces = [forward(params, chunk, cfg, training=False) for chunk in chunks]

    def cat(attr):
        vals = [getattr(t, attr) for t in traces]
        return None if any(v is None for v in vals) else np.concatenate(vals)

    trace = ForwardTrace(
        logits=cat("logits"),
        probs=cat("probs"),
        att_cc=cat("att_cc"),
        att_cm=cat("att_cm"),
        att_joint=cat("att_joint"),
    )
    labels = trace.probs.argmax(axis=1)
    return labels, trace.probs, trace


def _accuracy(examples, params, cfg) -> float:
    if not examples:
        return float("nan")
    labels, _, _ = predict(examples, params, cfg)
    golds = np.array([e.label for e in examples])
    return float((labels == golds).mean())


def train(
    train_set,
    holdout_set,
    cfg: ModelConfig,
    *,
    stop_at_train_acc: float | None = None,
    stop_at_holdout_acc: float | None = None,
    keep_best: bool = False,
    on_epoch=None,
):
    """Seeded AdaGrad training; returns (params, [EpochLog, ...]).

    ``keep_best`` returns the checkpoint with the best holdout F1 instead
    of the final epoch's parameters.  The two stop thresholds end
    training early once the respective accuracy is reached.
    """
    if not train_set:
        raise ConfigError("empty training set")
    root = np.random.SeedSequence(cfg.seed)
    init_ss, shuffle_ss, dropout_ss = root.spawn(3)
    params = init_params(cfg, np.random.default_rng(init_ss))
    state = OptimizerState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    shuffle_rng = np.random.default_rng(shuffle_ss)
    dropout_rng = np.random.default_rng(dropout_ss)
    logs: list[EpochLog] = []
    best_f1 = -1.0
    best_params = None
    holdout_golds = np.array([e.label for e in holdout_set]) if holdout_set else None

    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(len(train_set))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            loss, grads, _ = loss_and_grads(
                params, batch, cfg, training=True, rng=dropout_rng
            )
            adagrad_step(params, grads, state)
            total += loss * len(batch)
        train_acc = _accuracy(train_set, params, cfg)
        holdout_acc = _accuracy(holdout_set, params, cfg)
        row = EpochLog(
            epoch=epoch,
            loss=total / len(train_set),
            train_acc=train_acc,
            holdout_acc=holdout_acc,
        )
        logs.append(row)
        if on_epoch is not None:
            on_epoch(row)
        if keep_best and holdout_set:
            preds, _, _ = predict(holdout_set, params, cfg)
            f1 = metrics(preds, holdout_golds)["f1"]
            if f1 > best_f1:
                best_f1 = f1
                best_params = {k: v.copy() for k, v in params.items()}
        if stop_at_train_acc is not None and train_acc >= stop_at_train_acc:
            break
        if (
            stop_at_holdout_acc is not None
            and holdout_set
            and holdout_acc >= stop_at_holdout_acc
        ):
            break
    if keep_best and best_params is not None:
        return best_params, logs
    return params, logs
