"""Recurrent sequence classifiers: GRU/LSTM cells, attention pooling, output
head, batched forward pass, backpropagation through time, weight transfer,
and a flat binary checkpoint format.

Shape conventions: inputs are (B, T, D) float64 with a (B, T) boolean mask
that is True on real timesteps; hidden states are (B, H). Single-sequence
entry points accept unbatched arrays and broadcast through the same code.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .numerics import LOG_CLIP, sigmoid, softmax

GATE_GROUPS = {"gru": ("z", "r", "h"), "lstm": ("f", "i", "o", "g")}

CHECKPOINT_MAGIC = b"SEQCLF"
CHECKPOINT_VERSION = 1


@dataclass
class RecurrentCellParams:
    """Gate parameters of one recurrent unit.

    weights holds, per gate group g, the input matrix W_g (H, D), the
    recurrent matrix U_g (H, H) and the bias b_g (H,).
    """

    cell_kind: str
    input_dim: int
    hidden_dim: int
    weights: dict[str, np.ndarray]

    def copy(self) -> "RecurrentCellParams":
        return RecurrentCellParams(
            self.cell_kind,
            self.input_dim,
            self.hidden_dim,
            {k: v.copy() for k, v in self.weights.items()},
        )


@dataclass
class AttentionParams:
    proj_weight: np.ndarray  # (H, H)
    proj_bias: np.ndarray  # (H,)
    score_vector: np.ndarray  # (H,)

    def copy(self) -> "AttentionParams":
        return AttentionParams(
            self.proj_weight.copy(), self.proj_bias.copy(), self.score_vector.copy()
        )


@dataclass
class OutputHead:
    weight: np.ndarray  # (C, H)
    bias: np.ndarray  # (C,)

    def copy(self) -> "OutputHead":
        return OutputHead(self.weight.copy(), self.bias.copy())


@dataclass
class SequenceClassifier:
    cell: RecurrentCellParams
    attention: AttentionParams
    head: OutputHead

    @property
    def input_dim(self) -> int:
        return self.cell.input_dim

    @property
    def hidden_dim(self) -> int:
        return self.cell.hidden_dim

    @property
    def num_classes(self) -> int:
        return self.head.weight.shape[0]

    def parameters(self) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed by dotted name, in a stable order."""
        out: dict[str, np.ndarray] = {}
        for name, arr in self.cell.weights.items():
            out[f"cell.{name}"] = arr
        out["attention.proj_weight"] = self.attention.proj_weight
        out["attention.proj_bias"] = self.attention.proj_bias
        out["attention.score_vector"] = self.attention.score_vector
        out["head.weight"] = self.head.weight
        out["head.bias"] = self.head.bias
        return out

    def set_parameter(self, name: str, value: np.ndarray) -> None:
        group, _, field = name.partition(".")
        if group == "cell":
            if field not in self.cell.weights:
                raise KeyError(name)
            self.cell.weights[field] = value
        elif group == "attention" or group == "head":
            target = self.attention if group == "attention" else self.head
            if not hasattr(target, field):
                raise KeyError(name)
            setattr(target, field, value)
        else:
            raise KeyError(name)

    def copy(self) -> "SequenceClassifier":
        return SequenceClassifier(self.cell.copy(), self.attention.copy(), self.head.copy())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _init_attention(rng: np.random.Generator, hidden_dim: int) -> AttentionParams:
    return AttentionParams(
        proj_weight=_glorot(rng, hidden_dim, hidden_dim, (hidden_dim, hidden_dim)),
        proj_bias=np.zeros(hidden_dim),
        score_vector=_glorot(rng, hidden_dim, 1, (hidden_dim,)),
    )


def _init_head(rng: np.random.Generator, hidden_dim: int, num_classes: int) -> OutputHead:
    return OutputHead(
        weight=_glorot(rng, hidden_dim, num_classes, (num_classes, hidden_dim)),
        bias=np.zeros(num_classes),
    )


def init_params(
    seed: int, input_dim: int, hidden_dim: int, num_classes: int, cell_kind: str = "gru"
) -> SequenceClassifier:
    """Glorot-uniform weights, zero biases, fully determined by the seed.

    Draw order is fixed (gates in declaration order: W then U, then
    attention, then head) so identical seeds give bit-identical models.
    """
    if cell_kind not in GATE_GROUPS:
        raise ValueError(f"unknown cell kind {cell_kind!r}")
    if min(input_dim, hidden_dim) < 1 or num_classes < 2:
        raise ValueError("init_params: dims must be >= 1 and num_classes >= 2")
    rng = np.random.default_rng(seed)
    weights: dict[str, np.ndarray] = {}
    for gate in GATE_GROUPS[cell_kind]:
        weights[f"W_{gate}"] = _glorot(rng, input_dim, hidden_dim, (hidden_dim, input_dim))
        weights[f"U_{gate}"] = _glorot(rng, hidden_dim, hidden_dim, (hidden_dim, hidden_dim))
        weights[f"b_{gate}"] = np.zeros(hidden_dim)
    cell = RecurrentCellParams(cell_kind, input_dim, hidden_dim, weights)
    return SequenceClassifier(
        cell, _init_attention(rng, hidden_dim), _init_head(rng, hidden_dim, num_classes)
    )


def _check_step_dims(cell: RecurrentCellParams, x_t: np.ndarray, h_prev: np.ndarray) -> None:
    if x_t.shape[-1] != cell.input_dim or h_prev.shape[-1] != cell.hidden_dim:
        raise ValueError(
            f"step dims: got x {x_t.shape}, h {h_prev.shape} for cell "
            f"({cell.input_dim}, {cell.hidden_dim})"
        )


def gru_step(cell: RecurrentCellParams, x_t: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """One GRU update: h_t = (1-z)*cand + z*h_prev."""
    _check_step_dims(cell, x_t, h_prev)
    w = cell.weights
    z = sigmoid(x_t @ w["W_z"].T + h_prev @ w["U_z"].T + w["b_z"])
    r = sigmoid(x_t @ w["W_r"].T + h_prev @ w["U_r"].T + w["b_r"])
    cand = np.tanh(x_t @ w["W_h"].T + (r * h_prev) @ w["U_h"].T + w["b_h"])
    return (1.0 - z) * cand + z * h_prev


def lstm_step(
    cell: RecurrentCellParams, x_t: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM update (forget/input/output gates, tanh candidate, no peepholes)."""
    _check_step_dims(cell, x_t, h_prev)
    w = cell.weights
    f = sigmoid(x_t @ w["W_f"].T + h_prev @ w["U_f"].T + w["b_f"])
    i = sigmoid(x_t @ w["W_i"].T + h_prev @ w["U_i"].T + w["b_i"])
    o = sigmoid(x_t @ w["W_o"].T + h_prev @ w["U_o"].T + w["b_o"])
    g = np.tanh(x_t @ w["W_g"].T + h_prev @ w["U_g"].T + w["b_g"])
    c_t = f * c_prev + i * g
    h_t = o * np.tanh(c_t)
    return h_t, c_t


def _attention_forward(attn: AttentionParams, states: np.ndarray, mask: np.ndarray):
    """states (B, T, H), mask (B, T) -> (context (B, H), weights (B, T), u (B, T, H))."""
    u = np.tanh(states @ attn.proj_weight.T + attn.proj_bias)
    scores = u @ attn.score_vector
    scores = np.where(mask, scores, -np.inf)
    shifted = scores - np.max(scores, axis=1, keepdims=True)
    e = np.where(mask, np.exp(shifted), 0.0)
    weights = e / np.sum(e, axis=1, keepdims=True)
    context = np.einsum("bt,bth->bh", weights, states)
    return context, weights, u


def attention_pool(
    hidden_states: np.ndarray, mask: np.ndarray, attn: AttentionParams
) -> tuple[np.ndarray, np.ndarray]:
    """Pool one sequence of hidden states (T, H) into a context vector.

    weights are a softmax over the scores of unmasked steps and exactly 0
    on masked steps. Raises ValueError when every step is masked.
    """
    hidden_states = np.asarray(hidden_states, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("attention_pool: all steps masked")
    context, weights, _ = _attention_forward(attn, hidden_states[None], mask[None])
    return context[0], weights[0]


class _ForwardCache:
    """Intermediates of one batched forward pass, kept for backprop."""

    __slots__ = (
        "inputs", "mask", "mask_f", "states", "cells", "gates",
        "att_weights", "att_u", "context", "logits", "probs",
    )

    def __init__(self):
        self.gates = {}


def _validate_batch(model: SequenceClassifier, inputs: np.ndarray, mask: np.ndarray):
    inputs = np.asarray(inputs, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if inputs.ndim != 3:
        raise ValueError(f"inputs must be (B, T, D), got shape {inputs.shape}")
    if inputs.shape[2] != model.input_dim:
        raise ValueError(
            f"input dim {inputs.shape[2]} does not match model dim {model.input_dim}"
        )
    if mask.shape != inputs.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match inputs {inputs.shape[:2]}")
    if not mask.any(axis=1).all():
        raise ValueError("batch contains an all-masked sample")
    return inputs, mask


def _forward(model: SequenceClassifier, inputs: np.ndarray, mask: np.ndarray) -> _ForwardCache:
    inputs, mask = _validate_batch(model, inputs, mask)
    B, T, _ = inputs.shape
    H = model.hidden_dim
    w = model.cell.weights
    kind = model.cell.cell_kind

    cache = _ForwardCache()
    cache.inputs = inputs
    cache.mask = mask
    cache.mask_f = mask[:, :, None].astype(np.float64)

    # Input projections for every gate over all timesteps in one GEMM each.
    flat = inputs.reshape(B * T, -1)
    xproj = {
        g: (flat @ w[f"W_{g}"].T + w[f"b_{g}"]).reshape(B, T, H) for g in GATE_GROUPS[kind]
    }

    states = np.zeros((B, T + 1, H))
    gates = {g: np.empty((B, T, H)) for g in GATE_GROUPS[kind]}
    if kind == "lstm":
        cells = np.zeros((B, T + 1, H))
        tanh_c = np.empty((B, T, H))
    h = states[:, 0]
    c = None if kind == "gru" else np.zeros((B, H))

    for t in range(T):
        m = cache.mask_f[:, t]
        if kind == "gru":
            z = sigmoid(xproj["z"][:, t] + h @ w["U_z"].T)
            r = sigmoid(xproj["r"][:, t] + h @ w["U_r"].T)
            cand = np.tanh(xproj["h"][:, t] + (r * h) @ w["U_h"].T)
            h_new = (1.0 - z) * cand + z * h
            gates["z"][:, t] = z
            gates["r"][:, t] = r
            gates["h"][:, t] = cand
            h = m * h_new + (1.0 - m) * h
        else:
            f = sigmoid(xproj["f"][:, t] + h @ w["U_f"].T)
            i = sigmoid(xproj["i"][:, t] + h @ w["U_i"].T)
            o = sigmoid(xproj["o"][:, t] + h @ w["U_o"].T)
            g = np.tanh(xproj["g"][:, t] + h @ w["U_g"].T)
            c_new = f * c + i * g
            th = np.tanh(c_new)
            h_new = o * th
            gates["f"][:, t] = f
            gates["i"][:, t] = i
            gates["o"][:, t] = o
            gates["g"][:, t] = g
            tanh_c[:, t] = th
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
            cells[:, t + 1] = c
        states[:, t + 1] = h

    cache.states = states
    cache.gates = gates
    if kind == "lstm":
        cache.cells = cells
        cache.gates["tanh_c"] = tanh_c

    context, att_w, att_u = _attention_forward(model.attention, states[:, 1:], mask)
    cache.att_weights = att_w
    cache.att_u = att_u
    cache.context = context
    cache.logits = context @ model.head.weight.T + model.head.bias
    cache.probs = softmax(cache.logits, axis=1)
    return cache


def model_forward(model: SequenceClassifier, inputs: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Class probabilities (B, C) for a padded batch; each row sums to 1."""
    return _forward(model, inputs, mask).probs


def model_attention_weights(
    model: SequenceClassifier, inputs: np.ndarray, mask: np.ndarray
) -> np.ndarray:
    """Attention weights (B, T) the model assigns to each timestep."""
    return _forward(model, inputs, mask).att_weights


def model_loss(
    model: SequenceClassifier,
    inputs: np.ndarray,
    mask: np.ndarray,
    targets: np.ndarray,
    sample_weights: np.ndarray | None = None,
) -> float:
    """Mean weighted cross-entropy of the batch; the quantity BPTT differentiates."""
    cache = _forward(model, inputs, mask)
    targets = np.asarray(targets)
    picked = cache.probs[np.arange(len(targets)), targets]
    losses = -np.log(np.maximum(picked, LOG_CLIP))
    if sample_weights is not None:
        losses = losses * sample_weights
    return float(np.mean(losses))


def model_backward(
    model: SequenceClassifier,
    inputs: np.ndarray,
    mask: np.ndarray,
    targets: np.ndarray,
    class_weights: np.ndarray | None = None,
    sample_weights: np.ndarray | None = None,
) -> tuple[dict[str, np.ndarray], float, np.ndarray]:
    """Exact gradients of the mean weighted cross-entropy via BPTT.

    class_weights (len num_classes) is expanded per sample through the
    targets; sample_weights (len B) overrides it directly. Returns
    (gradients keyed like parameters(), loss, probabilities).
    """
    targets = np.asarray(targets)
    if targets.min() < 0 or targets.max() >= model.num_classes:
        raise IndexError("model_backward: target out of range")
    if class_weights is not None and sample_weights is not None:
        raise ValueError("pass class_weights or sample_weights, not both")
    if class_weights is not None:
        sample_weights = np.asarray(class_weights, dtype=np.float64)[targets]
    if sample_weights is not None and np.any(np.asarray(sample_weights) <= 0):
        raise ValueError("weights must be positive")

    cache = _forward(model, inputs, mask)
    B, T, _ = cache.inputs.shape
    H = model.hidden_dim
    kind = model.cell.cell_kind
    w = model.cell.weights
    attn = model.attention

    picked = cache.probs[np.arange(B), targets]
    losses = -np.log(np.maximum(picked, LOG_CLIP))
    sw = np.ones(B) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    loss = float(np.mean(losses * sw))

    grads: dict[str, np.ndarray] = {}

    # Head: d(loss)/d(logits) of softmax + cross-entropy.
    dlogits = cache.probs.copy()
    dlogits[np.arange(B), targets] -= 1.0
    dlogits *= (sw / B)[:, None]
    grads["head.weight"] = dlogits.T @ cache.context
    grads["head.bias"] = dlogits.sum(axis=0)
    dcontext = dlogits @ model.head.weight

    # Attention: context = sum_t a_t h_t with a = softmax(tanh(P h + b) . v).
    hs = cache.states[:, 1:]
    a = cache.att_weights
    da = np.einsum("bh,bth->bt", dcontext, hs)
    dstates = a[:, :, None] * dcontext[:, None, :]
    dscores = a * (da - np.sum(a * da, axis=1, keepdims=True))
    du = dscores[:, :, None] * attn.score_vector
    grads["attention.score_vector"] = np.einsum("bt,bth->h", dscores, cache.att_u)
    dpre = du * (1.0 - cache.att_u**2)
    grads["attention.proj_weight"] = np.einsum("bth,btg->hg", dpre, hs)
    grads["attention.proj_bias"] = dpre.sum(axis=(0, 1))
    dstates += dpre @ attn.proj_weight

    # BPTT: walk time backwards, carrying dh (and dc for LSTM). Masked steps
    # were pass-throughs in the forward, so their gradient passes through too.
    d_acts = {g: np.zeros((B, T, H)) for g in GATE_GROUPS[kind]}
    dh_carry = np.zeros((B, H))
    if kind == "lstm":
        dc_carry = np.zeros((B, H))

    for t in range(T - 1, -1, -1):
        m = cache.mask_f[:, t]
        dh = dstates[:, t] + dh_carry
        dh_act = m * dh
        dh_thru = (1.0 - m) * dh
        h_prev = cache.states[:, t]
        if kind == "gru":
            z = cache.gates["z"][:, t]
            r = cache.gates["r"][:, t]
            cand = cache.gates["h"][:, t]
            dz = dh_act * (h_prev - cand)
            dcand = dh_act * (1.0 - z)
            dh_prev = dh_act * z
            da_h = dcand * (1.0 - cand**2)
            drh = da_h @ w["U_h"]
            dh_prev += drh * r
            dr = drh * h_prev
            da_r = dr * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            dh_prev += da_z @ w["U_z"] + da_r @ w["U_r"]
            d_acts["z"][:, t] = da_z
            d_acts["r"][:, t] = da_r
            d_acts["h"][:, t] = da_h
            dh_carry = dh_prev + dh_thru
        else:
            dc = dc_carry
            dc_act = m * dc
            dc_thru = (1.0 - m) * dc
            f = cache.gates["f"][:, t]
            i = cache.gates["i"][:, t]
            o = cache.gates["o"][:, t]
            g = cache.gates["g"][:, t]
            th = cache.gates["tanh_c"][:, t]
            c_prev = cache.cells[:, t]
            do = dh_act * th
            dc_total = dc_act + dh_act * o * (1.0 - th**2)
            da_o = do * o * (1.0 - o)
            da_f = dc_total * c_prev * f * (1.0 - f)
            da_i = dc_total * g * i * (1.0 - i)
            da_g = dc_total * i * (1.0 - g**2)
            dh_prev = da_f @ w["U_f"] + da_i @ w["U_i"] + da_o @ w["U_o"] + da_g @ w["U_g"]
            d_acts["f"][:, t] = da_f
            d_acts["i"][:, t] = da_i
            d_acts["o"][:, t] = da_o
            d_acts["g"][:, t] = da_g
            dh_carry = dh_prev + dh_thru
            dc_carry = dc_total * f + dc_thru

    # Gate weight gradients, accumulated over (batch, time) in single GEMMs.
    flat_x = cache.inputs.reshape(B * T, -1)
    flat_hprev = cache.states[:, :T].reshape(B * T, H)
    for g in GATE_GROUPS[kind]:
        da_flat = d_acts[g].reshape(B * T, H)
        grads[f"cell.W_{g}"] = da_flat.T @ flat_x
        if kind == "gru" and g == "h":
            rh = (cache.gates["r"] * cache.states[:, :T]).reshape(B * T, H)
            grads["cell.U_h"] = da_flat.T @ rh
        else:
            grads[f"cell.U_{g}"] = da_flat.T @ flat_hprev
        grads[f"cell.b_{g}"] = da_flat.sum(axis=0)

    return grads, loss, cache.probs


def transfer_recurrent_weights(
    source: SequenceClassifier,
    num_classes: int,
    seed: int,
    carry_attention: bool = False,
) -> SequenceClassifier:
    """Copy the recurrent-unit parameters into a model with a fresh head.

    The destination head is freshly initialized for num_classes; attention
    is copied only when carry_attention is set, otherwise reinitialized.
    No storage is shared with the source.
    """
    rng = np.random.default_rng(seed)
    cell = source.cell.copy()
    if carry_attention:
        attention = source.attention.copy()
    else:
        attention = _init_attention(rng, source.hidden_dim)
    head = _init_head(rng, source.hidden_dim, num_classes)
    return SequenceClassifier(cell, attention, head)


def save_checkpoint(model: SequenceClassifier, path) -> None:
    """Flat binary checkpoint: header (version, cell kind, dims, classes)
    then named tensors as (name, shape, little-endian float64 data)."""
    params = model.parameters()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        kind = model.cell.cell_kind.encode("ascii")
        fh.write(struct.pack("<B", len(kind)))
        fh.write(kind)
        fh.write(struct.pack("<III", model.input_dim, model.hidden_dim, model.num_classes))
        fh.write(struct.pack("<I", len(params)))
        for name, arr in params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> SequenceClassifier:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: {path}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (kind_len,) = struct.unpack("<B", fh.read(1))
        cell_kind = fh.read(kind_len).decode("ascii")
        input_dim, hidden_dim, num_classes = struct.unpack("<III", fh.read(12))
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64)
            tensors[name] = data.reshape(shape)

    if cell_kind not in GATE_GROUPS:
        raise ValueError(f"checkpoint has unknown cell kind {cell_kind!r}")
    cell_weights = {
        name.partition(".")[2]: arr for name, arr in tensors.items() if name.startswith("cell.")
    }
    model = SequenceClassifier(
        cell=RecurrentCellParams(cell_kind, input_dim, hidden_dim, cell_weights),
        attention=AttentionParams(
            tensors["attention.proj_weight"],
            tensors["attention.proj_bias"],
            tensors["attention.score_vector"],
        ),
        head=OutputHead(tensors["head.weight"], tensors["head.bias"]),
    )
    if model.num_classes != num_classes or model.hidden_dim != hidden_dim:
        raise ValueError("checkpoint header disagrees with tensor shapes")
    return model
