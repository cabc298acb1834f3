"""Sentiment sequence model: embedding lookup, stacked bidirectional GRU,
multi-head bilinear self-attention with output projection, and a dense
sigmoid head. Forward, analytic backward (BPTT), Adam, and training loop.

All arithmetic is float64; everything is deterministic given the seed.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import DataError, ConfigError, FormatError
from .text import PAD_INDEX

MODEL_FORMAT_VERSION = 1

DEEP_PRESET_HIDDEN = (256, 128, 64, 32, 16, 8, 4)
DESK_PRESET_HIDDEN = (32, 16)


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int
    hidden_sizes: tuple = DESK_PRESET_HIDDEN  # per-direction units, one per BiGRU layer
    n_heads: int = 4
    attn_out_dim: int | None = None  # default: attention input width (2 * last hidden)
    max_tokens: int = 32
    train_embeddings: bool = False

    def __post_init__(self):
        if self.vocab_size < 2 or self.embed_dim < 1:
            raise ConfigError("vocab_size >= 2 and embed_dim >= 1 required")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden_sizes must be positive")
        if self.n_heads < 1:
            raise ConfigError("n_heads must be >= 1")
        if self.max_tokens < 1:
            raise ConfigError("max_tokens must be >= 1")

    @property
    def attn_dim(self) -> int:
        return 2 * self.hidden_sizes[-1]

    @property
    def out_dim(self) -> int:
        return self.attn_out_dim if self.attn_out_dim is not None else self.attn_dim


def gru_cell_forward(h_prev, x, w_r, b_r, w_z, b_z, w_h, b_h):
    """One vectorized GRU step on a batch.

    Gates act on the concatenation [h_prev, x]: reset r and update z are
    sigmoid gates, the candidate state uses [r * h_prev, x], and the new state
    interpolates h = (1 - z) * h_prev + z * h_tilde. Returns the new state and
    a cache of intermediates for backpropagation.
    """
    c = np.concatenate([h_prev, x], axis=1)
    r = sigmoid(c @ w_r.T + b_r)
    z = sigmoid(c @ w_z.T + b_z)
    c2 = np.concatenate([r * h_prev, x], axis=1)
    hc = np.tanh(c2 @ w_h.T + b_h)
    h = (1.0 - z) * h_prev + z * hc
    return h, {"h_prev": h_prev, "c": c, "c2": c2, "r": r, "z": z, "hc": hc}


def _glorot(rng, shape):
    fan_in, fan_out = shape[1], shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


class SentimentModel:
    """Parameter container plus forward/backward passes.

    Parameters live in a flat name -> float64 array dict so the optimizer,
    serializer, and finite-difference checks can iterate generically.
    """

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int,
                   embedding: np.ndarray | None = None) -> "SentimentModel":
        rng = np.random.default_rng(seed)
        p: dict[str, np.ndarray] = {}
        if embedding is not None:
            emb = np.asarray(embedding, dtype=np.float64).copy()
            if emb.shape != (config.vocab_size, config.embed_dim):
                raise ConfigError(
                    f"embedding shape {emb.shape} != "
                    f"({config.vocab_size}, {config.embed_dim})")
        else:
            emb = _glorot(rng, (config.vocab_size, config.embed_dim))
            emb[PAD_INDEX] = 0.0
        p["emb"] = emb
        width = config.embed_dim
        for i, h in enumerate(config.hidden_sizes):
            for d in ("f", "b"):
                for gate in ("r", "z", "h"):
                    p[f"gru{i}.{d}.w_{gate}"] = _glorot(rng, (h, h + width))
                    p[f"gru{i}.{d}.b_{gate}"] = np.zeros(h)
            width = 2 * h
        d_att = config.attn_dim
        for k in range(config.n_heads):
            p[f"attn.w_a{k}"] = _glorot(rng, (d_att, d_att))
        p["attn.w_o"] = _glorot(rng, (config.n_heads * d_att, config.out_dim))
        p["dense.w"] = _glorot(rng, (1, config.out_dim))[0]
        p["dense.b"] = np.zeros(1)
        return cls(config, p)

    def trainable_names(self) -> list[str]:
        names = [n for n in self.params if n != "emb"]
        if self.config.train_embeddings:
            names = ["emb"] + names
        return names

    # -- forward ------------------------------------------------------------

    def forward(self, batch: np.ndarray, return_cache: bool = False):
        """Probabilities for a (B, max_tokens) int index batch."""
        batch = np.asarray(batch)
        if batch.ndim != 2 or batch.shape[1] != self.config.max_tokens:
            raise DataError(
                f"batch shape {batch.shape}: sequences must have length "
                f"{self.config.max_tokens}")
        if np.any(batch < 0) or np.any(batch >= self.config.vocab_size):
            raise DataError("token index out of vocabulary range")
        mask = batch != PAD_INDEX  # (B, T)
        if np.any(~mask.any(axis=1)):
            raise DataError("all-PAD sequence: at least one real token required")

        X = self.params["emb"][batch]  # (B, T, D)
        layer_caches = []
        H = X
        for i in range(len(self.config.hidden_sizes)):
            H, cache = self._bigru_forward(i, H)
            layer_caches.append(cache)
        Y, attn_cache = self._attention_forward(H, mask)

        n = mask.sum(axis=1, keepdims=True).astype(np.float64)  # (B, 1)
        pooled = (Y * mask[:, :, None]).sum(axis=1) / n  # (B, out_dim)
        logits = pooled @ self.params["dense.w"] + self.params["dense.b"][0]
        probs = sigmoid(logits)
        if not return_cache:
            return probs
        cache = {"batch": batch, "mask": mask, "n": n, "layers": layer_caches,
                 "attn": attn_cache, "H": H, "pooled": pooled, "probs": probs}
        return probs, cache

    def _gru_forward(self, prefix: str, X: np.ndarray):
        """Unidirectional GRU over X (B, T, D) from a zero initial state."""
        p = self.params
        w_r, w_z, w_h = p[prefix + "w_r"], p[prefix + "w_z"], p[prefix + "w_h"]
        b_r, b_z, b_h = p[prefix + "b_r"], p[prefix + "b_z"], p[prefix + "b_h"]
        B, T, _ = X.shape
        hsize = w_r.shape[0]
        h = np.zeros((B, hsize))
        outs = np.empty((B, T, hsize))
        steps = []
        for t in range(T):
            h, cache = gru_cell_forward(h, X[:, t, :], w_r, b_r, w_z, b_z, w_h, b_h)
            steps.append(cache)
            outs[:, t, :] = h
        return outs, steps

    def _gru_backward(self, prefix: str, steps, dH: np.ndarray, in_dim: int):
        p = self.params
        w_r, w_z, w_h = p[prefix + "w_r"], p[prefix + "w_z"], p[prefix + "w_h"]
        hsize = w_r.shape[0]
        B, T, _ = dH.shape
        grads = {prefix + n: np.zeros_like(p[prefix + n])
                 for n in ("w_r", "w_z", "w_h", "b_r", "b_z", "b_h")}
        dX = np.zeros((B, T, in_dim))
        dh_next = np.zeros((B, hsize))
        for t in range(T - 1, -1, -1):
            s = steps[t]
            dh = dH[:, t, :] + dh_next
            r, z, hc, h_prev = s["r"], s["z"], s["hc"], s["h_prev"]
            dz = dh * (hc - h_prev)
            dhc = dh * z
            dh_prev = dh * (1.0 - z)
            da_h = dhc * (1.0 - hc * hc)
            grads[prefix + "w_h"] += da_h.T @ s["c2"]
            grads[prefix + "b_h"] += da_h.sum(axis=0)
            dc2 = da_h @ w_h
            drh = dc2[:, :hsize]
            dx = dc2[:, hsize:].copy()
            dr = drh * h_prev
            dh_prev += drh * r
            da_r = dr * r * (1.0 - r)
            da_z = dz * z * (1.0 - z)
            grads[prefix + "w_r"] += da_r.T @ s["c"]
            grads[prefix + "b_r"] += da_r.sum(axis=0)
            grads[prefix + "w_z"] += da_z.T @ s["c"]
            grads[prefix + "b_z"] += da_z.sum(axis=0)
            dc = da_r @ w_r + da_z @ w_z
            dh_prev += dc[:, :hsize]
            dx += dc[:, hsize:]
            dX[:, t, :] = dx
            dh_next = dh_prev
        return dX, grads

    def _bigru_forward(self, layer: int, X: np.ndarray):
        outs_f, steps_f = self._gru_forward(f"gru{layer}.f.", X)
        outs_b_rev, steps_b = self._gru_forward(f"gru{layer}.b.", X[:, ::-1, :])
        out = np.concatenate([outs_f, outs_b_rev[:, ::-1, :]], axis=2)
        return out, {"steps_f": steps_f, "steps_b": steps_b, "in_dim": X.shape[2]}

    def _bigru_backward(self, layer: int, cache, dOut: np.ndarray):
        hsize = self.config.hidden_sizes[layer]
        dHf = dOut[:, :, :hsize]
        dHb = dOut[:, :, hsize:]
        dXf, gf = self._gru_backward(f"gru{layer}.f.", cache["steps_f"], dHf,
                                     cache["in_dim"])
        dXb_rev, gb = self._gru_backward(f"gru{layer}.b.", cache["steps_b"],
                                         dHb[:, ::-1, :], cache["in_dim"])
        gf.update(gb)
        return dXf + dXb_rev[:, ::-1, :], gf

    def _attention_forward(self, H: np.ndarray, mask: np.ndarray):
        """Per-head bilinear scores H_i W_a H_j, key-masked row softmax,
        weighted sums concatenated then projected by W^O."""
        cfg = self.config
        w_o = self.params["attn.w_o"]
        heads, cache_heads = [], []
        neg = np.where(mask[:, None, :], 0.0, -np.inf)  # (B, 1, T) key mask
        for k in range(cfg.n_heads):
            w_a = self.params[f"attn.w_a{k}"]
            P = H @ w_a  # (B, T, d)
            S = P @ H.transpose(0, 2, 1) + neg  # (B, T, T)
            S = S - S.max(axis=2, keepdims=True)
            E = np.exp(S)
            A = E / E.sum(axis=2, keepdims=True)
            O = A @ H  # (B, T, d)
            heads.append(O)
            cache_heads.append({"P": P, "A": A})
        M = np.concatenate(heads, axis=2)  # (B, T, K*d)
        Y = M @ w_o
        return Y, {"H": H, "M": M, "heads": cache_heads}

    def _attention_backward(self, cache, dY: np.ndarray):
        cfg = self.config
        H, M = cache["H"], cache["M"]
        w_o = self.params["attn.w_o"]
        d = cfg.attn_dim
        grads = {"attn.w_o": np.einsum("btk,bto->ko", M, dY)}
        dM = dY @ w_o.T
        dH = np.zeros_like(H)
        for k in range(cfg.n_heads):
            w_a = self.params[f"attn.w_a{k}"]
            hc = cache["heads"][k]
            A, P = hc["A"], hc["P"]
            dO = dM[:, :, k * d:(k + 1) * d]
            dA = np.einsum("bid,bjd->bij", dO, H)
            dH += np.einsum("bij,bid->bjd", A, dO)
            dS = A * (dA - (dA * A).sum(axis=2, keepdims=True))
            dP = dS @ H
            dH += np.einsum("bij,bid->bjd", dS, P)
            dH += dP @ w_a.T
            grads[f"attn.w_a{k}"] = np.einsum("btd,bte->de", H, dP)
        return dH, grads

    # -- loss and backward ----------------------------------------------------

    def backward(self, cache, labels: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients of mean BCE loss w.r.t. every trainable parameter."""
        labels = np.asarray(labels, dtype=np.float64)
        probs, mask, n = cache["probs"], cache["mask"], cache["n"]
        B = probs.shape[0]
        if labels.shape != probs.shape:
            raise DataError("labels misaligned with batch")
        dlogit = (probs - labels) / B  # sigmoid + BCE shortcut
        grads: dict[str, np.ndarray] = {}
        grads["dense.w"] = cache["pooled"].T @ dlogit
        grads["dense.b"] = np.array([dlogit.sum()])
        dpooled = np.outer(dlogit, self.params["dense.w"])  # (B, out_dim)
        dY = (dpooled[:, None, :] / n[:, :, None]) * mask[:, :, None]
        dH, attn_grads = self._attention_backward(cache["attn"], dY)
        grads.update(attn_grads)
        for i in range(len(self.config.hidden_sizes) - 1, -1, -1):
            dH, layer_grads = self._bigru_backward(i, cache["layers"][i], dH)
            grads.update(layer_grads)
        if self.config.train_embeddings:
            dE = np.zeros_like(self.params["emb"])
            np.add.at(dE, cache["batch"], dH)
            grads["emb"] = dE
        return grads

    # -- persistence ----------------------------------------------------------

    def vocab_hash(self) -> str:
        return hashlib.sha256(self.params["emb"].tobytes()).hexdigest()[:16]

    def to_json(self) -> str:
        doc = {
            "format_version": MODEL_FORMAT_VERSION,
            "kind": "sentiment",
            "config": {**asdict(self.config),
                       "hidden_sizes": list(self.config.hidden_sizes)},
            "vocabulary_hash": self.vocab_hash(),
            "params": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in self.params.items()
            },
        }
        return json.dumps(doc)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "SentimentModel":
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("format_version") != MODEL_FORMAT_VERSION:
            raise FormatError(f"unsupported model format {doc.get('format_version')}")
        cfg_doc = dict(doc["config"])
        cfg_doc["hidden_sizes"] = tuple(cfg_doc["hidden_sizes"])
        config = ModelConfig(**cfg_doc)
        params = {
            name: np.array(spec["data"], dtype=np.float64).reshape(spec["shape"])
            for name, spec in doc["params"].items()
        }
        return cls(config, params)


def bce_loss(probs: np.ndarray, labels: np.ndarray, eps: float = 1e-12) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise DataError("probs and labels misaligned")
    p = np.clip(probs, eps, 1.0 - eps)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


# -- optimizer ------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], names) -> "AdamState":
        return cls(m={n: np.zeros_like(params[n]) for n in names},
                   v={n: np.zeros_like(params[n]) for n in names})


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total > max_norm and total > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8,
              clip_norm: float | None = None) -> None:
    """In-place bias-corrected Adam update over the names present in grads."""
    if clip_norm is not None:
        clip_global_norm(grads, clip_norm)
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# -- training ---------------------------------------------------------------------


@dataclass
class TrainRun:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    clip_norm: float | None = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise DataError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch size must be >= 1")


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def train_sentiment(model: SentimentModel, X: np.ndarray, y: np.ndarray,
                    run: TrainRun) -> TrainHistory:
    """Mini-batch Adam training; returns per-epoch loss/accuracy history."""
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise DataError("empty training data")
    history = TrainHistory()
    if len(np.unique(y)) < 2:
        history.warnings.append("training data contains a single class")
    rng = np.random.default_rng(run.seed)
    state = AdamState.for_params(model.params, model.trainable_names())
    trainable = set(model.trainable_names())
    for _ in range(run.epochs):
        order = rng.permutation(len(X))
        losses, correct = [], 0
        for start in range(0, len(X), run.batch_size):
            idx = order[start:start + run.batch_size]
            probs, cache = model.forward(X[idx], return_cache=True)
            losses.append(bce_loss(probs, y[idx]) * len(idx))
            correct += int(np.sum((probs >= 0.5).astype(np.float64) == y[idx]))
            grads = model.backward(cache, y[idx])
            grads = {n: g for n, g in grads.items() if n in trainable}
            adam_step(model.params, grads, state, lr=run.learning_rate,
                      beta1=run.beta1, beta2=run.beta2, clip_norm=run.clip_norm)
        history.loss.append(sum(losses) / len(X))
        history.accuracy.append(correct / len(X))
    return history


def predict_sentiment(model: SentimentModel, texts: list[str], pipeline,
                      batch_size: int = 64) -> np.ndarray:
    """Tokenize, encode, pad, and score each text; order preserved."""
    if not texts:
        return np.zeros(0)
    X = pipeline.encode_texts(texts)
    out = np.empty(len(texts))
    for start in range(0, len(texts), batch_size):
        out[start:start + batch_size] = model.forward(X[start:start + batch_size])
    return out
