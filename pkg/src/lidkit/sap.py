"""Self-attentive pooling, classifier head and cross-entropy loss.

Pooling scores each frame's hidden representation tanh(W x_t + b)
against a learnable context vector, softmax-normalizes the scores over
the valid frames, and returns the weighted sum of the raw frames as the
utterance embedding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lidkit.tensor_ops import ShapeError, softmax


@dataclass(frozen=True)
class SapForwardState:
    hidden: np.ndarray  # d_att x T_valid
    scores: np.ndarray  # T_valid
    weights: np.ndarray  # T, zero beyond valid_len
    embedding: np.ndarray  # C
    valid_len: int


def init_sap_params(
    in_channels: int, d_att: int, n_classes: int, seed: int, dtype=np.float32
) -> dict[str, np.ndarray]:
    """Attention projection W/b, context vector, and the classifier head.

    The head is near-zero so an untrained model scores classes uniformly.
    """
    rng = np.random.default_rng(seed)
    return {
        "sap.W": (rng.standard_normal((d_att, in_channels)) * np.sqrt(2.0 / in_channels)).astype(dtype),
        "sap.b": np.zeros(d_att, dtype=dtype),
        "sap.mu": (rng.standard_normal(d_att) * np.sqrt(1.0 / d_att)).astype(dtype),
        "head.W": (rng.standard_normal((n_classes, in_channels)) * 0.01).astype(dtype),
        "head.b": np.zeros(n_classes, dtype=dtype),
    }


def sap_forward(x: np.ndarray, params: dict[str, np.ndarray], valid_len: int | None = None) -> SapForwardState:
    """x: C x T frame features.  Frames at t >= valid_len are excluded."""
    if x.ndim != 2:
        raise ShapeError("sap_forward expects C x T")
    c, t = x.shape
    if valid_len is None:
        valid_len = t
    if not (1 <= valid_len <= t):
        raise ShapeError(f"valid_len {valid_len} out of range for T={t}")
    w_att, b, mu = params["sap.W"], params["sap.b"], params["sap.mu"]
    if w_att.shape[1] != c:
        raise ShapeError(f"attention projection expects {w_att.shape[1]} channels, got {c}")

    xv = x[:, :valid_len]
    hidden = np.tanh(w_att @ xv + b[:, None])  # d_att x Tv
    scores = mu @ hidden  # Tv
    weights = np.zeros(t, dtype=x.dtype)
    weights[:valid_len] = softmax(scores)
    embedding = xv @ weights[:valid_len]
    return SapForwardState(hidden=hidden, scores=scores, weights=weights, embedding=embedding, valid_len=valid_len)


def sap_backward(
    state: SapForwardState, x: np.ndarray, params: dict[str, np.ndarray], grad_e: np.ndarray
):
    """Adjoint of sap_forward.  Padded frames receive zero gradient."""
    v = state.valid_len
    xv = x[:, :v]
    wv = state.weights[:v]
    h = state.hidden
    mu, w_att = params["sap.mu"], params["sap.W"]

    grad_x = np.zeros_like(x)
    grad_x[:, :v] = np.outer(grad_e, wv)  # e = sum_t w_t x_t
    grad_w = xv.T @ grad_e  # per-frame weight grads

    grad_scores = wv * (grad_w - np.dot(grad_w, wv))  # softmax adjoint
    grad_mu = h @ grad_scores
    grad_h = np.outer(mu, grad_scores)
    grad_pre = grad_h * (1.0 - h * h)
    grad_W = grad_pre @ xv.T
    grad_b = grad_pre.sum(axis=1)
    grad_x[:, :v] += w_att.T @ grad_pre

    return grad_x, {"sap.W": grad_W, "sap.b": grad_b, "sap.mu": grad_mu}


def classify(e: np.ndarray, params: dict[str, np.ndarray]) -> np.ndarray:
    """Logits = head.W @ e + head.b."""
    w, b = params["head.W"], params["head.b"]
    if w.shape[1] != e.shape[0]:
        raise ShapeError(f"head expects embedding of size {w.shape[1]}, got {e.shape[0]}")
    return w @ e + b


def classify_backward(e: np.ndarray, params: dict[str, np.ndarray], grad_logits: np.ndarray):
    grad_e = params["head.W"].T @ grad_logits
    return grad_e, {"head.W": np.outer(grad_logits, e), "head.b": grad_logits.copy()}


def cross_entropy(logits: np.ndarray, target_class: int):
    """Returns (loss, grad_logits); loss = -log softmax(logits)[target].

    Computed in log space with max subtraction, so extreme logits stay finite.
    """
    n = logits.shape[0]
    if not (0 <= target_class < n):
        raise IndexError(f"target {target_class} out of range for {n} classes")
    shifted = logits - np.max(logits)
    log_z = np.log(np.sum(np.exp(shifted)))
    loss = float(log_z - shifted[target_class])
    grad = np.exp(shifted - log_z)
    grad[target_class] -= 1.0
    return loss, grad
