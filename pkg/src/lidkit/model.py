"""Full model: encoder + self-attentive pooling + classifier head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lidkit.encoder import EncoderConfig, build_encoder, encoder_backward, encoder_forward
from lidkit.features import FeatureMap
from lidkit.sap import classify, classify_backward, cross_entropy, init_sap_params, sap_backward, sap_forward
from lidkit.tensor_ops import softmax

D_ATT_DEFAULT = 256


@dataclass
class Model:
    encoder_cfg: EncoderConfig
    d_att: int
    labels: list[str]
    params: dict[str, np.ndarray]
    state: dict[str, np.ndarray]
    step: int = 0

    @property
    def n_classes(self) -> int:
        return len(self.labels)


def build_model(
    encoder_cfg: EncoderConfig, labels: list[str], seed: int, d_att: int = D_ATT_DEFAULT, dtype=np.float32
) -> Model:
    enc_params, enc_state = build_encoder(encoder_cfg, seed, dtype=dtype)
    params = {f"enc.{k}": v for k, v in enc_params.items()}
    params.update(init_sap_params(encoder_cfg.out_channels, d_att, len(labels), seed + 1, dtype=dtype))
    state = {f"enc.{k}": v for k, v in enc_state.items()}
    return Model(encoder_cfg=encoder_cfg, d_att=d_att, labels=list(labels), params=params, state=state)


def _enc_view(params: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {k[4:]: v for k, v in params.items() if k.startswith("enc.")}


def batch_from_features(maps: list[FeatureMap], dtype=np.float32):
    """Zero-pad T x F maps to a common length; returns (N, F, T_max) and valid lengths."""
    t_max = max(fm.n_frames for fm in maps)
    n = len(maps)
    f = maps[0].n_bins
    x = np.zeros((n, f, t_max), dtype=dtype)
    valid = np.zeros(n, dtype=np.int64)
    for i, fm in enumerate(maps):
        x[i, :, : fm.n_frames] = fm.data.T
        valid[i] = fm.n_frames
    return x, valid


def model_forward(
    model: Model,
    x: np.ndarray,
    valid_lens,
    targets=None,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
):
    """Forward over a padded batch.

    Returns (logits (N, n_classes), mean loss or None, cache for backward).
    """
    enc_params = _enc_view(model.params)
    enc_state = {k[4:]: v for k, v in model.state.items()}
    frames, enc_cache = encoder_forward(
        model.encoder_cfg, enc_params, enc_state, x, mode=mode, rng=rng, valid_lens=valid_lens
    )
    for k, v in enc_state.items():  # write back updated running stats
        model.state[f"enc.{k}"] = v

    n = x.shape[0]
    logits = np.zeros((n, model.n_classes), dtype=x.dtype)
    sap_states = []
    losses = np.zeros(n, dtype=np.float64)
    grad_logits = np.zeros_like(logits)
    for i in range(n):
        st = sap_forward(frames[i], model.params, int(valid_lens[i]) if valid_lens is not None else None)
        sap_states.append(st)
        logits[i] = classify(st.embedding, model.params)
        if targets is not None:
            losses[i], grad_logits[i] = cross_entropy(logits[i], int(targets[i]))
    loss = float(losses.mean()) if targets is not None else None
    cache = (frames, enc_cache, sap_states, grad_logits if targets is not None else None)
    return logits, loss, cache


def model_backward(model: Model, cache):
    """Gradients of the mean cross-entropy; call after a train-mode forward."""
    frames, enc_cache, sap_states, grad_logits = cache
    if grad_logits is None:
        raise RuntimeError("backward requires a forward pass with targets")
    n = len(sap_states)
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    grad_frames = np.zeros_like(frames)
    for i in range(n):
        gl = grad_logits[i] / n  # mean reduction over the batch
        grad_e, head_grads = classify_backward(sap_states[i].embedding, model.params, gl)
        grad_x, sap_grads = sap_backward(sap_states[i], frames[i], model.params, grad_e)
        grad_frames[i] = grad_x
        for k, v in head_grads.items():
            grads[k] += v
        for k, v in sap_grads.items():
            grads[k] += v
    enc_params = _enc_view(model.params)
    _, enc_grads = encoder_backward(enc_params, enc_cache, grad_frames)
    for k, v in enc_grads.items():
        grads[f"enc.{k}"] = v
    return grads


def predict(model: Model, fm: FeatureMap):
    """Eval-mode prediction for one utterance.

    Returns (label, posterior over labels, attention profile of length T).
    """
    x, valid = batch_from_features([fm])
    logits, _, cache = model_forward(model, x, valid, mode="eval")
    posterior = softmax(logits[0])
    idx = int(np.argmax(posterior))  # argmax takes the lowest index on ties
    attention = cache[2][0].weights
    return model.labels[idx], posterior, attention
