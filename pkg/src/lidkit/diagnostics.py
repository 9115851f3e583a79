"""Finite-difference verification of every layer and the full composite.

Each check builds a scalar loss from one primitive (or the whole
encoder + pooling + cross-entropy stack), computes analytic gradients via
the layer's backward pass, and compares against 64-bit central
differences.  Used by the test suite and the ``gradcheck`` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lidkit import tensor_ops as T
from lidkit.encoder import EncoderConfig, build_encoder, encoder_backward, encoder_forward
from lidkit.gradcheck import finite_diff_check
from lidkit.sap import classify, classify_backward, cross_entropy, init_sap_params, sap_backward, sap_forward

ELEMENTWISE_TOL = 1e-5
COMPOSITE_TOL = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_err: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _away_from_kinks(x: np.ndarray, eps: float = 1e-2) -> np.ndarray:
    # keep ReLU's nondifferentiable point outside the finite-difference step
    return np.where(np.abs(x) < eps, eps * np.sign(x) + (x == 0) * eps, x)


def check_linear(rng: np.random.Generator) -> CheckResult:
    inputs = {
        "x": rng.standard_normal(4),
        "w": rng.standard_normal((3, 4)),
        "b": rng.standard_normal(3),
    }
    probe = rng.standard_normal(3)

    def loss(d):
        return float(np.dot(probe, T.linear(d["x"], d["w"], d["b"])))

    def grads(d):
        gx, gw, gb = T.linear_backward(probe, d["x"], d["w"])
        return {"x": gx, "w": gw, "b": gb}

    return CheckResult("linear", finite_diff_check(loss, grads, inputs), ELEMENTWISE_TOL)


def check_relu(rng: np.random.Generator) -> CheckResult:
    x = _away_from_kinks(rng.standard_normal((3, 4)))
    probe = rng.standard_normal((3, 4))

    def loss(d):
        return float(np.sum(probe * T.relu(d["x"])))

    def grads(d):
        return {"x": T.relu_backward(probe, d["x"])}

    return CheckResult("relu", finite_diff_check(loss, grads, {"x": x}), ELEMENTWISE_TOL)


def check_tanh(rng: np.random.Generator) -> CheckResult:
    x = rng.standard_normal((3, 4))
    probe = rng.standard_normal((3, 4))

    def loss(d):
        return float(np.sum(probe * T.tanh_map(d["x"])))

    def grads(d):
        return {"x": T.tanh_backward(probe, T.tanh_map(d["x"]))}

    return CheckResult("tanh", finite_diff_check(loss, grads, {"x": x}), 1e-6)


def check_softmax(rng: np.random.Generator) -> CheckResult:
    x = rng.standard_normal(5)
    probe = rng.standard_normal(5)

    def loss(d):
        return float(np.dot(probe, T.softmax(d["x"])))

    def grads(d):
        return {"x": T.softmax_backward(probe, T.softmax(d["x"]))}

    return CheckResult("softmax", finite_diff_check(loss, grads, {"x": x}), ELEMENTWISE_TOL)


def check_dropout(rng: np.random.Generator) -> CheckResult:
    x = rng.standard_normal((3, 4))
    probe = rng.standard_normal((3, 4))
    mask_rng_seed = int(rng.integers(0, 2**32))
    _, mask = T.dropout(x, 0.4, np.random.default_rng(mask_rng_seed), "train")

    def loss(d):
        return float(np.sum(probe * d["x"] * mask))  # fixed mask: dropout is linear

    def grads(d):
        return {"x": T.dropout_backward(probe, mask)}

    return CheckResult("dropout", finite_diff_check(loss, grads, {"x": x}), ELEMENTWISE_TOL)


def check_conv_depthwise(rng: np.random.Generator) -> CheckResult:
    inputs = {"x": rng.standard_normal((2, 3, 6)), "k": rng.standard_normal((3, 5))}
    probe = rng.standard_normal((2, 3, 6))

    def loss(d):
        return float(np.sum(probe * T.conv1d_depthwise(d["x"], d["k"])))

    def grads(d):
        gx, gk = T.conv1d_depthwise_backward(probe, d["x"], d["k"])
        return {"x": gx, "k": gk}

    return CheckResult("conv1d_depthwise", finite_diff_check(loss, grads, inputs), ELEMENTWISE_TOL)


def check_conv_pointwise(rng: np.random.Generator) -> CheckResult:
    inputs = {
        "x": rng.standard_normal((2, 3, 5)),
        "w": rng.standard_normal((4, 3)),
        "b": rng.standard_normal(4),
    }
    probe = rng.standard_normal((2, 4, 5))

    def loss(d):
        return float(np.sum(probe * T.conv1d_pointwise(d["x"], d["w"], d["b"])))

    def grads(d):
        gx, gw, gb = T.conv1d_pointwise_backward(probe, d["x"], d["w"])
        return {"x": gx, "w": gw, "b": gb}

    return CheckResult("conv1d_pointwise", finite_diff_check(loss, grads, inputs), ELEMENTWISE_TOL)


def check_batch_norm(rng: np.random.Generator) -> CheckResult:
    inputs = {
        "x": rng.standard_normal((2, 3, 4)),
        "gamma": 0.5 + rng.random(3),
        "beta": rng.standard_normal(3),
    }
    probe = rng.standard_normal((2, 3, 4))

    def run(d):
        state = T.BatchNormState(
            gamma=d["gamma"],
            beta=d["beta"],
            running_mean=np.zeros(3),
            running_var=np.ones(3),
        )
        return T.batch_norm_1d(d["x"], state, "train")

    def loss(d):
        out, _ = run(d)
        return float(np.sum(probe * out))

    def grads(d):
        _, cache = run(d)
        gx, gg, gb = T.batch_norm_1d_backward(probe, cache)
        return {"x": gx, "gamma": gg, "beta": gb}

    return CheckResult("batch_norm_1d", finite_diff_check(loss, grads, inputs), COMPOSITE_TOL)


def check_cross_entropy(rng: np.random.Generator) -> CheckResult:
    x = rng.standard_normal(6)

    def loss(d):
        return cross_entropy(d["logits"], 2)[0]

    def grads(d):
        return {"logits": cross_entropy(d["logits"], 2)[1]}

    return CheckResult("cross_entropy", finite_diff_check(loss, grads, {"logits": x}), ELEMENTWISE_TOL)


def check_sap(rng: np.random.Generator) -> CheckResult:
    c, t, d_att = 3, 5, 4
    inputs = {
        "x": rng.standard_normal((c, t)),
        "sap.W": rng.standard_normal((d_att, c)),
        "sap.b": rng.standard_normal(d_att),
        "sap.mu": rng.standard_normal(d_att),
    }
    probe = rng.standard_normal(c)

    def loss(d):
        st = sap_forward(d["x"], d, valid_len=4)
        return float(np.dot(probe, st.embedding))

    def grads(d):
        st = sap_forward(d["x"], d, valid_len=4)
        gx, gp = sap_backward(st, d["x"], d, probe)
        return {"x": gx, **gp}

    return CheckResult("sap", finite_diff_check(loss, grads, inputs), COMPOSITE_TOL)


def _composite_loss_and_grads(cfg: EncoderConfig, d_att: int, n_classes: int, x64, valid, targets, params64):
    def loss(d):
        enc = {k[4:]: v for k, v in d.items() if k.startswith("enc.")}
        state = {}
        for k, shape in [(n, p.shape) for n, p in enc.items() if n.endswith(".bn.gamma")]:
            base = k[: -len(".gamma")]
            state[f"{base}.mean"] = np.zeros(shape)
            state[f"{base}.var"] = np.ones(shape)
        frames, _ = encoder_forward(cfg, enc, state, d["x"], mode="train", valid_lens=valid)
        total = 0.0
        for i in range(frames.shape[0]):
            st = sap_forward(frames[i], d, int(valid[i]))
            logits = classify(st.embedding, d)
            total += cross_entropy(logits, int(targets[i]))[0]
        return total / frames.shape[0]

    def grads(d):
        enc = {k[4:]: v for k, v in d.items() if k.startswith("enc.")}
        state = {}
        for k, shape in [(n, p.shape) for n, p in enc.items() if n.endswith(".bn.gamma")]:
            base = k[: -len(".gamma")]
            state[f"{base}.mean"] = np.zeros(shape)
            state[f"{base}.var"] = np.ones(shape)
        frames, cache = encoder_forward(cfg, enc, state, d["x"], mode="train", valid_lens=valid)
        n = frames.shape[0]
        out = {k: np.zeros_like(v) for k, v in d.items()}
        grad_frames = np.zeros_like(frames)
        for i in range(n):
            st = sap_forward(frames[i], d, int(valid[i]))
            logits = classify(st.embedding, d)
            gl = cross_entropy(logits, int(targets[i]))[1] / n
            ge, hg = classify_backward(st.embedding, d, gl)
            gx, sg = sap_backward(st, frames[i], d, ge)
            grad_frames[i] = gx
            for k, v in hg.items():
                out[k] += v
            for k, v in sg.items():
                out[k] += v
        g_in, enc_grads = encoder_backward(enc, cache, grad_frames)
        out["x"] = g_in
        for k, v in enc_grads.items():
            out[f"enc.{k}"] = v
        return out

    inputs = {"x": x64, **params64}
    return loss, grads, inputs


def check_composite(
    rng: np.random.Generator, corrupt: bool = False, cfg: EncoderConfig | None = None
) -> CheckResult:
    """Tiny encoder + SAP + cross-entropy, end to end."""
    if cfg is None:
        cfg = EncoderConfig(channels=(4, 4, 4), kernel_sizes=(3, 3, 5), sub_blocks=2,
                            input_dim=5, out_channels=6, dropout_rate=0.0)
    d_att, n_classes, n, t = 3, 3, 2, 4
    enc_params, _ = build_encoder(cfg, seed=int(rng.integers(0, 2**31)), dtype=np.float64)
    params64 = {f"enc.{k}": v for k, v in enc_params.items()}
    params64.update(
        {k: v.astype(np.float64) for k, v in
         init_sap_params(cfg.out_channels, d_att, n_classes, int(rng.integers(0, 2**31))).items()}
    )
    # non-degenerate head so the loss responds to every parameter
    params64["head.W"] = rng.standard_normal(params64["head.W"].shape) * 0.5
    x64 = rng.standard_normal((n, cfg.input_dim, t))
    valid = np.array([t, t - 1])
    targets = np.array([0, 2])
    loss, grads, inputs = _composite_loss_and_grads(cfg, d_att, n_classes, x64, valid, targets, params64)
    if corrupt:
        real = grads

        def grads(d):  # noqa: F811 - deliberate corruption for harness sensitivity tests
            g = real(d)
            g["head.b"] = g["head.b"] + 1.0
            return g

    # a 1e-4 step occasionally crosses a ReLU kink in the deep composite;
    # float64 central differences stay accurate down to ~1e-7, so confirm
    # any failure at a finer step before reporting it
    err = finite_diff_check(loss, grads, inputs, epsilon=1e-5)
    if err > COMPOSITE_TOL:
        err = min(err, finite_diff_check(loss, grads, inputs, epsilon=1e-6))
    return CheckResult("composite_encoder_sap_ce", err, COMPOSITE_TOL)


ALL_CHECKS = [
    check_linear,
    check_relu,
    check_tanh,
    check_softmax,
    check_dropout,
    check_conv_depthwise,
    check_conv_pointwise,
    check_batch_norm,
    check_cross_entropy,
    check_sap,
]


def run_all_checks(seed: int = 0, corrupt: bool = False) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = [check(rng) for check in ALL_CHECKS]
    results.append(check_composite(rng, corrupt=corrupt))
    return results
