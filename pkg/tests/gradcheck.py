"""Central finite-difference check of the encoder's analytic gradients."""

from __future__ import annotations

import numpy as np

from admelabel.encoder.model import EncoderConfig, backward, cross_entropy, forward, init_params

TINY = EncoderConfig(vocab_size=40, num_layers=2, num_heads=2, hidden_size=8, ffn_size=16, max_seq_len=6,
                     dropout_rate=0.0)
# Gradients whose true value is zero (e.g. the key bias, which shifts every
# score in a softmax row equally) are compared on an absolute scale.
ABS_FLOOR = 1e-7


def _problem(seed=0):
    params = init_params(TINY, "uniform", seed)
    rng = np.random.default_rng(seed)
    # enlarge the weights so every nonlinearity is exercised
    for k, v in params.tensors.items():
        params.tensors[k] = v + rng.normal(0, 0.3, v.shape)
    ids = rng.integers(5, TINY.vocab_size, size=(3, 6))
    ids[:, 0] = 2
    mask = np.ones((3, 6), dtype=bool)
    mask[1, 4:] = False
    mask[2, 5:] = False
    y = np.array([0, 3, 4])
    positions = (np.array([0, 1, 2, 2]), np.array([1, 2, 3, 1]))
    targets = rng.integers(5, TINY.vocab_size, size=4)
    return params, ids, mask, y, positions, targets


def _loss(params, ids, mask, y, positions, targets):
    res = forward(params, ids, mask, mlm_positions=positions, keep_cache=True)
    l1, d1 = cross_entropy(res.cls_logits, y)
    l2, d2 = cross_entropy(res.mlm_logits, targets)
    return l1 + l2, res, d1, d2


def gradient_errors(seed=0, eps=1e-5) -> dict[str, float]:
    """Per parameter group: max relative error between analytic and numeric gradients."""
    params, ids, mask, y, positions, targets = _problem(seed)
    _, res, d1, d2 = _loss(params, ids, mask, y, positions, targets)
    grads = backward(params, res, d_cls_logits=d1, d_mlm_logits=d2)
    errors: dict[str, float] = {}
    for name, p in params.tensors.items():
        num = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            lp = _loss(params, ids, mask, y, positions, targets)[0]
            p[i] = old - eps
            lm = _loss(params, ids, mask, y, positions, targets)[0]
            p[i] = old
            num[i] = (lp - lm) / (2 * eps)
        ana = grads.get(name, np.zeros_like(p))
        scale = max(np.linalg.norm(num), np.linalg.norm(ana))
        diff = np.linalg.norm(num - ana)
        errors[name] = 0.0 if scale < ABS_FLOOR and diff < ABS_FLOOR else diff / scale
    return errors
