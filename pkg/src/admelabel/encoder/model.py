"""Miniature BERT-style encoder with hand-written backpropagation.

Post-layer-norm transformer blocks with GELU feed-forward layers, a masked-LM
head tied to the token embeddings, and a linear classifier over the final
``[CLS]`` state. All arithmetic is float64 numpy.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import CheckpointError, ConfigError

NUM_CLASSES = 5
INIT_SCHEMES = ("truncated_normal", "uniform")
TRUNC_STD = 0.02
TRUNC_BOUND = 2 * TRUNC_STD
UNIFORM_BOUND = 0.1

LAYER_KEYS = ("Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo", "ln1_g", "ln1_b",
              "W1", "b1", "W2", "b2", "ln2_g", "ln2_b")
EMBED_KEYS = ("tok_emb", "pos_emb", "seg_emb", "emb_ln_g", "emb_ln_b")
MLM_KEYS = ("mlm_W", "mlm_b", "mlm_ln_g", "mlm_ln_b", "mlm_out_b")
CLS_KEYS = ("cls_W", "cls_b")


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    num_layers: int = 4
    num_heads: int = 4
    hidden_size: int = 128
    ffn_size: int | None = None
    max_seq_len: int = 128
    dropout_rate: float = 0.1
    layer_norm_epsilon: float = 1e-12
    num_classes: int = NUM_CLASSES

    def __post_init__(self):
        if self.ffn_size is None:
            object.__setattr__(self, "ffn_size", 4 * self.hidden_size)
        if self.hidden_size % self.num_heads:
            raise ConfigError(f"hidden_size {self.hidden_size} is not divisible by num_heads {self.num_heads}")
        if self.max_seq_len < 2:
            raise ConfigError("max_seq_len must be at least 2")
        if self.num_layers < 1 or self.vocab_size < 6:
            raise ConfigError("need at least one layer and a vocabulary beyond the specials")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)


def layer_group(i: int) -> str:
    return f"layer_{i}"


def group_of(name: str) -> str:
    if name in EMBED_KEYS:
        return "embeddings"
    if name in MLM_KEYS:
        return "mlm_head"
    if name in CLS_KEYS:
        return "classifier"
    return name.split(".", 1)[0]


def param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, f, V = cfg.hidden_size, cfg.ffn_size, cfg.vocab_size
    shapes = {"tok_emb": (V, d), "pos_emb": (cfg.max_seq_len, d), "seg_emb": (2, d),
              "emb_ln_g": (d,), "emb_ln_b": (d,)}
    per_layer = {"Wq": (d, d), "bq": (d,), "Wk": (d, d), "bk": (d,), "Wv": (d, d), "bv": (d,),
                 "Wo": (d, d), "bo": (d,), "ln1_g": (d,), "ln1_b": (d,), "W1": (d, f), "b1": (f,),
                 "W2": (f, d), "b2": (d,), "ln2_g": (d,), "ln2_b": (d,)}
    for i in range(1, cfg.num_layers + 1):
        for k in LAYER_KEYS:
            shapes[f"{layer_group(i)}.{k}"] = per_layer[k]
    shapes.update({"mlm_W": (d, d), "mlm_b": (d,), "mlm_ln_g": (d,), "mlm_ln_b": (d,), "mlm_out_b": (V,),
                   "cls_W": (cfg.num_classes, d), "cls_b": (cfg.num_classes,)})
    return shapes


def _kind(name: str) -> str:
    """'gain', 'bias' or 'weight' for initialisation and weight decay."""
    key = name.rsplit(".", 1)[-1]
    if key.endswith("_g"):
        return "gain"
    if key.endswith("_b") or key.startswith("b") or key in ("mlm_b", "cls_b", "mlm_out_b"):
        return "bias"
    return "weight"


@dataclass
class EncoderParams:
    config: EncoderConfig
    tensors: dict[str, np.ndarray]
    freeze: dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        for g in self.groups():
            self.freeze.setdefault(g, False)

    def groups(self) -> list[str]:
        return ["embeddings"] + [layer_group(i) for i in range(1, self.config.num_layers + 1)] + \
            ["mlm_head", "classifier"]

    def names_in(self, group: str) -> list[str]:
        return [n for n in self.tensors if group_of(n) == group]

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.config, {k: v.copy() for k, v in self.tensors.items()}, dict(self.freeze))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def num_parameters(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))


def _sample(kind: str, scheme: str, shape, rng: np.random.Generator) -> np.ndarray:
    if kind == "gain":
        return np.ones(shape)
    if kind == "bias":
        return np.zeros(shape)
    if scheme == "uniform":
        return rng.uniform(-UNIFORM_BOUND, UNIFORM_BOUND, size=shape)
    out = rng.normal(0.0, TRUNC_STD, size=shape)
    bad = np.abs(out) > TRUNC_BOUND
    while bad.any():
        out[bad] = rng.normal(0.0, TRUNC_STD, size=int(bad.sum()))
        bad = np.abs(out) > TRUNC_BOUND
    return out


def _group_rng(seed: int, group: str, groups: list[str]) -> np.random.Generator:
    return np.random.default_rng([seed, groups.index(group)])


def init_group(params: EncoderParams, group: str, scheme: str, seed: int) -> None:
    """Re-sample every tensor of ``group`` in place."""
    if scheme not in INIT_SCHEMES:
        raise ConfigError(f"unknown init scheme {scheme!r}; expected one of {INIT_SCHEMES}")
    rng = _group_rng(seed, group, params.groups())
    shapes = param_shapes(params.config)
    for name in params.names_in(group):
        params.tensors[name] = _sample(_kind(name), scheme, shapes[name], rng)


def init_params(config: EncoderConfig, scheme: str = "truncated_normal", seed: int = 0,
                path=None) -> EncoderParams:
    """Fresh parameters, or parameters read from a checkpoint when ``scheme == "load"``.

    Each parameter group draws from its own generator seeded by
    ``(seed, group_index)``, so re-initialising one group never disturbs
    another.
    """
    if scheme == "load":
        from .checkpoint import load_checkpoint

        if path is None:
            raise ConfigError("init scheme 'load' needs a checkpoint path")
        loaded = load_checkpoint(path).params
        check_shapes(config, loaded.tensors)
        return EncoderParams(config, loaded.tensors, dict(loaded.freeze))
    shapes = param_shapes(config)
    params = EncoderParams(config, {n: np.empty(s) for n, s in shapes.items()})
    for g in params.groups():
        init_group(params, g, scheme, seed)
    return params


def check_shapes(config: EncoderConfig, tensors: dict[str, np.ndarray]) -> None:
    expected = param_shapes(config)
    bad = sorted({group_of(n) for n, s in expected.items()
                  if n not in tensors or tuple(tensors[n].shape) != s})
    bad += sorted({group_of(n) for n in tensors if n not in expected} - set(bad))
    if bad:
        raise CheckpointError(f"parameter shape mismatch in groups: {', '.join(bad)}")


# ---------------------------------------------------------------------------
# Primitive ops with explicit backward passes
# ---------------------------------------------------------------------------

_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: np.ndarray) -> np.ndarray:
    # x * x * x rather than x ** 3: numpy's float power is an order of magnitude slower
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * (x * x * x))))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_C * (x + 0.044715 * (x * x * x)))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)


def layer_norm(x, g, b, eps):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def layer_norm_backward(dy, cache):
    xhat, rstd, g = cache
    axes = tuple(range(dy.ndim - 1))
    dg = (dy * xhat).sum(axis=axes)
    db = dy.sum(axis=axes)
    dxhat = dy * g
    dx = rstd * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


def masked_softmax(scores: np.ndarray, key_mask: np.ndarray | None) -> np.ndarray:
    """Softmax over the last axis; masked keys get exactly zero weight."""
    if key_mask is not None:
        scores = np.where(key_mask, scores, -np.inf)
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=-1, keepdims=True)


def attention(Q, K, V, mask=None):
    """Scaled dot-product attention.

    ``Q``, ``K``, ``V`` are ``[..., T, d_k]``; ``mask`` marks valid keys and
    broadcasts against ``[..., T_q, T_k]`` (a ``[..., T_k]`` vector is
    accepted). Returns ``(context, weights)``.
    """
    Q, K, V = (np.asarray(a, dtype=np.float64) for a in (Q, K, V))
    scores = Q @ np.swapaxes(K, -1, -2) / math.sqrt(Q.shape[-1])
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == scores.ndim - 1:
            mask = mask[..., None, :]
    weights = masked_softmax(scores, mask)
    return weights @ V, weights


def _dropout_mask(rng, shape, rate):
    if rng is None or rate <= 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardResult:
    cls_logits: np.ndarray  # [B, C]
    hidden: np.ndarray  # [B, T, d] final layer states
    attentions: np.ndarray | None  # [B, L, H, T, T] when captured
    mlm_logits: np.ndarray | None = None  # [N, V] for the requested positions
    cache: dict | None = None


def forward(params: EncoderParams, ids, mask, *, capture: bool = False, train: bool = False,
            rng: np.random.Generator | None = None, mlm_positions=None, keep_cache: bool = False) -> ForwardResult:
    """Run the encoder.

    ``ids``/``mask`` are ``[T]`` or ``[B, T]`` with ``T <= max_seq_len``.
    Dropout is applied only when ``train`` is set and ``rng`` is given.
    ``mlm_positions`` is a pair of index arrays ``(batch_idx, pos_idx)``
    selecting where masked-LM logits are produced.
    """
    cfg = params.config
    P = params.tensors
    ids = np.atleast_2d(np.asarray(ids, dtype=np.int64))
    mask = np.atleast_2d(np.asarray(mask, dtype=bool))
    B, T = ids.shape
    if T > cfg.max_seq_len:
        raise ConfigError(f"sequence length {T} exceeds max_seq_len {cfg.max_seq_len}")
    H, dk, eps = cfg.num_heads, cfg.head_dim, cfg.layer_norm_epsilon
    rate = cfg.dropout_rate if train else 0.0
    drop_rng = rng if train else None
    key_mask = mask[:, None, None, :]
    scale = 1.0 / math.sqrt(dk)

    cache: dict = {"ids": ids, "mask": mask, "layers": []}
    x = P["tok_emb"][ids] + P["pos_emb"][:T][None] + P["seg_emb"][0]
    h, cache["emb_ln"] = layer_norm(x, P["emb_ln_g"], P["emb_ln_b"], eps)
    cache["emb_drop"] = _dropout_mask(drop_rng, h.shape, rate)
    if cache["emb_drop"] is not None:
        h = h * cache["emb_drop"]

    attn_out = np.empty((B, cfg.num_layers, H, T, T)) if capture else None
    for li in range(1, cfg.num_layers + 1):
        pre = f"{layer_group(li)}."
        Wq, Wk, Wv, Wo = P[pre + "Wq"], P[pre + "Wk"], P[pre + "Wv"], P[pre + "Wo"]
        q = (h @ Wq + P[pre + "bq"]).reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        k = (h @ Wk + P[pre + "bk"]).reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        v = (h @ Wv + P[pre + "bv"]).reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        A = masked_softmax((q @ k.transpose(0, 1, 3, 2)) * scale, key_mask)
        if capture:
            attn_out[:, li - 1] = A
        a_drop = _dropout_mask(drop_rng, A.shape, rate)
        Ad = A * a_drop if a_drop is not None else A
        ctx = (Ad @ v).transpose(0, 2, 1, 3).reshape(B, T, H * dk)
        o = ctx @ Wo + P[pre + "bo"]
        o_drop = _dropout_mask(drop_rng, o.shape, rate)
        if o_drop is not None:
            o = o * o_drop
        h1, ln1 = layer_norm(h + o, P[pre + "ln1_g"], P[pre + "ln1_b"], eps)
        f_pre = h1 @ P[pre + "W1"] + P[pre + "b1"]
        f_act = gelu(f_pre)
        z = f_act @ P[pre + "W2"] + P[pre + "b2"]
        z_drop = _dropout_mask(drop_rng, z.shape, rate)
        if z_drop is not None:
            z = z * z_drop
        h2, ln2 = layer_norm(h1 + z, P[pre + "ln2_g"], P[pre + "ln2_b"], eps)
        if keep_cache:
            cache["layers"].append(dict(h=h, q=q, k=k, v=v, A=A, a_drop=a_drop, ctx=ctx, o_drop=o_drop,
                                        ln1=ln1, h1=h1, f_pre=f_pre, f_act=f_act, z_drop=z_drop, ln2=ln2))
        h = h2

    c = h[:, 0]
    c_drop = _dropout_mask(drop_rng, c.shape, rate)
    cache["cls_drop"] = c_drop
    c_in = c * c_drop if c_drop is not None else c
    cache["cls_in"] = c_in
    logits = c_in @ P["cls_W"].T + P["cls_b"]

    mlm_logits = None
    if mlm_positions is not None:
        bi, ti = mlm_positions
        hs = h[bi, ti]
        t_pre = hs @ P["mlm_W"] + P["mlm_b"]
        t_act = gelu(t_pre)
        tn, mlm_ln = layer_norm(t_act, P["mlm_ln_g"], P["mlm_ln_b"], eps)
        mlm_logits = tn @ P["tok_emb"].T + P["mlm_out_b"]
        cache["mlm"] = dict(bi=bi, ti=ti, hs=hs, t_pre=t_pre, tn=tn, ln=mlm_ln)

    return ForwardResult(logits, h, attn_out, mlm_logits, cache if keep_cache else None)


def backward(params: EncoderParams, result: ForwardResult, d_cls_logits=None, d_mlm_logits=None) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its derivatives w.r.t. the logits.

    Only tensors that influence a supplied logit derivative appear in the
    returned dict.
    """
    cfg = params.config
    P = params.tensors
    cache = result.cache
    if cache is None:
        raise ValueError("forward must be called with keep_cache=True before backward")
    ids, B, T = cache["ids"], *cache["ids"].shape
    H, dk = cfg.num_heads, cfg.head_dim
    scale = 1.0 / math.sqrt(dk)
    grads: dict[str, np.ndarray] = {}
    dh = np.zeros((B, T, cfg.hidden_size))

    if d_cls_logits is not None:
        grads["cls_W"] = d_cls_logits.T @ cache["cls_in"]
        grads["cls_b"] = d_cls_logits.sum(axis=0)
        dc = d_cls_logits @ P["cls_W"]
        if cache["cls_drop"] is not None:
            dc = dc * cache["cls_drop"]
        dh[:, 0] += dc

    if d_mlm_logits is not None:
        m = cache["mlm"]
        grads["mlm_out_b"] = d_mlm_logits.sum(axis=0)
        d_tok = d_mlm_logits.T @ m["tn"]
        dtn = d_mlm_logits @ P["tok_emb"]
        dt_act, grads["mlm_ln_g"], grads["mlm_ln_b"] = layer_norm_backward(dtn, m["ln"])
        dt_pre = dt_act * gelu_grad(m["t_pre"])
        grads["mlm_W"] = m["hs"].T @ dt_pre
        grads["mlm_b"] = dt_pre.sum(axis=0)
        np.add.at(dh, (m["bi"], m["ti"]), dt_pre @ P["mlm_W"].T)
    else:
        d_tok = None

    for li in range(cfg.num_layers, 0, -1):
        pre = f"{layer_group(li)}."
        c = cache["layers"][li - 1]
        du, grads[pre + "ln2_g"], grads[pre + "ln2_b"] = layer_norm_backward(dh, c["ln2"])
        dz = du * c["z_drop"] if c["z_drop"] is not None else du
        f_act = c["f_act"]
        grads[pre + "W2"] = f_act.reshape(-1, f_act.shape[-1]).T @ dz.reshape(-1, dz.shape[-1])
        grads[pre + "b2"] = dz.sum(axis=(0, 1))
        df = (dz @ P[pre + "W2"].T) * gelu_grad(c["f_pre"])
        h1 = c["h1"]
        grads[pre + "W1"] = h1.reshape(-1, h1.shape[-1]).T @ df.reshape(-1, df.shape[-1])
        grads[pre + "b1"] = df.sum(axis=(0, 1))
        dh1 = du + df @ P[pre + "W1"].T
        ds, grads[pre + "ln1_g"], grads[pre + "ln1_b"] = layer_norm_backward(dh1, c["ln1"])
        do = ds * c["o_drop"] if c["o_drop"] is not None else ds
        ctx = c["ctx"]
        grads[pre + "Wo"] = ctx.reshape(-1, ctx.shape[-1]).T @ do.reshape(-1, do.shape[-1])
        grads[pre + "bo"] = do.sum(axis=(0, 1))
        dctx = (do @ P[pre + "Wo"].T).reshape(B, T, H, dk).transpose(0, 2, 1, 3)
        A = c["A"]
        Ad = A * c["a_drop"] if c["a_drop"] is not None else A
        dv = Ad.transpose(0, 1, 3, 2) @ dctx
        dAd = dctx @ c["v"].transpose(0, 1, 3, 2)
        dA = dAd * c["a_drop"] if c["a_drop"] is not None else dAd
        dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) * scale
        dq = dS @ c["k"]
        dk_ = dS.transpose(0, 1, 3, 2) @ c["q"]

        h_in = c["h"]
        hf = h_in.reshape(-1, h_in.shape[-1])
        dh_next = ds.copy()
        for name, dproj in (("q", dq), ("k", dk_), ("v", dv)):
            d2 = dproj.transpose(0, 2, 1, 3).reshape(B * T, H * dk)
            grads[pre + "W" + name] = hf.T @ d2
            grads[pre + "b" + name] = d2.sum(axis=0)
            dh_next += (d2 @ P[pre + "W" + name].T).reshape(B, T, -1)
        dh = dh_next

    if cache["emb_drop"] is not None:
        dh = dh * cache["emb_drop"]
    dx, grads["emb_ln_g"], grads["emb_ln_b"] = layer_norm_backward(dh, cache["emb_ln"])
    tok = np.zeros_like(P["tok_emb"])
    np.add.at(tok, ids.ravel(), dx.reshape(-1, dx.shape[-1]))
    if d_tok is not None:
        tok += d_tok
    grads["tok_emb"] = tok
    pos = np.zeros_like(P["pos_emb"])
    pos[:T] = dx.sum(axis=0)
    grads["pos_emb"] = pos
    seg = np.zeros_like(P["seg_emb"])
    seg[0] = dx.sum(axis=(0, 1))
    grads["seg_emb"] = seg
    return grads


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. ``logits``."""
    n = len(targets)
    p = softmax(logits)
    loss = -float(np.mean(np.log(p[np.arange(n), targets] + 1e-300)))
    g = p
    g[np.arange(n), targets] -= 1.0
    return loss, g / n


def trim_batch(ids: np.ndarray, mask: np.ndarray):
    """Drop trailing all-padding columns; results are unchanged by padding."""
    T = int(mask.sum(axis=1).max()) if len(mask) else 1
    return ids[:, :max(T, 1)], mask[:, :max(T, 1)]
