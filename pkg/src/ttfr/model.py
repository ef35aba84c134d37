"""Minimal decoder-causal (GPT-style) and encoder-bidirectional (BERT-style)
transformer forward passes with cross-entropy losses.

Weights live in plain dataclasses of NumPy arrays; forward is a pure
function of (config, weights, tokens). Attention masking is additive
(0 allowed, -1e9 disallowed) and heads are concatenated in index order,
head 0 first. With `ln_enabled=False` every layer norm is the identity
map, which turns growth into an exactly testable linear-algebra identity.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ttfr import tensor
from ttfr.errors import InputError, ParameterError

ARCH_DECODER = "decoder-causal"
ARCH_ENCODER = "encoder-bidirectional"
LN_PRE = "pre"
LN_POST = "post"

LN_EPS = 1e-5
MASK_BIAS = -1e9

CONFIG_FIELDS = (
    "arch",
    "vocab_size",
    "max_seq_len",
    "d_model",
    "n_layers",
    "n_heads",
    "d_head",
    "d_ff",
    "ln_mode",
    "ln_enabled",
    "tie_lm_head",
    "use_token_type",
)

# Normative per-layer tensor name suffixes, in serialization order.
LAYER_FIELDS = (
    "q_w", "q_b", "k_w", "k_b", "v_w", "v_b", "o_w", "o_b",
    "ln1_g", "ln1_b", "ff1_w", "ff1_b", "ff2_w", "ff2_b", "ln2_g", "ln2_b",
)


@dataclass
class ModelConfig:
    arch: str
    vocab_size: int
    max_seq_len: int
    d_model: int
    n_layers: int
    n_heads: int
    d_head: int
    d_ff: int
    ln_mode: str = LN_PRE
    ln_enabled: bool = True
    tie_lm_head: bool = True
    use_token_type: bool = False

    @property
    def inner_dim(self):
        """Attention inner width; may differ from d_model."""
        return self.n_heads * self.d_head

    def validate(self):
        if self.arch not in (ARCH_DECODER, ARCH_ENCODER):
            raise ParameterError(f"unknown arch {self.arch!r}")
        if self.ln_mode not in (LN_PRE, LN_POST):
            raise ParameterError(f"unknown ln_mode {self.ln_mode!r}")
        for name in ("max_seq_len", "d_model", "n_layers", "n_heads", "d_head", "d_ff"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.vocab_size < 2:
            raise ParameterError(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.use_token_type and self.arch != ARCH_ENCODER:
            raise ParameterError("use_token_type is an encoder-only option")
        return self

    def to_dict(self):
        return {name: getattr(self, name) for name in CONFIG_FIELDS}

    @classmethod
    def from_dict(cls, d):
        missing = [name for name in CONFIG_FIELDS if name not in d]
        if missing:
            raise ParameterError(f"config missing fields: {', '.join(missing)}")
        cfg = cls(**{name: d[name] for name in CONFIG_FIELDS})
        return cfg.validate()


@dataclass
class LayerWeights:
    q_w: np.ndarray
    q_b: np.ndarray
    k_w: np.ndarray
    k_b: np.ndarray
    v_w: np.ndarray
    v_b: np.ndarray
    o_w: np.ndarray
    o_b: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ff1_w: np.ndarray
    ff1_b: np.ndarray
    ff2_w: np.ndarray
    ff2_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray


@dataclass
class ModelWeights:
    """Complete named-parameter set of one transformer.

    `lm_head is None` means the head is tied: the logit projection reads
    tok_emb directly, so the two stay equal at all times by construction.
    """

    tok_emb: np.ndarray
    pos_emb: np.ndarray
    layers: list = field(default_factory=list)
    final_ln_gain: np.ndarray = None
    final_ln_bias: np.ndarray = None
    type_emb: np.ndarray = None
    lm_head: np.ndarray = None

    def head_matrix(self):
        return self.tok_emb if self.lm_head is None else self.lm_head

    @property
    def dtype(self):
        return self.tok_emb.dtype


def mask_token_id(cfg):
    """Reserved [MASK] id in the toy tokenizer scheme (encoder models)."""
    return cfg.vocab_size - 1


def expected_shapes(cfg):
    """Tensor name -> shape for every stored tensor, in normative order."""
    d, inner = cfg.d_model, cfg.inner_dim
    shapes = {
        "tok_emb": (cfg.vocab_size, d),
        "pos_emb": (cfg.max_seq_len, d),
    }
    if cfg.use_token_type:
        shapes["type_emb"] = (2, d)
    per_layer = {
        "q_w": (inner, d), "q_b": (inner,),
        "k_w": (inner, d), "k_b": (inner,),
        "v_w": (inner, d), "v_b": (inner,),
        "o_w": (d, inner), "o_b": (d,),
        "ln1_g": (d,), "ln1_b": (d,),
        "ff1_w": (cfg.d_ff, d), "ff1_b": (cfg.d_ff,),
        "ff2_w": (d, cfg.d_ff), "ff2_b": (d,),
        "ln2_g": (d,), "ln2_b": (d,),
    }
    for i in range(cfg.n_layers):
        for name in LAYER_FIELDS:
            shapes[f"layers.{i}.{name}"] = per_layer[name]
    shapes["final_ln_gain"] = (d,)
    shapes["final_ln_bias"] = (d,)
    if not cfg.tie_lm_head:
        shapes["lm_head"] = (cfg.vocab_size, d)
    return shapes


def named_tensors(cfg, w):
    """(name, array) pairs in the normative serialization order."""
    pairs = [("tok_emb", w.tok_emb), ("pos_emb", w.pos_emb)]
    if cfg.use_token_type:
        pairs.append(("type_emb", w.type_emb))
    for i, layer in enumerate(w.layers):
        for name in LAYER_FIELDS:
            pairs.append((f"layers.{i}.{name}", getattr(layer, name)))
    pairs.append(("final_ln_gain", w.final_ln_gain))
    pairs.append(("final_ln_bias", w.final_ln_bias))
    if not cfg.tie_lm_head:
        pairs.append(("lm_head", w.lm_head))
    return pairs


def param_count(cfg):
    return sum(int(np.prod(s)) for s in expected_shapes(cfg).values())


def validate_weights(cfg, w):
    """Check shapes, layer count, head tying, and finiteness."""
    if len(w.layers) != cfg.n_layers:
        raise ParameterError(
            f"expected {cfg.n_layers} layers, got {len(w.layers)}"
        )
    if cfg.tie_lm_head != (w.lm_head is None):
        raise ParameterError("lm_head presence disagrees with tie_lm_head")
    if cfg.use_token_type != (w.type_emb is not None):
        raise ParameterError("type_emb presence disagrees with use_token_type")
    shapes = expected_shapes(cfg)
    for name, arr in named_tensors(cfg, w):
        if tuple(arr.shape) != shapes[name]:
            raise ParameterError(
                f"tensor {name}: shape {tuple(arr.shape)} != expected {shapes[name]}"
            )
        if not np.isfinite(arr).all():
            raise ParameterError(f"tensor {name} contains non-finite values")
    return w


def _build_weights(cfg, make):
    """Assemble a ModelWeights whose arrays come from make(name, shape)."""
    shapes = expected_shapes(cfg)
    arrays = {name: make(name, shape) for name, shape in shapes.items()}
    layers = []
    for i in range(cfg.n_layers):
        layers.append(LayerWeights(**{
            name: arrays[f"layers.{i}.{name}"] for name in LAYER_FIELDS
        }))
    return ModelWeights(
        tok_emb=arrays["tok_emb"],
        pos_emb=arrays["pos_emb"],
        layers=layers,
        final_ln_gain=arrays["final_ln_gain"],
        final_ln_bias=arrays["final_ln_bias"],
        type_emb=arrays.get("type_emb"),
        lm_head=arrays.get("lm_head"),
    )


def zeros_weights(cfg, dtype=np.float32):
    """All-zero parameter set (used for gradient accumulators)."""
    return _build_weights(cfg, lambda name, shape: np.zeros(shape, dtype=dtype))


def init_weights(cfg, seed, std, dtype=np.float32):
    """Random init: matrices N(0, std), LN gains 1, all biases 0.

    Matrices are sampled from a single Rng(seed) stream in the normative
    tensor order, so identical flags give identical weights.
    """
    cfg.validate()
    rng = tensor.Rng(seed)

    def make(name, shape):
        if name.endswith(("ln1_g", "ln2_g", "final_ln_gain")):
            return np.ones(shape, dtype=dtype)
        if len(shape) == 1:
            return np.zeros(shape, dtype=dtype)
        return tensor.sample_normal(rng, 0.0, std, shape[0], shape[1], dtype=dtype)

    return _build_weights(cfg, make)


def attention_mask(cfg, dtype=np.float32, size=None):
    """Additive attention mask: 0 on allowed positions, -1e9 on masked ones.

    Decoder-causal masks the strict upper triangle; encoders attend
    everywhere. Always rebuilt from the config, never copied across shapes.
    """
    n = cfg.max_seq_len if size is None else size
    mask = np.zeros((n, n), dtype=dtype)
    if cfg.arch == ARCH_DECODER:
        mask[np.triu_indices(n, k=1)] = MASK_BIAS
    return mask


def _check_tokens(cfg, tokens):
    ids = np.asarray(tokens)
    if ids.ndim != 1 or ids.size == 0:
        raise InputError("tokens must be a non-empty 1-D id sequence")
    if ids.size > cfg.max_seq_len:
        raise InputError(
            f"sequence length {ids.size} exceeds max_seq_len {cfg.max_seq_len}"
        )
    ids = ids.astype(np.int64)
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise InputError("token id out of range")
    return ids


def _ln_fwd(x, gain, bias, enabled, eps, need_cache=False):
    """Returns (y, cache); cache is (xhat, inv_std) or None when disabled."""
    if not enabled:
        return x, None
    y = tensor.layer_norm_rows(x, gain, bias, eps)
    if not need_cache:
        return y, None
    mu = x.mean(axis=1, keepdims=True, dtype=x.dtype)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True, dtype=x.dtype)
    inv = 1.0 / np.sqrt(var + x.dtype.type(eps))
    return y, (xc * inv, inv)


def _attn_fwd(cfg, layer, a, mask):
    """Multi-head scaled dot-product attention over one sequence."""
    dh = cfg.d_head
    inv_scale = a.dtype.type(1.0 / math.sqrt(dh))
    q = tensor.matmul_nt(a, layer.q_w) + layer.q_b
    k = tensor.matmul_nt(a, layer.k_w) + layer.k_b
    v = tensor.matmul_nt(a, layer.v_w) + layer.v_b
    z = np.empty_like(q)
    probs = []
    for h in range(cfg.n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = tensor.matmul_nt(q[:, sl], k[:, sl]) * inv_scale + mask
        p = tensor.softmax_rows(scores)
        z[:, sl] = tensor.matmul(p, v[:, sl])
        probs.append(p)
    out = tensor.matmul_nt(z, layer.o_w) + layer.o_b
    return out, {"q": q, "k": k, "v": v, "p": probs, "z": z}


def _ffn_fwd(layer, f):
    z1 = tensor.matmul_nt(f, layer.ff1_w) + layer.ff1_b
    a1 = tensor.gelu(z1)
    out = tensor.matmul_nt(a1, layer.ff2_w) + layer.ff2_b
    return out, {"z1": z1, "a1": a1}


def _forward(cfg, w, tokens, eps=LN_EPS, trace=None, cache=None):
    ids = _check_tokens(cfg, tokens)
    n = ids.size
    x = w.tok_emb[ids] + w.pos_emb[:n]
    if cfg.use_token_type:
        x = x + w.type_emb[0]
    mask = attention_mask(cfg, dtype=x.dtype, size=n)
    if trace is not None:
        trace.append(x.copy())
    pre = cfg.ln_mode == LN_PRE
    caching = cache is not None
    for layer in w.layers:
        lc = {"x_in": x}
        if pre:
            a, lc["ln1"] = _ln_fwd(x, layer.ln1_g, layer.ln1_b, cfg.ln_enabled, eps, caching)
        else:
            a = x
        attn, att_c = _attn_fwd(cfg, layer, a, mask)
        lc["a"] = a
        lc.update(att_c)
        r1 = x + attn
        if pre:
            x_mid = r1
        else:
            x_mid, lc["ln1"] = _ln_fwd(r1, layer.ln1_g, layer.ln1_b, cfg.ln_enabled, eps, caching)
            lc["r1"] = r1
        lc["x_mid"] = x_mid
        if pre:
            f, lc["ln2"] = _ln_fwd(x_mid, layer.ln2_g, layer.ln2_b, cfg.ln_enabled, eps, caching)
        else:
            f = x_mid
        ff, ff_c = _ffn_fwd(layer, f)
        lc["f"] = f
        lc.update(ff_c)
        r2 = x_mid + ff
        if pre:
            x = r2
        else:
            x, lc["ln2"] = _ln_fwd(r2, layer.ln2_g, layer.ln2_b, cfg.ln_enabled, eps, caching)
            lc["r2"] = r2
        if trace is not None:
            trace.append(x.copy())
        if caching:
            cache["layers"].append(lc)
    if caching:
        cache["x_top"] = x
        cache["ids"] = ids
    h, ln_f = _ln_fwd(x, w.final_ln_gain, w.final_ln_bias, cfg.ln_enabled, eps, caching)
    if caching:
        cache["ln_f"] = ln_f
        cache["h"] = h
    logits = tensor.matmul_nt(h, w.head_matrix())
    return logits


def forward(cfg, w, tokens, eps=LN_EPS, trace=None):
    """Logits (seq_len x vocab_size) for one token sequence.

    `trace`, when a list, receives a copy of the residual stream after the
    embedding and after every block (white-box probes use this).
    """
    return _forward(cfg, w, tokens, eps=eps, trace=trace)


def forward_cached(cfg, w, tokens, eps=LN_EPS):
    """Forward pass that also returns the intermediates backward needs."""
    cache = {"layers": []}
    logits = _forward(cfg, w, tokens, eps=eps, cache=cache)
    cache["logits"] = logits
    return logits, cache


def _row_cross_entropy(logits, targets):
    """Per-row CE (natural log) against integer targets, computed in f64."""
    l64 = logits.astype(np.float64)
    m = l64.max(axis=1)
    lse = m + np.log(np.exp(l64 - m[:, None]).sum(axis=1))
    return lse - l64[np.arange(len(targets)), targets]


def lm_loss(cfg, w, tokens):
    """Mean next-token cross-entropy; positions 0..n-2 predict 1..n-1."""
    ids = _check_tokens(cfg, tokens)
    if ids.size < 2:
        raise InputError("lm_loss needs at least 2 tokens")
    logits = _forward(cfg, w, ids)
    ce = _row_cross_entropy(logits[:-1], ids[1:])
    return float(ce.mean())


def mlm_loss(cfg, w, tokens, masked_positions, original_ids):
    """Mean cross-entropy at masked positions (encoder models only).

    The input sequence is re-masked here: tokens at `masked_positions` are
    replaced by the reserved mask id before the forward pass, so callers
    may pass either the original or the pre-masked sequence.
    """
    if cfg.arch != ARCH_ENCODER:
        raise InputError("mlm_loss requires an encoder-bidirectional model")
    ids = _check_tokens(cfg, tokens)
    pos = np.asarray(masked_positions, dtype=np.int64)
    gold = np.asarray(original_ids, dtype=np.int64)
    if pos.size == 0:
        raise InputError("masked_positions must be non-empty")
    if pos.size != gold.size:
        raise InputError("masked_positions and original_ids lengths differ")
    if pos.min() < 0 or pos.max() >= ids.size:
        raise InputError("masked position out of range")
    if gold.min() < 0 or gold.max() >= cfg.vocab_size:
        raise InputError("original id out of range")
    masked = ids.copy()
    masked[pos] = mask_token_id(cfg)
    logits = _forward(cfg, w, masked)
    ce = _row_cross_entropy(logits[pos], gold)
    return float(ce.mean())
