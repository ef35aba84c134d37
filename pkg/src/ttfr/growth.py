"""Weight-transfer operators that grow a trained model into a larger shape.

Every operator copies source weights into the leading block of the target
tensor and fills the rest with zeros (or small random values for new
layers), so block matrix multiplication reproduces the source outputs on
the original dimensions. The only non-exact step is layer normalization,
whose statistics see the grown width; with `ln_enabled=False` the whole
transfer is exact, and the returned equivalence class records which case
applies.
"""

import math
from dataclasses import dataclass

import numpy as np

from ttfr import model, tensor
from ttfr.errors import PlanError, TtfrError
from ttfr.model import LayerWeights, ModelConfig, ModelWeights

HEAD_ADD = "add-heads"
HEAD_WIDEN = "widen-heads"
DEPTH_ZERO_IDENTITY = "zero-identity"
DEPTH_SMALL_RANDOM = "small-random"
POS_ZEROS = "zeros"
POS_SMALL_RANDOM = "small-random"

EXACT = "exact"
EXACT_MODULO_LN = "exact-modulo-layernorm"
EQUIVALENCE_CLASSES = (EXACT, EXACT_MODULO_LN)

PLAN_FIELDS = (
    "source_cfg",
    "target_cfg",
    "head_mode",
    "scale_compensation",
    "depth_init",
    "small_std",
    "new_pos_init",
    "seed",
)

# Dimensions the target must dominate; vocab and arch must match exactly.
_GROWN_DIMS = ("d_model", "n_layers", "n_heads", "d_head", "d_ff", "max_seq_len")
_EQUAL_FIELDS = ("arch", "vocab_size", "ln_mode", "ln_enabled", "tie_lm_head",
                 "use_token_type")


@dataclass
class GrowthPlan:
    source_cfg: ModelConfig
    target_cfg: ModelConfig
    head_mode: str = HEAD_ADD
    scale_compensation: bool = True
    depth_init: str = DEPTH_ZERO_IDENTITY
    small_std: float = 0.002
    new_pos_init: str = POS_ZEROS
    seed: int = 0

    def validate(self):
        s, t = self.source_cfg.validate(), self.target_cfg.validate()
        for name in _EQUAL_FIELDS:
            if getattr(s, name) != getattr(t, name):
                raise PlanError(f"{name} must match between source and target")
        for name in _GROWN_DIMS:
            if getattr(t, name) < getattr(s, name):
                raise PlanError(
                    f"target dims must dominate source: {name} "
                    f"{getattr(t, name)} < {getattr(s, name)}"
                )
        if self.head_mode not in (HEAD_ADD, HEAD_WIDEN):
            raise PlanError(f"unknown head_mode {self.head_mode!r}")
        if self.head_mode == HEAD_ADD and t.d_head != s.d_head:
            raise PlanError("add-heads requires equal d_head")
        if self.head_mode == HEAD_WIDEN and t.n_heads != s.n_heads:
            raise PlanError("widen-heads requires equal n_heads")
        if self.depth_init not in (DEPTH_ZERO_IDENTITY, DEPTH_SMALL_RANDOM):
            raise PlanError(f"unknown depth_init {self.depth_init!r}")
        if self.new_pos_init not in (POS_ZEROS, POS_SMALL_RANDOM):
            raise PlanError(f"unknown new_pos_init {self.new_pos_init!r}")
        if self.small_std < 0:
            raise PlanError(f"small_std must be >= 0, got {self.small_std}")
        return self

    def to_dict(self):
        d = {name: getattr(self, name) for name in PLAN_FIELDS}
        d["source_cfg"] = self.source_cfg.to_dict()
        d["target_cfg"] = self.target_cfg.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            kw = {name: d[name] for name in PLAN_FIELDS}
        except KeyError as exc:
            raise PlanError(f"plan missing field {exc.args[0]!r}") from None
        kw["source_cfg"] = ModelConfig.from_dict(d["source_cfg"])
        kw["target_cfg"] = ModelConfig.from_dict(d["target_cfg"])
        return cls(**kw).validate()


def classify(plan):
    """Equivalence class of a plan: exact, or exact only modulo LayerNorm."""
    s, t = plan.source_cfg, plan.target_cfg
    if not t.ln_enabled:
        return EXACT
    width_same = all(
        getattr(s, name) == getattr(t, name)
        for name in ("d_model", "n_heads", "d_head", "d_ff", "max_seq_len")
    )
    depth_exact = (
        s.n_layers == t.n_layers
        or (plan.depth_init == DEPTH_ZERO_IDENTITY and t.ln_mode == model.LN_PRE)
    )
    return EXACT if width_same and depth_exact else EXACT_MODULO_LN


def _pad_vector(v, n, fill=0.0):
    out = np.full(n, fill, dtype=v.dtype)
    out[: v.shape[0]] = v
    return out


def grow_embedding(e, d_target):
    """Zero-pad the hidden dimension (columns) of an embedding table."""
    if d_target < e.shape[1]:
        raise PlanError(f"cannot shrink embedding width {e.shape[1]} to {d_target}")
    return tensor.pad_zeros(e, e.shape[0], d_target)


def grow_linear(w, b, new_out, new_in):
    """Zero-pad a dense layer: source block top-left, bias zero-extended."""
    if new_out < w.shape[0] or new_in < w.shape[1]:
        raise PlanError(
            f"cannot shrink linear {w.shape} to ({new_out}, {new_in})"
        )
    return tensor.pad_zeros(w, new_out, new_in), _pad_vector(b, new_out)


def grow_layer_norm(gain, bias, d_target):
    """Copy LN parameters; new gain entries are 1, new bias entries 0."""
    if d_target < gain.shape[0]:
        raise PlanError(f"cannot shrink layer norm {gain.shape[0]} to {d_target}")
    return _pad_vector(gain, d_target, fill=1.0), _pad_vector(bias, d_target)


def _grow_head_rows(w, b, src, tgt, scale=None):
    """Move per-head row blocks into the target head slots, rest zero."""
    dh, dh2 = src.d_head, tgt.d_head
    out_w = np.zeros((tgt.inner_dim, tgt.d_model), dtype=w.dtype)
    out_b = np.zeros(tgt.inner_dim, dtype=b.dtype)
    for h in range(src.n_heads):
        blk_w = w[h * dh:(h + 1) * dh, :]
        blk_b = b[h * dh:(h + 1) * dh]
        if scale is not None:
            blk_w = blk_w * scale
            blk_b = blk_b * scale
        out_w[h * dh2:h * dh2 + dh, : src.d_model] = blk_w
        out_b[h * dh2:h * dh2 + dh] = blk_b
    return out_w, out_b


def grow_attention(layer, plan):
    """Grow one block's weights (attention projections, FFN, and LNs).

    add-heads keeps d_head and appends zero heads: their value vectors are
    all-zero, so the new heads contribute nothing. widen-heads zero-pads
    inside every head; with scale_compensation the copied query rows are
    multiplied by sqrt(d_head'/d_head) so the rescaled attention scores
    match the source exactly.
    """
    plan.validate()
    s, t = plan.source_cfg, plan.target_cfg
    scale = None
    if (plan.head_mode == HEAD_WIDEN and plan.scale_compensation
            and t.d_head != s.d_head):
        scale = layer.q_w.dtype.type(math.sqrt(t.d_head / s.d_head))
    q_w, q_b = _grow_head_rows(layer.q_w, layer.q_b, s, t, scale)
    k_w, k_b = _grow_head_rows(layer.k_w, layer.k_b, s, t)
    v_w, v_b = _grow_head_rows(layer.v_w, layer.v_b, s, t)

    o_w = np.zeros((t.d_model, t.inner_dim), dtype=layer.o_w.dtype)
    for h in range(s.n_heads):
        o_w[: s.d_model, h * t.d_head:h * t.d_head + s.d_head] = \
            layer.o_w[:, h * s.d_head:(h + 1) * s.d_head]
    o_b = _pad_vector(layer.o_b, t.d_model)

    ff1_w, ff1_b = grow_linear(layer.ff1_w, layer.ff1_b, t.d_ff, t.d_model)
    ff2_w, ff2_b = grow_linear(layer.ff2_w, layer.ff2_b, t.d_model, t.d_ff)
    ln1_g, ln1_b = grow_layer_norm(layer.ln1_g, layer.ln1_b, t.d_model)
    ln2_g, ln2_b = grow_layer_norm(layer.ln2_g, layer.ln2_b, t.d_model)
    return LayerWeights(q_w=q_w, q_b=q_b, k_w=k_w, k_b=k_b, v_w=v_w, v_b=v_b,
                        o_w=o_w, o_b=o_b, ln1_g=ln1_g, ln1_b=ln1_b,
                        ff1_w=ff1_w, ff1_b=ff1_b, ff2_w=ff2_w, ff2_b=ff2_b,
                        ln2_g=ln2_g, ln2_b=ln2_b)


def _new_layer(plan, rng, dtype):
    """Fresh top-of-stack layer per depth_init.

    zero-identity zeroes the residual projections (o_w, ff2_w and biases)
    so the block is exactly the identity map under pre-LN; the remaining
    matrices are sampled N(0, small_std) in the order q_w, k_w, v_w,
    (o_w,) ff1_w (, ff2_w). small-random samples all six. Other biases are
    zero, LN gains 1.
    """
    t = plan.target_cfg
    d, inner, ff = t.d_model, t.inner_dim, t.d_ff
    std = plan.small_std

    def sample(rows, cols):
        return tensor.sample_normal(rng, 0.0, std, rows, cols, dtype=dtype)

    random_residual = plan.depth_init == DEPTH_SMALL_RANDOM
    q_w = sample(inner, d)
    k_w = sample(inner, d)
    v_w = sample(inner, d)
    o_w = sample(d, inner) if random_residual else np.zeros((d, inner), dtype)
    ff1_w = sample(ff, d)
    ff2_w = sample(d, ff) if random_residual else np.zeros((d, ff), dtype)
    return LayerWeights(
        q_w=q_w, q_b=np.zeros(inner, dtype),
        k_w=k_w, k_b=np.zeros(inner, dtype),
        v_w=v_w, v_b=np.zeros(inner, dtype),
        o_w=o_w, o_b=np.zeros(d, dtype),
        ln1_g=np.ones(d, dtype), ln1_b=np.zeros(d, dtype),
        ff1_w=ff1_w, ff1_b=np.zeros(ff, dtype),
        ff2_w=ff2_w, ff2_b=np.zeros(d, dtype),
        ln2_g=np.ones(d, dtype), ln2_b=np.zeros(d, dtype),
    )


def grow_depth(layers, plan, rng=None):
    """Keep the (already grown) source layers at the bottom of the stack
    and append fresh layers on top."""
    plan.validate()
    if rng is None:
        rng = tensor.Rng(plan.seed)
    dtype = layers[0].q_w.dtype if layers else np.float32
    grown = list(layers)
    for _ in range(plan.target_cfg.n_layers - plan.source_cfg.n_layers):
        grown.append(_new_layer(plan, rng, dtype))
    return grown


def _named(name, fn):
    try:
        return fn()
    except TtfrError as exc:
        raise PlanError(f"{name}: {exc}") from exc


def grow_model(w, plan):
    """Apply all transfer operators; returns (weights, equivalence class).

    The plan's seed drives one random stream, consumed in a fixed order:
    new position rows first (when new_pos_init is small-random), then each
    new layer bottom-up. Identity plans are bitwise fixpoints.
    """
    plan.validate()
    s, t = plan.source_cfg, plan.target_cfg
    model.validate_weights(s, w)
    dtype = w.dtype
    rng = tensor.Rng(plan.seed)

    tok_emb = _named("tok_emb", lambda: grow_embedding(w.tok_emb, t.d_model))
    pos_emb = _named("pos_emb", lambda: grow_embedding(w.pos_emb, t.d_model))
    if t.max_seq_len > s.max_seq_len:
        extra = t.max_seq_len - s.max_seq_len
        if plan.new_pos_init == POS_SMALL_RANDOM:
            new_rows = tensor.sample_normal(rng, 0.0, plan.small_std, extra,
                                            t.d_model, dtype=dtype)
        else:
            new_rows = np.zeros((extra, t.d_model), dtype)
        pos_emb = np.concatenate([pos_emb, new_rows], axis=0)

    type_emb = None
    if w.type_emb is not None:
        type_emb = _named("type_emb", lambda: grow_embedding(w.type_emb, t.d_model))
    lm_head = None
    if w.lm_head is not None:
        lm_head = _named("lm_head", lambda: grow_embedding(w.lm_head, t.d_model))

    layers = [
        _named(f"layers.{i}", lambda layer=layer: grow_attention(layer, plan))
        for i, layer in enumerate(w.layers)
    ]
    layers = grow_depth(layers, plan, rng=rng)

    final_ln_gain, final_ln_bias = _named(
        "final_ln_gain",
        lambda: grow_layer_norm(w.final_ln_gain, w.final_ln_bias, t.d_model),
    )
    grown = ModelWeights(tok_emb=tok_emb, pos_emb=pos_emb, layers=layers,
                         final_ln_gain=final_ln_gain, final_ln_bias=final_ln_bias,
                         type_emb=type_emb, lm_head=lm_head)
    model.validate_weights(t, grown)
    return grown, classify(plan)
