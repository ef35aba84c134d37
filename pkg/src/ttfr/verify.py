"""Function-preservation measurement and toy evaluation.

`compare_models` quantifies output divergence between a source and a
grown model over a probe set: logit differences index-aligned over the
shared vocabulary, KL(source || target) of the softmax distributions, and
argmax agreement. A report claiming the "exact" equivalence class is
flagged FAILED unless the max logit difference stays within 1e-4.
"""

from dataclasses import dataclass

import numpy as np

from ttfr import growth, model, tensor
from ttfr.errors import InputError

EXACT_LOGIT_TOL = 1e-4

REPORT_FIELDS = (
    "n_sequences",
    "max_abs_logit_diff",
    "mean_abs_logit_diff",
    "mean_kl",
    "argmax_agreement",
    "equivalence_class",
    "failed",
)


@dataclass
class EquivalenceReport:
    n_sequences: int
    max_abs_logit_diff: float
    mean_abs_logit_diff: float
    mean_kl: float
    argmax_agreement: float
    equivalence_class: str
    failed: bool

    def to_dict(self):
        return {name: getattr(self, name) for name in REPORT_FIELDS}


def infer_equivalence_class(src_cfg, tgt_cfg, tgt_w=None):
    """Conservative classification when no growth plan is available.

    Depth-only pre-LN growth is recognized as exact by inspecting the new
    top layers for zeroed residual projections; anything else with live
    layer norms and changed width is exact only modulo LayerNorm.
    """
    if not tgt_cfg.ln_enabled:
        return growth.EXACT
    width_same = all(
        getattr(src_cfg, name) == getattr(tgt_cfg, name)
        for name in ("d_model", "n_heads", "d_head", "d_ff", "max_seq_len")
    )
    if not width_same:
        return growth.EXACT_MODULO_LN
    if src_cfg.n_layers == tgt_cfg.n_layers:
        return growth.EXACT
    if tgt_cfg.ln_mode == model.LN_PRE and tgt_w is not None:
        new_layers = tgt_w.layers[src_cfg.n_layers:]
        if all(
            np.all(layer.o_w == 0) and np.all(layer.o_b == 0)
            and np.all(layer.ff2_w == 0) and np.all(layer.ff2_b == 0)
            for layer in new_layers
        ):
            return growth.EXACT
    return growth.EXACT_MODULO_LN


def _log_softmax64(logits):
    l64 = logits.astype(np.float64)
    m = l64.max(axis=1, keepdims=True)
    return l64 - (m + np.log(np.exp(l64 - m).sum(axis=1, keepdims=True)))


def compare_models(src_cfg, src_w, tgt_cfg, tgt_w, seqs, equivalence_class=None):
    """Index-aligned logit comparison over a list of token sequences.

    Sums reduce in sequence order so the report is deterministic. mean_kl
    is KL(source softmax || target softmax), natural log, averaged over
    all positions; it is directional, unlike the absolute-diff metrics.
    """
    if src_cfg.vocab_size != tgt_cfg.vocab_size:
        raise InputError("vocab_size mismatch between source and target")
    if not seqs:
        raise InputError("need at least one probe sequence")
    if equivalence_class is None:
        equivalence_class = infer_equivalence_class(src_cfg, tgt_cfg, tgt_w)

    max_diff = 0.0
    diff_sum = 0.0
    diff_count = 0
    kl_sum = 0.0
    pos_count = 0
    agree = 0
    for seq in seqs:
        la = model.forward(src_cfg, src_w, seq)
        lb = model.forward(tgt_cfg, tgt_w, seq)
        diff = np.abs(la.astype(np.float64) - lb.astype(np.float64))
        max_diff = max(max_diff, float(diff.max()))
        diff_sum += float(diff.sum())
        diff_count += diff.size
        lsa = _log_softmax64(la)
        lsb = _log_softmax64(lb)
        kl_sum += float((np.exp(lsa) * (lsa - lsb)).sum())
        pos_count += la.shape[0]
        agree += int((la.argmax(axis=1) == lb.argmax(axis=1)).sum())

    report = EquivalenceReport(
        n_sequences=len(seqs),
        max_abs_logit_diff=max_diff,
        mean_abs_logit_diff=diff_sum / diff_count,
        mean_kl=max(kl_sum / pos_count, 0.0),
        argmax_agreement=agree / pos_count,
        equivalence_class=equivalence_class,
        failed=(equivalence_class == growth.EXACT and max_diff > EXACT_LOGIT_TOL),
    )
    return report


def generate_sequences(vocab_size, max_len, n, seed):
    """Seeded probe sequences, uniform ids, lengths cycling {1, max/2, max}."""
    rng = tensor.Rng(seed)
    lengths = sorted({1, max(max_len // 2, 1), max_len})
    seqs = []
    for i in range(n):
        length = lengths[i % len(lengths)]
        seqs.append([rng.below(vocab_size) for _ in range(length)])
    return seqs


def perplexity(cfg, w, corpus_tokens):
    """exp(mean next-token cross-entropy) over non-overlapping windows."""
    ids = np.asarray(corpus_tokens, dtype=np.int64)
    if ids.size < 2:
        raise InputError("corpus must hold at least 2 tokens")
    total = 0.0
    count = 0
    for start in range(0, ids.size, cfg.max_seq_len):
        win = ids[start:start + cfg.max_seq_len]
        if win.size < 2:
            break
        logits = model.forward(cfg, w, win)
        total += float(model._row_cross_entropy(logits[:-1], win[1:]).sum())
        count += win.size - 1
    if count == 0:
        raise InputError("no window long enough for next-token prediction")
    return float(np.exp(total / count))


def fill_mask_topk(cfg, w, tokens, position, k):
    """Top-k token ids by logit at a masked position, ties to the lower id."""
    if cfg.arch != model.ARCH_ENCODER:
        raise InputError("fill-mask requires an encoder-bidirectional model")
    if k < 1:
        raise InputError(f"k must be >= 1, got {k}")
    ids = np.asarray(tokens, dtype=np.int64)
    if position < 0 or position >= ids.size:
        raise InputError(f"position {position} out of range")
    masked = ids.copy()
    masked[position] = model.mask_token_id(cfg)
    logits = model.forward(cfg, w, masked)
    order = np.argsort(-logits[position], kind="stable")
    return [int(t) for t in order[: min(k, cfg.vocab_size)]]


def topk_accuracy(cfg, w, probes, k):
    """Fraction of (tokens, position, gold_id) probes with gold in the top-k."""
    if not probes:
        raise InputError("probes must be non-empty")
    hits = 0
    for tokens, position, gold in probes:
        if gold in fill_mask_topk(cfg, w, tokens, position, k):
            hits += 1
    return hits / len(probes)
