"""Hand-written backpropagation and Adam for the decoder model.

Gradients are exact analytic derivatives of `lm_loss` with respect to
every parameter, including through layer norm, softmax attention, GELU,
and tied embeddings (the embedding gradient is the input-lookup gradient
plus the lm-head gradient). Batch items reduce in fixed index order, so
identical (seed, corpus, configs) give identical loss logs.
"""

from dataclasses import dataclass

import numpy as np

from ttfr import model, tensor
from ttfr.errors import InputError, ParameterError, ShapeError, UnsupportedError
from ttfr.tensor import matmul, transpose


@dataclass
class TrainConfig:
    lr: float
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 8
    seq_len: int = 64
    steps: int = 100
    seed: int = 0
    log_every: int = 10
    grad_clip_norm: float = 1.0  # 0 disables clipping

    def validate(self):
        if self.lr <= 0:
            raise ParameterError(f"lr must be > 0, got {self.lr}")
        for name in ("adam_beta1", "adam_beta2"):
            beta = getattr(self, name)
            if not 0 <= beta < 1:
                raise ParameterError(f"{name} must be in [0, 1), got {beta}")
        if self.adam_eps <= 0:
            raise ParameterError("adam_eps must be > 0")
        for name in ("batch_size", "steps", "log_every"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.seq_len < 2:
            raise ParameterError("seq_len must be >= 2")
        if self.grad_clip_norm < 0:
            raise ParameterError("grad_clip_norm must be >= 0")
        return self


@dataclass
class OptimizerState:
    m: model.ModelWeights
    v: model.ModelWeights
    step: int = 0


def init_optimizer_state(cfg, dtype=np.float32):
    return OptimizerState(m=model.zeros_weights(cfg, dtype),
                          v=model.zeros_weights(cfg, dtype), step=0)


class CharTokenizer:
    """Byte-level tokenizer: identity over 0..255 plus reserved tail ids."""

    def __init__(self, n_reserved=0):
        self.vocab_size = 256 + n_reserved

    def encode(self, data):
        if isinstance(data, str):
            data = data.encode("utf-8")
        return np.frombuffer(bytes(data), dtype=np.uint8).astype(np.int64)

    def decode(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() > 255):
            raise InputError("reserved ids have no byte form")
        return ids.astype(np.uint8).tobytes()


def _gelu_grad(x):
    dt = x.dtype.type
    c1 = dt(0.7978845608028654)
    c2 = dt(0.044715)
    t = np.tanh(c1 * (x + c2 * (x * x * x)))
    return dt(0.5) * (dt(1.0) + t) + dt(0.5) * x * (dt(1.0) - t * t) \
        * c1 * (dt(1.0) + dt(3.0) * c2 * x * x)


def _ln_bwd(dy, ln_cache, gain):
    """Backward through gain*(x-mu)/sqrt(var+eps)+bias with biased variance."""
    if ln_cache is None:  # layer norm disabled: identity map
        return dy, None, None
    xhat, inv = ln_cache
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=1, keepdims=True, dtype=dy.dtype)
    m2 = (dxhat * xhat).mean(axis=1, keepdims=True, dtype=dy.dtype)
    return (dxhat - m1 - xhat * m2) * inv, dgain, dbias


def _attn_bwd(cfg, layer, lc, dattn, g):
    dh = cfg.d_head
    q, k, v, z, a = lc["q"], lc["k"], lc["v"], lc["z"], lc["a"]
    inv_scale = q.dtype.type(1.0 / np.sqrt(dh))
    g.o_w += matmul(transpose(dattn), z)
    g.o_b += dattn.sum(axis=0)
    dz = matmul(dattn, layer.o_w)
    dq = np.empty_like(q)
    dk = np.empty_like(k)
    dv = np.empty_like(v)
    for h in range(cfg.n_heads):
        sl = slice(h * dh, (h + 1) * dh)
        p = lc["p"][h]
        dzh = dz[:, sl]
        dp = tensor.matmul_nt(dzh, v[:, sl])
        dv[:, sl] = matmul(transpose(p), dzh)
        ds = p * (dp - (dp * p).sum(axis=1, keepdims=True))
        dq[:, sl] = matmul(ds, k[:, sl]) * inv_scale
        dk[:, sl] = matmul(transpose(ds), q[:, sl]) * inv_scale
    g.q_w += matmul(transpose(dq), a)
    g.q_b += dq.sum(axis=0)
    g.k_w += matmul(transpose(dk), a)
    g.k_b += dk.sum(axis=0)
    g.v_w += matmul(transpose(dv), a)
    g.v_b += dv.sum(axis=0)
    da = matmul(dq, layer.q_w)
    da += matmul(dk, layer.k_w)
    da += matmul(dv, layer.v_w)
    return da


def _ffn_bwd(layer, lc, dff, g):
    f, z1, a1 = lc["f"], lc["z1"], lc["a1"]
    g.ff2_w += matmul(transpose(dff), a1)
    g.ff2_b += dff.sum(axis=0)
    da1 = matmul(dff, layer.ff2_w)
    dz1 = da1 * _gelu_grad(z1)
    g.ff1_w += matmul(transpose(dz1), f)
    g.ff1_b += dz1.sum(axis=0)
    return matmul(dz1, layer.ff1_w)


def loss_and_grads(cfg, w, tokens):
    """One forward/backward pass; returns (lm_loss, gradient container)."""
    if cfg.arch != model.ARCH_DECODER:
        raise UnsupportedError("backward supports decoder-causal models only")
    logits, cache = model.forward_cached(cfg, w, tokens)
    ids = cache["ids"]
    n = ids.size
    if n < 2:
        raise InputError("need at least 2 tokens to train on")
    loss = float(model._row_cross_entropy(logits[:-1], ids[1:]).mean())

    grads = model.zeros_weights(cfg, w.dtype)
    n_pred = n - 1
    dlogits = tensor.softmax_rows(logits)
    dlogits[np.arange(n_pred), ids[1:]] -= 1.0
    dlogits[-1] = 0.0
    dlogits *= dlogits.dtype.type(1.0 / n_pred)

    head = w.head_matrix()
    dh_top = matmul(dlogits, head)
    d_head = matmul(transpose(dlogits), cache["h"])
    if w.lm_head is None:
        grads.tok_emb += d_head
    else:
        grads.lm_head += d_head

    dx, dg, db = _ln_bwd(dh_top, cache["ln_f"], w.final_ln_gain)
    if dg is not None:
        grads.final_ln_gain += dg
        grads.final_ln_bias += db

    pre = cfg.ln_mode == model.LN_PRE
    for layer, g, lc in zip(reversed(w.layers), reversed(grads.layers),
                            reversed(cache["layers"])):
        if pre:
            # x_out = x_mid + ffn(ln2(x_mid)); x_mid = x_in + attn(ln1(x_in))
            df = _ffn_bwd(layer, lc, dx, g)
            dmid, dg2, db2 = _ln_bwd(df, lc["ln2"], layer.ln2_g)
            if dg2 is not None:
                g.ln2_g += dg2
                g.ln2_b += db2
            dx_mid = dx + dmid
            da = _attn_bwd(cfg, layer, lc, dx_mid, g)
            din, dg1, db1 = _ln_bwd(da, lc["ln1"], layer.ln1_g)
            if dg1 is not None:
                g.ln1_g += dg1
                g.ln1_b += db1
            dx = dx_mid + din
        else:
            # x_out = ln2(x_mid + ffn(x_mid)); x_mid = ln1(x_in + attn(x_in))
            dr2, dg2, db2 = _ln_bwd(dx, lc["ln2"], layer.ln2_g)
            if dg2 is not None:
                g.ln2_g += dg2
                g.ln2_b += db2
            df = _ffn_bwd(layer, lc, dr2, g)
            dx_mid = dr2 + df
            dr1, dg1, db1 = _ln_bwd(dx_mid, lc["ln1"], layer.ln1_g)
            if dg1 is not None:
                g.ln1_g += dg1
                g.ln1_b += db1
            da = _attn_bwd(cfg, layer, lc, dr1, g)
            dx = dr1 + da

    np.add.at(grads.tok_emb, ids, dx)
    grads.pos_emb[:n] += dx
    return loss, grads


def backward(cfg, w, tokens):
    """Analytic gradients of lm_loss, shaped exactly like the weights."""
    return loss_and_grads(cfg, w, tokens)[1]


def _arrays(w):
    """Parameter arrays in the fixed update order (tied head excluded)."""
    out = [w.tok_emb, w.pos_emb]
    if w.type_emb is not None:
        out.append(w.type_emb)
    for layer in w.layers:
        out.extend(getattr(layer, name) for name in model.LAYER_FIELDS)
    out.extend([w.final_ln_gain, w.final_ln_bias])
    if w.lm_head is not None:
        out.append(w.lm_head)
    return out


def grad_global_norm(grads):
    total = 0.0
    for g in _arrays(grads):
        total += float((g.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def adam_step(w, grads, state, tcfg):
    """Bias-corrected Adam update (in place) after global-norm clipping."""
    ws, gs = _arrays(w), _arrays(grads)
    ms, vs = _arrays(state.m), _arrays(state.v)
    if any(wa.shape != ga.shape for wa, ga in zip(ws, gs)) or len(ws) != len(gs):
        raise ShapeError("gradient shapes do not mirror the weights")

    scale = 1.0
    if tcfg.grad_clip_norm > 0:
        norm = grad_global_norm(grads)
        if norm > tcfg.grad_clip_norm:
            scale = tcfg.grad_clip_norm / norm

    state.step += 1
    b1, b2 = tcfg.adam_beta1, tcfg.adam_beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for wa, ga, ma, va in zip(ws, gs, ms, vs):
        g = ga if scale == 1.0 else ga * wa.dtype.type(scale)
        ma *= b1
        ma += (1.0 - b1) * g
        va *= b2
        va += (1.0 - b2) * (g * g)
        wa -= tcfg.lr * (ma / bc1) / (np.sqrt(va / bc2) + tcfg.adam_eps)
    return w, state


def train(cfg, w, corpus, tcfg):
    """Train on seeded fixed-length windows sampled with replacement.

    Returns (weights, loss_log); the log holds (step, batch mean loss)
    rows every `log_every` steps plus the final step. The logged loss is
    evaluated before that step's update, so row 0 is the warm-start loss.
    """
    tcfg.validate()
    if cfg.arch != model.ARCH_DECODER:
        raise UnsupportedError("train supports decoder-causal models only")
    if tcfg.seq_len > cfg.max_seq_len:
        raise ParameterError("seq_len exceeds the model's max_seq_len")
    ids = CharTokenizer().encode(corpus)
    if ids.size < tcfg.seq_len + 1:
        raise InputError(
            f"corpus has {ids.size} tokens; needs at least seq_len+1 "
            f"= {tcfg.seq_len + 1}"
        )
    if ids.max() >= cfg.vocab_size:
        raise InputError("corpus byte ids exceed the model vocabulary")

    rng = tensor.Rng(tcfg.seed)
    state = init_optimizer_state(cfg, w.dtype)
    n_starts = int(ids.size) - tcfg.seq_len + 1
    inv_batch = 1.0 / tcfg.batch_size
    log = []
    for step in range(tcfg.steps):
        accum = model.zeros_weights(cfg, w.dtype)
        acc_arrays = _arrays(accum)
        loss_sum = 0.0
        for _ in range(tcfg.batch_size):
            start = rng.below(n_starts)
            window = ids[start:start + tcfg.seq_len]
            loss, grads = loss_and_grads(cfg, w, window)
            loss_sum += loss
            for acc, g in zip(acc_arrays, _arrays(grads)):
                acc += g
        for acc in acc_arrays:
            acc *= acc.dtype.type(inv_batch)
        mean_loss = loss_sum * inv_batch
        if step % tcfg.log_every == 0 or step == tcfg.steps - 1:
            log.append((step, mean_loss))
        adam_step(w, accum, state, tcfg)
    return w, log


def write_loss_log(path, log):
    """CSV loss log: header "step,loss", one row per log point."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, loss in log:
            fh.write(f"{step},{loss!r}\n")
