"""Shared helpers for the test suite (not collected by pytest)."""

from ttfr import model, tensor, trainer


def make_corpus(seed, n_bytes, n_words=1500, n_succ=8, min_len=3, spread=7):
    """Deterministic word-soup corpus with first-order word transitions.

    Words are random lowercase strings; each word picks its successor
    uniformly from a fixed per-word menu of `n_succ` words, giving a
    learnable structure whose entropy is tuned by the menu size and word
    inventory. Byte-identical for a given parameter set on any platform.
    """
    rng = tensor.Rng(seed)
    letters = b"abcdefghijklmnopqrstuvwxyz"
    words = [
        bytes(letters[rng.below(26)] for _ in range(min_len + rng.below(spread)))
        for _ in range(n_words)
    ]
    succ = [[rng.below(n_words) for _ in range(n_succ)] for _ in range(n_words)]
    out = bytearray()
    cur = rng.below(n_words)
    while len(out) < n_bytes:
        out += words[cur] + b" "
        cur = succ[cur][rng.below(n_succ)]
    return bytes(out[:n_bytes])


def eval_loss(cfg, w, corpus, n_windows=16, seq_len=64, seed=999):
    """Mean lm_loss over fixed seeded windows; the step-0/final-loss probe."""
    ids = trainer.CharTokenizer().encode(corpus)
    rng = tensor.Rng(seed)
    total = 0.0
    for _ in range(n_windows):
        start = rng.below(ids.size - seq_len + 1)
        total += model.lm_loss(cfg, w, ids[start:start + seq_len])
    return total / n_windows


def moving_average(log, upto_step, width=100):
    """Mean loss of the `width` logged rows ending at upto_step."""
    rows = [loss for step, loss in log if step < upto_step][-width:]
    return sum(rows) / len(rows)
