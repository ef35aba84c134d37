"""Command-line pipeline: init, train, grow, verify, eval, fill-mask.

Machine-readable JSON goes to stdout, human summaries to stderr. Exit
codes: 0 success, 1 domain failure, 2 usage error (including a bad
config file passed to init). Every subcommand is deterministic given its
flags; all randomness is seed-controlled.
"""

import argparse
import json
import sys

from ttfr import checkpoint, growth, model, trainer, verify
from ttfr.errors import ParameterError, TtfrError
from ttfr.growth import GrowthPlan
from ttfr.model import ModelConfig
from ttfr.trainer import CharTokenizer, TrainConfig


def _say(msg):
    print(msg, file=sys.stderr)


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_init(args):
    try:
        with open(args.config, "r", encoding="utf-8") as fh:
            cfg = ModelConfig.from_dict(json.load(fh))
    except (OSError, json.JSONDecodeError, ParameterError, TypeError) as exc:
        _say(f"ttfr init: bad config: {exc}")
        return 2
    w = model.init_weights(cfg, seed=args.seed, std=args.init_std)
    checkpoint.save(args.out, cfg, w)
    n = model.param_count(cfg)
    _say(f"initialized {cfg.arch} model, {n} parameters -> {args.out}")
    _emit({"path": args.out, "param_count": n})
    return 0


def cmd_train(args):
    cfg, w = checkpoint.load(args.model)
    with open(args.corpus, "rb") as fh:
        corpus = fh.read()
    tcfg = TrainConfig(
        lr=args.lr, batch_size=args.batch_size, seq_len=args.seq_len,
        steps=args.steps, seed=args.seed, log_every=args.log_every,
        grad_clip_norm=args.grad_clip_norm,
    ).validate()
    w, log = trainer.train(cfg, w, corpus, tcfg)
    checkpoint.save(args.out, cfg, w)
    if args.log:
        trainer.write_loss_log(args.log, log)
    _say(f"trained {tcfg.steps} steps; final loss {log[-1][1]:.4f} -> {args.out}")
    _emit({"out": args.out, "steps": tcfg.steps,
           "first_loss": log[0][1], "final_loss": log[-1][1]})
    return 0


def cmd_grow(args):
    src_cfg, src_w = checkpoint.load(args.source)
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = GrowthPlan.from_dict(json.load(fh))
    if plan.source_cfg != src_cfg:
        raise ParameterError("plan source_cfg does not match the checkpoint")
    grown, label = growth.grow_model(src_w, plan)
    checkpoint.save(args.out, plan.target_cfg, grown)
    src_n = model.param_count(src_cfg)
    tgt_n = model.param_count(plan.target_cfg)
    _say(f"grew {src_n} -> {tgt_n} parameters ({label}) -> {args.out}")
    _emit({
        "equivalence_class": label,
        "source_params": src_n,
        "target_params": tgt_n,
        "source_tensors": len(model.named_tensors(src_cfg, src_w)),
        "target_tensors": len(model.named_tensors(plan.target_cfg, grown)),
        "out": args.out,
    })
    return 0


def cmd_verify(args):
    src_cfg, src_w = checkpoint.load(args.source)
    tgt_cfg, tgt_w = checkpoint.load(args.target)
    max_len = min(src_cfg.max_seq_len, tgt_cfg.max_seq_len)
    seqs = verify.generate_sequences(src_cfg.vocab_size, max_len,
                                     args.n_seqs, args.seed)
    report = verify.compare_models(src_cfg, src_w, tgt_cfg, tgt_w, seqs)
    _emit(report.to_dict())
    if report.failed:
        _say(f"verify FAILED: class {report.equivalence_class} but max logit "
             f"diff {report.max_abs_logit_diff:.3g} > {verify.EXACT_LOGIT_TOL}")
        return 1
    _say(f"verify ok: {report.equivalence_class}, max diff "
         f"{report.max_abs_logit_diff:.3g}, agreement {report.argmax_agreement:.3f}")
    return 0


def cmd_eval(args):
    cfg, w = checkpoint.load(args.model)
    with open(args.corpus, "rb") as fh:
        tokens = CharTokenizer().encode(fh.read())
    ppl = verify.perplexity(cfg, w, tokens)
    _say(f"perplexity {ppl:.4f} over {tokens.size} tokens")
    _emit({"perplexity": ppl, "n_tokens": int(tokens.size)})
    return 0


def cmd_fill_mask(args):
    cfg, w = checkpoint.load(args.model)
    tokens = CharTokenizer().encode(args.text)
    topk = verify.fill_mask_topk(cfg, w, tokens, args.position, args.k)
    printable = [chr(t) if t < 256 else f"<{t}>" for t in topk]
    _say(f"top-{len(topk)} at position {args.position}: {printable}")
    _emit({"position": args.position, "topk": topk})
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ttfr",
        description="Grow a small trained transformer into a larger one.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a randomly initialized checkpoint")
    p.add_argument("--config", required=True, help="model config JSON file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output .ttfr path")
    p.add_argument("--init-std", type=float, default=0.02)
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("train", help="train a decoder checkpoint on a bytes corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True, help="raw bytes corpus file")
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None, help="CSV loss log path")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--seq-len", type=int, default=64)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-every", type=int, default=10)
    p.add_argument("--grad-clip-norm", type=float, default=1.0)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("grow", help="grow a checkpoint per a growth plan")
    p.add_argument("--source", required=True)
    p.add_argument("--plan", required=True, help="growth plan JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_grow)

    p = sub.add_parser("verify", help="compare two checkpoints' outputs")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--n-seqs", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("eval", help="perplexity of a checkpoint on a corpus")
    p.add_argument("--model", required=True)
    p.add_argument("--corpus", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("fill-mask", help="top-k mask filling (encoder models)")
    p.add_argument("--model", required=True)
    p.add_argument("--text", required=True)
    p.add_argument("--position", type=int, required=True)
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(fn=cmd_fill_mask)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except TtfrError as exc:
        _say(f"ttfr {args.command}: {exc}")
        return 1
    except OSError as exc:
        _say(f"ttfr {args.command}: {exc}")
        return 1


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
