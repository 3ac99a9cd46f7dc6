"""CLI: serve a model over the wire protocol, export embeddings, train soft tokens."""

from __future__ import annotations

import argparse
import json
import sys

from lm_service import softio
from lm_service.service import MaskedLmService, ServiceConfig, ServiceError
from lm_service.train import TrainSample, train_soft_tokens
from lm_service.wire import serve_stdio, serve_tcp


def _add_model_args(parser) -> None:
    parser.add_argument("--model", help="pretrained masked-LM name or path")
    parser.add_argument("--toy-vocab", help="vocab.txt for a random toy model (offline)")
    parser.add_argument("--toy-hidden", type=int, default=32)
    parser.add_argument("--toy-layers", type=int, default=2)
    parser.add_argument("--toy-heads", type=int, default=2)
    parser.add_argument("--toy-seed", type=int, default=0)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--soft-checkpoint", help="bind soft placeholders from this file")
    parser.add_argument("--max-batch", type=int, default=8)


def _service(args) -> MaskedLmService:
    config = ServiceConfig(
        model=args.model, device=args.device, max_batch=args.max_batch,
        soft_checkpoint=args.soft_checkpoint, toy_vocab=args.toy_vocab,
        toy_hidden=args.toy_hidden, toy_layers=args.toy_layers,
        toy_heads=args.toy_heads, toy_seed=args.toy_seed,
    )
    return MaskedLmService.from_config(config)


def cmd_serve(args) -> int:
    service = _service(args)
    if args.tcp:
        host, _, port = args.tcp.rpartition(":")
        serve_tcp(service, host or "127.0.0.1", int(port))
    else:
        serve_stdio(service)
    return 0


def cmd_export_embeddings(args) -> int:
    service = _service(args)
    rows = service.export_embeddings(args.out)
    print(f"exported {rows} embedding rows ({service.dim} dims) to {args.out}",
          file=sys.stderr)
    return 0


def cmd_train_soft(args) -> int:
    service = _service(args)
    samples = []
    with open(args.data, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("record") == "header":
                continue
            if args.split and record.get("split") not in (args.split, None):
                continue
            samples.append(TrainSample(subject_label=record["subject_label"],
                                       golds=list(record["golds"]),
                                       context=record.get("context")))
    init = None
    if args.init:
        init, _ = softio.read_soft_checkpoint(args.init)
    result = train_soft_tokens(service, samples, args.skeleton, args.out,
                               loss=args.loss, epochs=args.epochs, lr=args.lr,
                               seed=args.seed, init=init)
    status = "aborted on non-finite loss" if result.aborted else "finished"
    print(f"{status} after {result.epochs_run} epochs "
          f"(final loss {result.final_loss}) -> {result.checkpoint_path}",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lm_service")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="speak the wire protocol on stdio or TCP")
    _add_model_args(p)
    p.add_argument("--tcp", help="listen on host:port instead of stdio")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export-embeddings", help="write the static embedding table")
    _add_model_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_embeddings)

    p = sub.add_parser("train-soft", help="tune soft tokens on a frozen model")
    _add_model_args(p)
    p.add_argument("--data", required=True, help="sample JSONL (subject_label, golds)")
    p.add_argument("--split", default="train", help="use samples with this split tag")
    p.add_argument("--skeleton", default="{subj} {s1} {s2} {s3} {mask} .")
    p.add_argument("--loss", choices=("bce", "nll"), default="bce")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", help="warm-start from an existing checkpoint")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_soft)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ServiceError, softio.FormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
