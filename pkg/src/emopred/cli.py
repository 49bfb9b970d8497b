"""Command-line pipeline: features, annotate, train, predict, encode, eval.

Each subcommand reads and writes the package's file formats so every
stage's output is an inspectable fixture for the next. A plain
`key = value` config file can seed any subcommand's options (flags win);
the fully resolved configuration is echoed to stderr on every run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import afeat, corpusio, encoder, predictor, ranker, textembed

ENDPOINT_ENV_VAR = "EMOPRED_ENDPOINT"


def _parse_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _apply_config(parser: argparse.ArgumentParser, args: argparse.Namespace,
                  argv: list[str]) -> argparse.Namespace:
    """Fill options from the config file, then re-apply flag overrides."""
    if not getattr(args, "config", None):
        return args
    file_values = _parse_config_file(args.config)
    actions = {a.dest: a for a in parser._actions}
    known = {d for d in actions if d not in ("help", "config")}
    unknown = set(file_values) - known
    if unknown:
        raise ValueError(
            f"{args.config}: unknown config keys: {sorted(unknown)}"
        )
    converted = {}
    for key, raw in file_values.items():
        action = actions[key]
        converted[key] = action.type(raw) if action.type else raw
    parser.set_defaults(**converted)
    return parser.parse_args(argv)


def _echo_config(args: argparse.Namespace, command: str) -> None:
    print(f"[{command}] resolved configuration:", file=sys.stderr)
    for key in sorted(vars(args)):
        if key in ("func", "config", "command", "subparser"):
            continue
        print(f"  {key} = {getattr(args, key)}", file=sys.stderr)


def _provider_from_args(args: argparse.Namespace):
    endpoint = os.environ.get(ENDPOINT_ENV_VAR) or args.endpoint
    config = textembed.ProviderConfig(
        mode=args.provider, endpoint=endpoint or "",
        timeout=args.timeout, seed=args.embed_seed,
    )
    return textembed.make_provider(config)


def _add_provider_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--provider", type=str, default="local",
                     choices=("local", "remote"),
                     help="embedding provider (default: local)")
    sub.add_argument("--endpoint", type=str, default="",
                     help=f"remote endpoint (env {ENDPOINT_ENV_VAR} overrides)")
    sub.add_argument("--timeout", type=float, default=10.0,
                     help="remote request timeout in seconds")
    sub.add_argument("--embed-seed", type=int, default=0,
                     help="seed for the local provider")


def _read_texts(path: str) -> tuple[list[str], list[str]]:
    """Texts file: JSONL with id/text fields, or one plain sentence per
    line (ids are then the 1-based line numbers)."""
    ids, texts = [], []
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    jsonl = next((ln for ln in lines if ln.strip()), "").lstrip().startswith("{")
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if jsonl:
            obj = json.loads(line)
            ids.append(str(obj["id"]))
            texts.append(str(obj["text"]))
        else:
            ids.append(f"{lineno:06d}")
            texts.append(line)
    if not texts:
        raise ValueError(f"{path}: no texts found")
    return ids, texts


# ---------------------------------------------------------------------------
# Subcommands


def cmd_features(args) -> int:
    records = corpusio.read_manifest(args.manifest)
    features: dict[str, np.ndarray] = {}
    for rec in records:
        try:
            clip = afeat.load_audio(rec.audio_path)
            features[rec.id] = afeat.extract_features(clip)
        except (OSError, ValueError) as exc:
            raise RuntimeError(f"utterance {rec.id!r}: {exc}") from exc
    corpusio.write_features(features, args.out, order=[r.id for r in records])
    print(f"wrote {len(features)} feature vectors to {args.out}",
          file=sys.stderr)
    return 0


def cmd_annotate(args) -> int:
    records = corpusio.read_manifest(args.manifest)
    features = corpusio.read_features(args.features)
    annotated, models = ranker.annotate_corpus(
        records, features, c=args.C, epochs=args.epochs,
        max_pairs=args.max_pairs, seed=args.seed,
    )
    corpusio.write_annotations(annotated, args.out)
    if args.models_out:
        out_dir = Path(args.models_out)
        out_dir.mkdir(parents=True, exist_ok=True)
        for emotion, model in models.items():
            corpusio.save_model(ranker.rank_model_to_artifact(model),
                                out_dir / f"rank_{emotion}.json")
    for emotion, model in sorted(models.items()):
        print(f"{emotion}: objective={model.objective:.6f} "
              f"pair_accuracy={model.pair_accuracy:.3f}", file=sys.stderr)
    print(f"wrote {len(annotated)} annotations to {args.out}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    records = corpusio.read_annotations(args.annotated)
    provider = _provider_from_args(args)
    config = predictor.TrainConfig(
        lambda_cls=args.lambda_cls, learning_rate=args.lr,
        batch_size=args.batch_size, epochs=args.epochs,
        seed=args.seed, init_scale=args.init_scale,
    )
    params, trace = predictor.train(records, provider, config)
    metadata = {
        "lambda_cls": repr(config.lambda_cls),
        "learning_rate": repr(config.learning_rate),
        "batch_size": str(config.batch_size),
        "epochs": str(config.epochs),
        "seed": str(config.seed),
        "init_scale": repr(config.init_scale),
        "final_loss": repr(trace[-1]) if trace else "nan",
    }
    corpusio.save_model(predictor.params_to_artifact(params, metadata),
                        args.out)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for value in trace:
                fh.write(f"{value!r}\n")
    print(f"trained {config.epochs} epochs, final loss {trace[-1]:.6f}",
          file=sys.stderr)
    return 0


def cmd_predict(args) -> int:
    params = predictor.params_from_artifact(corpusio.load_model(args.model))
    provider = _provider_from_args(args)
    ids, texts = _read_texts(args.texts)
    window = args.window if args.window > 0 else None
    predictions = predictor.predict(texts, params, provider,
                                    mode=args.mode, context_window=window)
    payload = predictor.predictions_to_jsonl(ids, predictions)
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    print(f"predicted {len(predictions)} sentences ({args.mode} mode)",
          file=sys.stderr)
    return 0


def cmd_encode(args) -> int:
    if args.encoder:
        params = encoder.encoder_from_artifact(corpusio.load_model(args.encoder))
    else:
        params = encoder.init_encoder(args.init_seed)
    if args.save_encoder:
        corpusio.save_model(
            encoder.encoder_to_artifact(params,
                                        {"seed": str(args.init_seed)}),
            args.save_encoder)

    if args.grid:
        strengths = np.linspace(0.0, 1.0, args.grid_points).tolist()
        csv_text = encoder.export_grid(params, strengths)
        if args.out:
            Path(args.out).write_text(csv_text, encoding="utf-8")
        else:
            sys.stdout.write(csv_text)
        print(f"wrote {4 * args.grid_points}-row embedding grid",
              file=sys.stderr)
        return 0

    if not args.predictions:
        raise ValueError("either --predictions or --grid is required")
    items = predictor.predictions_from_jsonl(
        Path(args.predictions).read_text(encoding="utf-8"))
    lines = []
    for uid, pred in items:
        h = encoder.encode(params, pred.label, pred.strength)
        lines.append(json.dumps({
            "id": uid,
            "class": pred.label,
            "strength": pred.strength,
            "embedding": h.tolist(),
        }))
    payload = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(payload, encoding="utf-8")
    else:
        sys.stdout.write(payload)
    print(f"encoded {len(items)} predictions", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    items = predictor.predictions_from_jsonl(
        Path(args.predictions).read_text(encoding="utf-8"))
    references = corpusio.read_annotations(args.references)
    ref_by_id = {r.id: r for r in references}
    missing = [uid for uid, _ in items if uid not in ref_by_id]
    if missing:
        raise ValueError(f"predictions without references: {missing[:5]}")
    preds = [pred for _, pred in items]
    refs = [ref_by_id[uid] for uid, _ in items]
    metrics = predictor.evaluate(preds, refs)
    text = json.dumps(metrics, indent=1, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    print(f"macro accuracy {metrics['macro_accuracy']:.3f}, "
          f"strength MSE {metrics['strength_mse']:.6f}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emopred",
        description="Emotion strength annotation, prediction, and encoding",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", type=str, default="",
                         help="key = value config file; flags override it")
        sub.set_defaults(func=func, subparser=sub)
        return sub

    sub = add("features", cmd_features,
              "extract 384-dim feature vectors for a manifest")
    sub.add_argument("--manifest", type=str, required=True)
    sub.add_argument("--out", type=str, required=True)

    sub = add("annotate", cmd_annotate,
              "train per-emotion rankers and write strength annotations")
    sub.add_argument("--manifest", type=str, required=True)
    sub.add_argument("--features", type=str, required=True)
    sub.add_argument("--out", type=str, required=True)
    sub.add_argument("--C", type=float, default=ranker.DEFAULT_C)
    sub.add_argument("--epochs", type=int, default=ranker.DEFAULT_EPOCHS)
    sub.add_argument("--max-pairs", type=int, default=ranker.DEFAULT_MAX_PAIRS)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--models-out", type=str, default="",
                     help="directory for per-emotion rank model artifacts")

    sub = add("train", cmd_train, "train the joint emotion predictor")
    sub.add_argument("--annotated", type=str, required=True)
    sub.add_argument("--out", type=str, required=True)
    sub.add_argument("--trace", type=str, default="",
                     help="write the per-epoch loss trace to this file")
    sub.add_argument("--lambda-cls", type=float, default=0.01)
    sub.add_argument("--lr", type=float, default=0.05)
    sub.add_argument("--batch-size", type=int, default=16)
    sub.add_argument("--epochs", type=int, default=200)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--init-scale", type=float, default=1.0)
    _add_provider_flags(sub)

    sub = add("predict", cmd_predict, "predict emotion class and strength")
    sub.add_argument("--model", type=str, required=True)
    sub.add_argument("--texts", type=str, required=True,
                     help="JSONL with id/text fields, or plain lines")
    sub.add_argument("--mode", type=str, default="single",
                     choices=("single", "paragraph"))
    sub.add_argument("--window", type=int, default=0,
                     help="paragraph context window; 0 = whole paragraph")
    sub.add_argument("--out", type=str, default="")
    _add_provider_flags(sub)

    sub = add("encode", cmd_encode,
              "encode predictions into conditioning embeddings")
    sub.add_argument("--encoder", type=str, default="",
                     help="encoder artifact; omitted = seeded initialization")
    sub.add_argument("--init-seed", type=int, default=0)
    sub.add_argument("--save-encoder", type=str, default="",
                     help="persist the encoder artifact used")
    sub.add_argument("--predictions", type=str, default="")
    sub.add_argument("--grid", action="store_true",
                     help="export the class x strength geometry grid as CSV")
    sub.add_argument("--grid-points", type=int, default=11)
    sub.add_argument("--out", type=str, default="")

    sub = add("eval", cmd_eval, "score predictions against references")
    sub.add_argument("--predictions", type=str, required=True)
    sub.add_argument("--references", type=str, required=True)
    sub.add_argument("--out", type=str, default="")

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    try:
        args = _apply_config(args.subparser, args, argv[1:])
        _echo_config(args, command)
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
