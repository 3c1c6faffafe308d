"""Command-line entry point: one subcommand per pipeline stage or experiment.

Exit codes
----------
0  success
2  usage error (bad flags, bad config file, out-of-range options)
3  input error (unreadable or malformed input files, missing checkpoints)
4  runtime error (training or evaluation failed)

Every command accepts ``--seed`` and ``--config``. Primary outputs contain no
timestamps; run metadata (time, argv, versions) goes to ``<out>.meta.json``.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .annotator import (
    LabeledParagraph,
    annotate_document,
    has_adme_title,
    promote_titles,
    import_manual,
    read_corpus,
    write_corpus,
)
from .baseline_rules import RuleClassifier
from .config import Config, keyword_table, load_config, title_scheme
from .encoder.checkpoint import load_checkpoint, save_checkpoint
from .encoder.model import EncoderConfig, init_params
from .encoder.tokenizer import train_subword_vocab
from .encoder.training import (
    EncoderClassifier,
    FinetuneConfig,
    PretrainConfig,
    finetune,
    pretrain_mlm,
    reinit_top_layers,
)
from .errors import (
    AdmeError,
    CheckpointError,
    ConfigError,
    IngestionError,
    SplParseError,
    ValidationError,
)
from .eval_harness import _score, evaluate_unseen, learning_curve, run_cv, stratified_kfold
from .introspect import attention_drift, sample_texts_per_class
from .spl_corpus import (
    RawSegment,
    entries_from_documents,
    fetch_label_index,
    fetch_spl_documents,
    load_directory,
    parse_spl,
    segment_paragraphs,
    segment_store_path,
    select_labels,
    write_manifest,
)
from .tfidf_linear import TfidfClassifier

logger = logging.getLogger("admelabel")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3, 4
MODELS = ("rule", "logreg", "svm", "forest", "encoder")


class UsageError(ConfigError):
    """Invalid combination of options; maps to exit code 2."""


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_meta(out: Path, args: argparse.Namespace, extra: dict | None = None) -> None:
    meta = {
        "created": dt.datetime.now(dt.timezone.utc).isoformat(),
        "argv": sys.argv[1:],
        "command": args.command,
        "seed": args.seed,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        **(extra or {}),
    }
    Path(str(out) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _config(args: argparse.Namespace) -> Config:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc
    if args.seed is not None:
        cfg.set("general", "seed", args.seed)
    args.seed = cfg.seed
    return cfg


def _load_corpus(path) -> list[LabeledParagraph]:
    try:
        return read_corpus(path)
    except OSError as exc:
        raise ValidationError(f"cannot read corpus {path}: {exc}") from exc


def _encoder_config(cfg: Config, vocab_size: int) -> EncoderConfig:
    e = cfg["encoder"]
    return EncoderConfig(vocab_size=vocab_size, num_layers=e["num_layers"], num_heads=e["num_heads"],
                         hidden_size=e["hidden_size"], ffn_size=e["ffn_size"], max_seq_len=e["max_seq_len"],
                         dropout_rate=e["dropout_rate"])


def _finetune_config(cfg: Config, seed: int, freeze_top_n=None) -> FinetuneConfig:
    f = cfg["finetune"]
    if freeze_top_n is None and f["freeze_top_n"] >= 0:
        freeze_top_n = f["freeze_top_n"]
    return FinetuneConfig(batch_size=f["batch_size"], learning_rate=f["learning_rate"], epochs=f["epochs"],
                          freeze_top_n=freeze_top_n, weight_decay=f["weight_decay"], seed=seed)


def _pretrain_config(cfg: Config, seed: int) -> PretrainConfig:
    p = cfg["pretrain"]
    return PretrainConfig(mask_fraction=p["mask_fraction"], epochs=p["epochs"], batch_size=p["batch_size"],
                          learning_rate=p["learning_rate"], weight_decay=p["weight_decay"], seed=seed)


def _tfidf_hyper(cfg: Config, kind: str, seed: int) -> dict:
    hyper = dict(cfg[kind])
    hyper["seed"] = seed
    if kind == "forest":
        hyper["max_depth"] = hyper["max_depth"] or None
        fps = hyper["features_per_split"]
        hyper["features_per_split"] = int(fps) if str(fps).isdigit() else fps
    return hyper


def _load_pretrained(path):
    if path is None:
        return None
    try:
        return load_checkpoint(path)
    except FileNotFoundError as exc:
        raise CheckpointError(f"checkpoint not found: {path}") from exc


def make_trainer(name: str, cfg: Config, seed: int, pretrained=None):
    """``trainer(train_items, val_items) -> model with .predict(texts)`` for the evaluation harness."""
    if name == "rule":
        return lambda train, val: RuleClassifier(keyword_table(cfg), cfg["rule"]["tie_seed"])
    if name in ("logreg", "svm", "forest"):
        hyper = _tfidf_hyper(cfg, name, seed)
        mf = cfg["tfidf"]["max_features"]
        return lambda train, val: TfidfClassifier(name, mf, **hyper).fit(
            [p.text for p in train], [p.topic for p in train])
    if name == "encoder":
        def train_encoder(train, val):
            texts = [p.text for p in train]
            if pretrained is not None:
                params, vocab = pretrained.params, pretrained.vocab
            else:
                vocab = train_subword_vocab(texts, cfg["encoder"]["vocab_size"])
                params = init_params(_encoder_config(cfg, len(vocab)), cfg["encoder"]["init"], seed)
            params, _ = finetune(params, texts, [int(p.topic) for p in train], vocab, _finetune_config(cfg, seed),
                                 val_texts=[p.text for p in val], val_labels=[int(p.topic) for p in val])
            return EncoderClassifier(params, vocab)
        return train_encoder
    raise UsageError(f"unknown model {name!r}; expected one of {MODELS}")


def _split(dataset, k: int, seed: int):
    """Test fold 0, validation fold 1, train on the rest."""
    plan = stratified_kfold(dataset, k, seed)
    pick = lambda idx: [dataset[i] for i in idx]
    return (pick(np.nonzero(plan.assignments > 1)[0]), pick(plan.fold(1)), pick(plan.fold(0)))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    _config(args)
    if args.input:
        if not Path(args.input).is_dir():
            raise ValidationError(f"input directory not found: {args.input}")
        docs = load_directory(args.input)
        entries = entries_from_documents(docs.values())
    else:
        entries = fetch_label_index(args.endpoint, args.page_limit)
        if not args.spl_url:
            raise UsageError("--endpoint needs --spl-url (template with {set_id})")
        blobs = fetch_spl_documents(sorted({e.set_id for e in entries}), args.spl_url)
        docs = {}
        for set_id, blob in blobs.items():
            doc = parse_spl(blob, source=args.spl_url.format(set_id=set_id))
            docs[doc.set_id] = doc
    selected = select_labels(entries, docs)
    store = write_manifest(selected, args.out)
    logger.info("wrote %d documents to %s (segments in %s)", len(selected), args.out, store)
    _write_meta(Path(args.out), args, {"documents": len(selected)})
    return EXIT_OK


def cmd_annotate(args) -> int:
    cfg = _config(args)
    require = args.require_adme_title or cfg["annotate"]["require_adme_title"]
    scheme = title_scheme(cfg)
    store = segment_store_path(args.manifest)
    if not store.exists():
        raise ValidationError(f"segment store not found next to manifest: {store}")
    corpus: list[LabeledParagraph] = []
    skipped = []
    with open(store, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                raw = [RawSegment.from_dict(s) for s in rec["segments"]]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValidationError(f"{store}:{lineno}: corrupt record ({exc})", line=lineno) from None
            segments = segment_paragraphs(promote_titles(raw, scheme))
            if require and not has_adme_title(segments, scheme):
                skipped.append(rec["set_id"])
                continue
            corpus.extend(annotate_document(segments, scheme, set_id=rec["set_id"],
                                            application_number=rec.get("application_number")))
    write_corpus(corpus, args.out)
    _write_meta(Path(args.out), args, {"paragraphs": len(corpus), "skipped_without_adme_title": skipped})
    return EXIT_OK


def cmd_pretrain(args) -> int:
    cfg = _config(args)
    texts = _read_texts(args.texts)
    vocab = train_subword_vocab(texts, cfg["encoder"]["vocab_size"])
    params = init_params(_encoder_config(cfg, len(vocab)), cfg["encoder"]["init"], args.seed)
    params, history = pretrain_mlm(params, texts, vocab, _pretrain_config(cfg, args.seed))
    save_checkpoint(args.out, params, vocab, {"stage": "pretrained", "seed": args.seed, "mlm_loss": history,
                                              "config": cfg.snapshot()})
    _write_meta(Path(args.out), args)
    return EXIT_OK


def _read_texts(path) -> list[str]:
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"text file not found: {path}")
    if p.suffix == ".jsonl":
        return [x.text for x in read_corpus(p)]
    return [line.strip() for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]


def cmd_train(args) -> int:
    cfg = _config(args)
    corpus = _load_corpus(args.corpus)
    if args.model == "rule":
        RuleClassifier(keyword_table(cfg), cfg["rule"]["tie_seed"]).save(args.out)
    elif args.model in ("logreg", "svm", "forest"):
        model = make_trainer(args.model, cfg, args.seed)(corpus, [])
        model.save(args.out)
    else:
        pretrained = _load_pretrained(args.pretrained)
        train, val = corpus, []
        if args.validation_fraction > 0:
            plan = stratified_kfold(corpus, max(2, round(1 / args.validation_fraction)), args.seed)
            val = [corpus[i] for i in plan.fold(0)]
            train = [corpus[i] for i in np.nonzero(plan.assignments != 0)[0]]
        model = make_trainer("encoder", cfg, args.seed, pretrained)(train, val)
        save_checkpoint(args.out, model.params, model.vocab,
                        {"stage": "finetuned", "seed": args.seed, "config": cfg.snapshot(),
                         "pretrained": bool(pretrained)})
    _write_meta(Path(args.out), args)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    corpus = _load_corpus(args.corpus)
    unseen = import_manual(args.unseen) if args.unseen else None
    trainer = make_trainer(args.model, cfg, args.seed, _load_pretrained(args.pretrained))
    k = args.folds or cfg["eval"]["folds"]
    plan = stratified_kfold(corpus, k, args.seed)
    report = run_cv(trainer, corpus, plan, {"model": args.model, "folds": k, "settings": cfg.snapshot()})
    report.seeds["model_seed"] = args.seed
    if unseen is not None:
        report.extra["unseen"] = evaluate_unseen(trainer, corpus, unseen, plan)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    _write_meta(Path(args.out), args)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _config(args)
    corpus = _load_corpus(args.corpus)
    pretrained = _load_pretrained(args.pretrained)
    if args.init == "pretrained" and pretrained is None:
        raise UsageError("--init pretrained needs --pretrained CHECKPOINT")
    train, val, test = _split(corpus, cfg["eval"]["folds"], args.seed)
    texts, labels = [p.text for p in train], [int(p.topic) for p in train]
    if pretrained is not None and args.init == "pretrained":
        start, vocab = pretrained.params, pretrained.vocab
    else:
        vocab = pretrained.vocab if pretrained else train_subword_vocab(texts, cfg["encoder"]["vocab_size"])
        start = init_params(_encoder_config(cfg, len(vocab)), args.init, args.seed)
    L = start.config.num_layers
    top_n = args.top_n if args.top_n is not None else list(range(L + 1))
    bad = [n for n in top_n if not 0 <= n <= L]
    if bad:
        raise UsageError(f"--top-n values {bad} outside [0, {L}]")
    rows = []
    for n in top_n:
        if args.mode == "freeze":
            params, fc = start, _finetune_config(cfg, args.seed, freeze_top_n=n)
        else:
            params = reinit_top_layers(start, n, args.reinit_scheme, args.seed)
            fc = _finetune_config(cfg, args.seed)
        tuned, _ = finetune(params, texts, labels, vocab, fc, val_texts=[p.text for p in val],
                            val_labels=[int(p.topic) for p in val])
        score = _score(EncoderClassifier(tuned, vocab), test)
        rows.append({"mode": args.mode, "top_n": n, "label": "head" if args.mode == "freeze" and n == 0 else str(n),
                     "precision": score["precision"], "recall": score["recall"], "f1": score["f1"]})
    payload = {"schema_version": 1, "mode": args.mode, "init": args.init, "num_layers": L, "seed": args.seed,
               "settings": cfg.snapshot(), "rows": rows}
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_meta(Path(args.out), args)
    return EXIT_OK


def cmd_attention_diff(args) -> int:
    cfg = _config(args)
    before, after = _load_pretrained(args.before), _load_pretrained(args.after)
    if before.vocab is None or after.vocab is None or before.vocab.pieces != after.vocab.pieces:
        raise CheckpointError("before/after checkpoints must carry the same vocabulary")
    per_class = args.samples or cfg["drift"]["per_class"]
    if args.corpus:
        texts, idx = sample_texts_per_class(_load_corpus(args.corpus), per_class, args.seed)
    elif args.text:
        texts, idx = list(args.text), []
    else:
        raise UsageError("attention-diff needs --corpus or --text")
    report = attention_drift(before.params, after.params, before.vocab, texts, merged=args.merged,
                             sample={"per_class": per_class, "seed": args.seed, "indices": idx})
    payload = {"schema_version": 1, "format": "admelabel.attention_drift",
               "axes": ["layer", "head"], "indexing": "1-based layer and head in min_cell", **report.to_dict()}
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_meta(Path(args.out), args)
    return EXIT_OK


def cmd_learning_curve(args) -> int:
    cfg = _config(args)
    corpus = _load_corpus(args.corpus)
    pretrained = _load_pretrained(args.pretrained)
    unknown = [m for m in args.models if m not in MODELS]
    if unknown:
        raise UsageError(f"unknown models {unknown}; expected {MODELS}")
    trainers = {}
    for name in args.models:
        t = make_trainer(name, cfg, args.seed, pretrained)
        # the curve has no validation split; the encoder keeps its last epoch
        trainers[name] = t
    curve = learning_curve(trainers, corpus, args.sizes, args.holdout, args.seed)
    curve.write_csv(args.out)
    _write_meta(Path(args.out), args, {"holdout_size": int(len(curve.holdout))})
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides [general] seed)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="admelabel", description="ADME paragraph labeling pipeline")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", parents=[common], help="parse SPL documents into a manifest")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="directory of SPL XML files")
    src.add_argument("--endpoint", help="label index URL or local index JSON")
    s.add_argument("--spl-url", help="document URL template containing {set_id}")
    s.add_argument("--page-limit", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("annotate", parents=[common], help="label paragraphs from section titles")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--require-adme-title", action="store_true", help="drop labels without any ADME title")
    s.set_defaults(func=cmd_annotate)

    s = sub.add_parser("pretrain", parents=[common], help="masked-LM pretraining of the encoder")
    s.add_argument("--texts", required=True, help="corpus .jsonl or plain text (one paragraph per line)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_pretrain)

    s = sub.add_parser("train", parents=[common], help="train one classifier")
    s.add_argument("--model", choices=MODELS, required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--pretrained", help="encoder checkpoint to fine-tune from")
    s.add_argument("--validation-fraction", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="stratified cross-validation report")
    s.add_argument("--model", choices=MODELS, required=True)
    s.add_argument("--corpus", required=True)
    s.add_argument("--unseen", help="hand-labeled JSONL scored by a model trained on the CV training data")
    s.add_argument("--pretrained")
    s.add_argument("--folds", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("ablate", parents=[common], help="freezing / re-initialization sweeps")
    s.add_argument("--mode", choices=("freeze", "reinit"), required=True)
    s.add_argument("--top-n", type=_int_list)
    s.add_argument("--init", choices=("truncated_normal", "uniform", "pretrained"), default="pretrained")
    s.add_argument("--reinit-scheme", choices=("truncated_normal", "uniform"), default="truncated_normal")
    s.add_argument("--pretrained")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("attention-diff", parents=[common], help="per-head attention drift between checkpoints")
    s.add_argument("--before", required=True)
    s.add_argument("--after", required=True)
    s.add_argument("--corpus")
    s.add_argument("--text", action="append")
    s.add_argument("--samples", type=int, help="paragraphs per class")
    s.add_argument("--merged", action="store_true", help="merge word pieces before comparing")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_attention_diff)

    s = sub.add_parser("learning-curve", parents=[common], help="test F1 as training size grows")
    s.add_argument("--models", type=lambda t: [m for m in t.split(",") if m], required=True)
    s.add_argument("--sizes", type=_int_list, required=True, help="per-class training sizes")
    s.add_argument("--holdout", type=int, default=200, help="held-out paragraphs per class")
    s.add_argument("--corpus", required=True)
    s.add_argument("--pretrained")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_learning_curve)
    return p


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, (SplParseError, ValidationError, CheckpointError, IngestionError, OSError)):
        return EXIT_INPUT
    return EXIT_RUNTIME


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (AdmeError, OSError) as exc:
        where = f" [{exc.source}]" if getattr(exc, "source", None) else ""
        print(f"admelabel {args.command}: error{where}: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
