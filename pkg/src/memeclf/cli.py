"""Command-line pipeline: enrich -> build-inputs -> pretrain-itm -> train ->
predict -> ensemble -> evaluate (plus make-corpus for the synthetic demo).

Stages communicate only through files under the run's output directory, and
each stage writes a manifest recording the config hash, seed, input hashes
and produced files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path
from typing import Dict, List

import numpy as np

from . import dataset_io, enrichment, evaluate, inputs, model as model_mod
from .config import RunConfig, load_config
from .features import FileRegionProvider, SyntheticRegionProvider
from .synthetic import generate_corpus


class MissingArtifactError(FileNotFoundError):
    pass


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{what} not found: {path}")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(cfg: RunConfig, stage: str, input_paths: List[Path],
                    output_paths: List[Path]) -> None:
    out_dir = Path(cfg.out_dir)
    manifest = {
        "stage": stage,
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "inputs": {str(p): _sha256(p) for p in input_paths},
        "outputs": [str(p) for p in output_paths],
    }
    (out_dir / f"manifest_{stage}.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")


def _provider(cfg: RunConfig):
    if cfg.provider.kind == "synthetic":
        return SyntheticRegionProvider(seed=cfg.seed, d_v=cfg.provider.d_v,
                                       max_regions=cfg.provider.max_regions)
    if cfg.provider.kind == "file":
        if not cfg.provider.path:
            raise ValueError("provider.kind=file requires provider.path")
        return FileRegionProvider(
            _require(Path(cfg.provider.path), "region features file"))
    raise ValueError(f"unknown provider kind {cfg.provider.kind!r}")


def _split_path(cfg: RunConfig, split: str) -> Path:
    raw = getattr(cfg.paths, split)
    if raw is None:
        raise MissingArtifactError(f"no dataset path configured for {split}")
    return _require(Path(raw), f"{split} split")


def _model_config(cfg: RunConfig, vocab) -> model_mod.ModelConfig:
    m = cfg.model
    return model_mod.ModelConfig(
        vocab_size=len(vocab), d_h=m.d_h, n_l=m.n_l, n_a=m.n_a, d_f=m.d_f,
        d_v=cfg.provider.d_v, max_len=m.max_len, dropout=m.dropout,
        seed=cfg.seed)


def cmd_make_corpus(cfg: RunConfig, args) -> None:
    paths = generate_corpus(args.corpus_dir, n=args.n, seed=cfg.seed)
    print(f"wrote synthetic corpus: {paths}")


def cmd_enrich(cfg: RunConfig, args) -> None:
    split_path = _split_path(cfg, args.split)
    fixtures = _require(Path(cfg.paths.fixtures), "fixtures file")
    records = dataset_io.load_records(split_path)
    provider = _provider(cfg)
    entity_client = enrichment.FixtureEntityClient(fixtures)
    face_client = enrichment.FixtureFaceClient(fixtures)
    cached_entities = enrichment.CachedEntityClient(entity_client,
                                                    cfg.paths.cache)
    cached_faces = enrichment.CachedFaceClient(face_client, cfg.paths.cache)
    out_path = Path(cfg.out_dir) / f"enriched_{args.split}.jsonl"
    enrichment.enrich_split(records, provider, cached_entities, cached_faces,
                            out_path, cfg.enrichment.max_entities)
    print(f"enriched {len(records)} records -> {out_path} "
          f"({entity_client.calls + face_client.calls} external calls)")
    _write_manifest(cfg, f"enrich_{args.split}", [split_path, fixtures],
                    [out_path])


def _load_enriched(cfg: RunConfig, split: str):
    path = _require(Path(cfg.out_dir) / f"enriched_{split}.jsonl",
                    f"enriched {split} file (run enrich first)")
    return path, enrichment.load_enriched(path)


def _vocab_path(cfg: RunConfig) -> Path:
    return Path(cfg.out_dir) / "vocab.txt"


def _load_vocab(cfg: RunConfig) -> inputs.Vocabulary:
    return inputs.Vocabulary.load(
        _require(_vocab_path(cfg), "vocabulary (run build-inputs on train)"))


def cmd_build_inputs(cfg: RunConfig, args) -> None:
    enriched_path, memes = _load_enriched(cfg, args.split)
    manifest_inputs = [enriched_path]
    outputs = []
    vocab_path = _vocab_path(cfg)
    if args.split == "train" or not vocab_path.exists():
        train_path, train_memes = _load_enriched(cfg, "train")
        texts = [m.record.text for m in train_memes]
        texts += [t.description for m in train_memes for t in m.entities]
        vocab = inputs.build_vocabulary(texts)
        vocab.save(vocab_path)
        outputs.append(vocab_path)
        if train_path != enriched_path:
            manifest_inputs.append(train_path)
    else:
        vocab = _load_vocab(cfg)
    provider = _provider(cfg)
    if not cfg.train.use_tags:  # ablation: sequences carry no external labels
        memes = [enrichment.EnrichedMeme(record=m.record) for m in memes]
    examples, ids, labels = inputs.encode_examples(memes, provider, vocab,
                                                   cfg.model.max_len)
    max_rows = max(ex["features"].shape[0] for ex in examples)
    feats = np.zeros((len(examples), max_rows, cfg.provider.d_v))
    rows = np.zeros(len(examples), dtype=np.int64)
    for i, ex in enumerate(examples):
        rows[i] = ex["features"].shape[0]
        feats[i, :rows[i]] = ex["features"]
    out_path = Path(cfg.out_dir) / f"inputs_{args.split}.npz"
    np.savez_compressed(
        out_path,
        ids=np.asarray(ids, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        features=feats, feature_rows=rows,
        **{key: np.stack([ex[key] for ex in examples])
           for key in ("token_ids", "segment_ids", "position_ids",
                       "visual_index", "attention_mask")},
    )
    outputs.append(out_path)
    print(f"built {len(examples)} input sequences -> {out_path}")
    _write_manifest(cfg, f"build_inputs_{args.split}", manifest_inputs, outputs)


def _load_inputs(cfg: RunConfig, split: str):
    path = _require(Path(cfg.out_dir) / f"inputs_{split}.npz",
                    f"built inputs for {split} (run build-inputs first)")
    data = np.load(path)
    examples = []
    for i in range(len(data["ids"])):
        ex = {key: data[key][i]
              for key in ("token_ids", "segment_ids", "position_ids",
                          "visual_index", "attention_mask")}
        ex["features"] = data["features"][i, :data["feature_rows"][i]]
        examples.append(ex)
    return path, examples, data["ids"].tolist(), data["labels"].tolist()


def cmd_pretrain_itm(cfg: RunConfig, args) -> None:
    enriched_path, memes = _load_enriched(cfg, "train")
    vocab = _load_vocab(cfg)
    provider = _provider(cfg)
    # ITM pairs: each meme with its own caption (match) and with the caption
    # of a seeded random other meme (mismatch).
    if len(memes) < 2:
        raise ValueError("ITM pretraining needs at least two memes")
    rng = np.random.default_rng([cfg.seed, 999])
    examples, labels = [], []
    pair_memes = []
    for meme in memes:
        pair_memes.append((meme, 1))
        other = memes[int(rng.integers(len(memes) - 1))]
        if other.record.id == meme.record.id:
            other = memes[-1]
        foreign = enrichment.EnrichedMeme(
            record=dataset_io.MemeRecord(meme.record.id, meme.record.img,
                                         other.record.text, meme.record.label),
            entities=meme.entities, person_tags=meme.person_tags)
        pair_memes.append((foreign, 0))
    for meme, match in pair_memes:
        regions = provider.get_regions(meme.record.id)
        seq = inputs.build_sequence(meme, regions, vocab, cfg.model.max_len)
        examples.append({
            "token_ids": seq.token_ids, "segment_ids": seq.segment_ids,
            "position_ids": seq.position_ids, "visual_index": seq.visual_index,
            "attention_mask": seq.attention_mask,
            "features": regions.feature_table(),
        })
        labels.append(match)
    itm_model = model_mod.VLModel(_model_config(cfg, vocab),
                                  model_mod.ITM_SEMANTICS)
    tcfg = model_mod.TrainConfig(lr=cfg.train.lr,
                                 batch_size=cfg.train.batch_size,
                                 steps=cfg.train.itm_steps, seed=cfg.seed)
    model_mod.pretrain_itm(itm_model, examples, labels, tcfg)
    out_path = Path(cfg.out_dir) / "itm.pt"
    model_mod.save_checkpoint(itm_model, vocab.content_hash(), out_path)
    print(f"pretrained ITM model ({cfg.train.itm_steps} steps) -> {out_path}")
    _write_manifest(cfg, "pretrain_itm", [enriched_path, _vocab_path(cfg)],
                    [out_path])


def cmd_train(cfg: RunConfig, args) -> None:
    vocab = _load_vocab(cfg)
    train_path, train_ex, train_ids, train_labels = _load_inputs(cfg, "train")
    dev_path, dev_ex, dev_ids, dev_labels = _load_inputs(cfg, "dev")
    if any(l < 0 for l in train_labels + dev_labels):
        raise ValueError("train/dev splits must be fully labeled")
    manifest_inputs = [train_path, dev_path]
    if cfg.train.use_itm_transfer:
        itm_path = _require(Path(cfg.out_dir) / "itm.pt",
                            "ITM checkpoint (run pretrain-itm first)")
        pretrained = model_mod.load_checkpoint(itm_path, vocab.content_hash())
        net = model_mod.transfer_itm_head(pretrained)
        manifest_inputs.append(itm_path)
    else:
        net = model_mod.VLModel(_model_config(cfg, vocab))
    tcfg = model_mod.TrainConfig(lr=cfg.train.lr,
                                 batch_size=cfg.train.batch_size,
                                 epochs=cfg.train.epochs, seed=cfg.seed)
    result = model_mod.fit(net, train_ex, train_labels, dev_ex, dev_labels,
                           dev_ids, tcfg)
    out_path = Path(cfg.out_dir) / "model.pt"
    model_mod.save_checkpoint(net, vocab.content_hash(), out_path)
    metrics_path = Path(cfg.out_dir) / "train_metrics.json"
    metrics_path.write_text(json.dumps({
        "best_epoch": result.best_epoch,
        "best_dev_auroc": result.best_dev_auroc,
        "epochs": [{"epoch": m.epoch, "train_loss": m.train_loss,
                    "dev_auroc": m.dev_auroc} for m in result.metrics],
    }, indent=2), encoding="utf-8")
    print(f"trained {cfg.train.epochs} epochs, best dev AUROC "
          f"{result.best_dev_auroc:.4f} (epoch {result.best_epoch}) "
          f"-> {out_path}")
    _write_manifest(cfg, "train", manifest_inputs, [out_path, metrics_path])


def cmd_predict(cfg: RunConfig, args) -> None:
    vocab = _load_vocab(cfg)
    model_path = _require(Path(args.model or Path(cfg.out_dir) / "model.pt"),
                          "trained model (run train first)")
    net = model_mod.load_checkpoint(model_path, vocab.content_hash())
    inputs_path, examples, ids, _ = _load_inputs(cfg, args.split)
    preds = model_mod.predict_proba(net, examples, ids, name=model_path.stem)
    rows = [dataset_io.prediction_row(i, preds.scores[i]) for i in ids]
    out_path = Path(cfg.out_dir) / f"predictions_{args.split}.csv"
    if args.out_csv:
        out_path = Path(args.out_csv)
    dataset_io.write_predictions(rows, out_path)
    print(f"wrote {len(rows)} predictions -> {out_path}")
    _write_manifest(cfg, f"predict_{args.split}", [model_path, inputs_path],
                    [out_path])


def cmd_ensemble(cfg: RunConfig, args) -> None:
    sets = []
    csv_paths = [Path(p) for p in args.csvs]
    for path in csv_paths:
        rows = dataset_io.read_predictions(_require(path, "prediction CSV"))
        sets.append(evaluate.PredictionSet(
            name=path.stem, scores={r.id: r.proba for r in rows}))
    combined = evaluate.ensemble(sets, method=args.method)
    rows = [dataset_io.prediction_row(i, combined.scores[i])
            for i in sorted(combined.scores)]
    out_path = Path(cfg.out_dir) / "ensemble.csv"
    dataset_io.write_predictions(rows, out_path)
    print(f"ensembled {len(sets)} sets ({args.method}) -> {out_path}")
    _write_manifest(cfg, "ensemble", csv_paths, [out_path])


def cmd_evaluate(cfg: RunConfig, args) -> None:
    csv_path = _require(Path(args.predictions), "prediction CSV")
    split_path = _split_path(cfg, args.split)
    rows = dataset_io.read_predictions(csv_path)
    preds = evaluate.PredictionSet(name=csv_path.stem,
                                   scores={r.id: r.proba for r in rows})
    records = dataset_io.load_records(split_path)
    labels = {r.id: r.label for r in records if r.label is not None}
    metrics = {
        "auroc": evaluate.auroc(preds, labels),
        "accuracy": evaluate.accuracy(preds, labels),
        "n": len(preds.scores),
    }
    out_path = Path(cfg.out_dir) / f"metrics_{args.split}.json"
    out_path.write_text(json.dumps(metrics, indent=2), encoding="utf-8")
    print(f"AUROC {metrics['auroc']:.4f}  accuracy {metrics['accuracy']:.4f} "
          f"({metrics['n']} memes) -> {out_path}")
    _write_manifest(cfg, f"evaluate_{args.split}", [csv_path, split_path],
                    [out_path])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memeclf",
        description="Desk-scale hateful-meme classification pipeline")
    parser.add_argument("--config", help="YAML run configuration")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--out", help="override output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-corpus", help="generate the synthetic demo corpus")
    p.add_argument("--corpus-dir", default="corpus")
    p.add_argument("--n", type=int, default=200)

    p = sub.add_parser("enrich", help="attach entity and person tags")
    p.add_argument("--split", default="train",
                   choices=("train", "dev", "test"))

    p = sub.add_parser("build-inputs", help="tokenize and encode a split")
    p.add_argument("--split", default="train",
                   choices=("train", "dev", "test"))

    sub.add_parser("pretrain-itm", help="pretrain the image-text-matching head")

    sub.add_parser("train", help="fine-tune on hateful labels")

    p = sub.add_parser("predict", help="write a prediction CSV")
    p.add_argument("--split", default="dev", choices=("train", "dev", "test"))
    p.add_argument("--model", help="checkpoint path (default: out/model.pt)")
    p.add_argument("--out-csv", help="explicit output CSV path")

    p = sub.add_parser("ensemble", help="combine prediction CSVs")
    p.add_argument("csvs", nargs="+", help="prediction CSV paths")
    p.add_argument("--method", default="mean", choices=("mean", "rank_mean"))

    p = sub.add_parser("evaluate", help="AUROC/accuracy of a prediction CSV")
    p.add_argument("--predictions", required=True)
    p.add_argument("--split", default="dev", choices=("train", "dev", "test"))
    return parser


_COMMANDS = {
    "make-corpus": cmd_make_corpus,
    "enrich": cmd_enrich,
    "build-inputs": cmd_build_inputs,
    "pretrain-itm": cmd_pretrain_itm,
    "train": cmd_train,
    "predict": cmd_predict,
    "ensemble": cmd_ensemble,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out)
        Path(cfg.out_dir).mkdir(parents=True, exist_ok=True)
        _COMMANDS[args.command](cfg, args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
