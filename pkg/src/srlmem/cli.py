"""Command-line interface.

One executable, subcommands for each pipeline stage:

    prepare         vocabularies and corpus statistics
    index           build and persist a neighbor index
    train           train a model, write checkpoint + report
    eval            score a checkpoint on a dataset
    ablate          run a distance x merge x memory-size grid
    dump-attention  export attention matrices (CSV + PGM heatmaps)
    confusion       export a labeling confusion matrix
    gen-synthetic   deterministic synthetic corpus generator

Every command writes a manifest.json (inputs, resolved config, seed,
artifact hashes) into its output directory. Exit codes: 0 ok, 1 usage,
2 data error, 3 internal error. The SRLMEM_CONFIG environment variable
overrides a missing --config.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import synthetic
from .conll import (
    ConllError,
    build_vocabs,
    corpus_instances,
    parse_conll,
    write_conll,
)
from .model import SrlModel, load_context_vectors
from .retrieval import NeighborIndex, build_index, prepare_resources
from .training import (
    TrainConfig,
    ablate,
    comparison_table,
    evaluate,
    train,
)
from .vectors import WordVectors

CONFIG_ENV_VAR = "SRLMEM_CONFIG"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class DataError(Exception):
    """User-visible problem with an input file or its contents."""


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(
    out_dir: str,
    command: str,
    inputs: list[str],
    outputs: list[str],
    seed: int | None = None,
    config_text: str | None = None,
) -> None:
    manifest = {
        "command": command,
        "inputs": {p: _sha256(p) for p in sorted(set(inputs))},
        "outputs": {
            os.path.relpath(p, out_dir): _sha256(p) for p in sorted(set(outputs))
        },
        "seed": seed,
        "config": config_text,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _read_corpus(path: str):
    if not os.path.exists(path):
        raise DataError(f"no such file: {path}")
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    prefix = os.path.splitext(os.path.basename(path))[0]
    try:
        sentences = parse_conll(text, id_prefix=f"{prefix}-s")
    except ConllError as e:
        raise DataError(f"{path}: {e}") from e
    if not sentences:
        raise DataError(f"{path}: no sentences")
    return sentences


def _load_config(args) -> TrainConfig:
    path = getattr(args, "config", None) or os.environ.get(CONFIG_ENV_VAR)
    if path is None:
        return TrainConfig()
    if not os.path.exists(path):
        raise DataError(f"no such config file: {path}")
    try:
        return TrainConfig.from_file(path)
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


def _load_ctx(path: str | None):
    if path is None:
        return None
    if not os.path.exists(path):
        raise DataError(f"no such contextual vector file: {path}")
    try:
        return load_context_vectors(path)
    except ValueError as e:
        raise DataError(str(e)) from e


def _load_vectors(path: str | None) -> WordVectors | None:
    if path is None:
        return None
    if not os.path.exists(path):
        raise DataError(f"no such vector file: {path}")
    try:
        return WordVectors.load(path)
    except ValueError as e:
        raise DataError(str(e)) from e


def _ensure_out_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_prepare(args) -> int:
    sentences = _read_corpus(args.train)
    vocabs = build_vocabs(sentences, min_freq=args.min_freq)
    _ensure_out_dir(args.out)
    outputs = []
    for name, vocab in (
        ("word", vocabs.word),
        ("lemma", vocabs.lemma),
        ("pos", vocabs.pos),
        ("role", vocabs.role),
    ):
        path = os.path.join(args.out, f"{name}_vocab.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(vocab.tokens()) + "\n")
        outputs.append(path)
    instances = corpus_instances(sentences)
    stats = {
        "sentences": len(sentences),
        "instances": len(instances),
        "tokens": sum(len(s) for s in sentences),
        "roles": len(vocabs.role),
        "words": len(vocabs.word),
        "min_freq": args.min_freq,
    }
    stats_path = os.path.join(args.out, "stats.json")
    with open(stats_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(stats, sort_keys=True, indent=2) + "\n")
    outputs.append(stats_path)
    _write_manifest(args.out, "prepare", [args.train], outputs)
    print(f"prepared {stats['sentences']} sentences, {stats['instances']} instances")
    return EXIT_OK


def _cmd_index(args) -> int:
    same_file = os.path.abspath(args.query) == os.path.abspath(args.train)
    if not same_file and (
        os.path.splitext(os.path.basename(args.query))[0]
        == os.path.splitext(os.path.basename(args.train))[0]
    ):
        # instance ids are prefixed with the file stem; equal stems from
        # different files would collide
        raise DataError(
            f"train and query files share the basename "
            f"{os.path.basename(args.train)!r}; rename one of them"
        )
    train_sents = _read_corpus(args.train)
    query_sents = train_sents if same_file else _read_corpus(args.query)
    emb = _load_vectors(args.vectors)
    train_insts = corpus_instances(train_sents)
    query_insts = corpus_instances(query_sents)
    try:
        resources = prepare_resources(
            args.method,
            train_sents,
            query_sents,
            emb=emb,
            rd_seed=args.seed,
            sif_a=args.sif_a,
        )
        index = build_index(train_insts, query_insts, args.method, args.m, resources)
    except ValueError as e:
        raise DataError(str(e)) from e
    out_dir = os.path.dirname(os.path.abspath(args.out))
    _ensure_out_dir(out_dir)
    index.save(args.out)
    inputs = [args.train] + ([] if same_file else [args.query])
    if args.vectors:
        inputs.append(args.vectors)
    _write_manifest(out_dir, "index", inputs, [args.out], seed=args.seed)
    print(f"indexed {len(index.entries)} queries (method={args.method}, m={args.m})")
    return EXIT_OK


def _cmd_train(args) -> int:
    config = _load_config(args)
    train_sents = _read_corpus(args.train)
    dev_sents = _read_corpus(args.dev)
    train_insts = corpus_instances(train_sents)
    dev_insts = corpus_instances(dev_sents)
    index = None
    if config.use_amn:
        if args.index is None:
            raise DataError("memory-enabled training needs --index")
        if not os.path.exists(args.index):
            raise DataError(f"no such index file: {args.index}")
        index = NeighborIndex.load(args.index)
    pretrained = _load_vectors(args.vectors)
    ctx = _load_ctx(args.ctx)
    _ensure_out_dir(args.out)
    ckpt = os.path.join(args.out, "checkpoint.bin")
    report_path = os.path.join(args.out, "report.json")
    try:
        report, model = train(
            config,
            train_insts,
            dev_insts,
            index,
            pretrained=pretrained,
            ctx=ctx,
            checkpoint_path=ckpt,
            report_path=report_path,
        )
    except ValueError as e:
        raise DataError(str(e)) from e
    config_path = os.path.join(args.out, "config.txt")
    with open(config_path, "w", encoding="utf-8") as fh:
        fh.write(config.to_text())
    timing_path = os.path.join(args.out, "timing.txt")
    with open(timing_path, "w", encoding="utf-8") as fh:
        fh.write(f"wall_clock_seconds={report.wall_clock:.3f}\n")
    inputs = [args.train, args.dev]
    if args.index:
        inputs.append(args.index)
    if args.vectors:
        inputs.append(args.vectors)
    _write_manifest(
        args.out,
        "train",
        inputs,
        [ckpt, report_path, config_path],
        seed=config.seed,
        config_text=config.to_text(),
    )
    print(
        f"trained {len(report.epochs)} epochs; best dev F1 {report.best_f1:.4f} "
        f"at epoch {report.best_epoch}"
    )
    return EXIT_OK


def _load_model_and_memory(args):
    if not os.path.exists(args.checkpoint):
        raise DataError(f"no such checkpoint: {args.checkpoint}")
    try:
        model = SrlModel.load(args.checkpoint)
    except ValueError as e:
        raise DataError(str(e)) from e
    data_sents = _read_corpus(args.data)
    data_insts = corpus_instances(data_sents)
    index = None
    train_insts = None
    if model.use_amn:
        if args.index is None or args.train is None:
            raise DataError("memory-enabled checkpoints need --index and --train")
        if not os.path.exists(args.index):
            raise DataError(f"no such index file: {args.index}")
        index = NeighborIndex.load(args.index)
        train_insts = corpus_instances(_read_corpus(args.train))
    return model, data_insts, index, train_insts


def _cmd_eval(args) -> int:
    model, data_insts, index, train_insts = _load_model_and_memory(args)
    try:
        result = evaluate(model, data_insts, index, train_insts, ctx=_load_ctx(args.ctx))
    except ValueError as e:
        raise DataError(str(e)) from e
    _ensure_out_dir(args.out)
    prf_path = os.path.join(args.out, "scores.json")
    with open(prf_path, "w", encoding="utf-8") as fh:
        fh.write(
            json.dumps(
                {
                    "precision": result.prf.precision,
                    "recall": result.prf.recall,
                    "f1": result.prf.f1,
                    "counts": list(result.prf.counts),
                },
                sort_keys=True,
                indent=2,
            )
            + "\n"
        )
    conf_path = os.path.join(args.out, "confusion.csv")
    _write_confusion_csv(conf_path, result.confusion, result.labels)
    pred_path = os.path.join(args.out, "predictions.conll")
    sents = []
    seen = set()
    for inst in data_insts:
        if inst.sentence.id not in seen:
            seen.add(inst.sentence.id)
            sents.append(inst.sentence)
    predictions = {
        (p.sentence.id, p.predicate_index): p.gold_labels for p in result.predictions
    }
    with open(pred_path, "w", encoding="utf-8") as fh:
        fh.write(write_conll(sents, predictions))
    inputs = [args.checkpoint, args.data]
    if args.index:
        inputs.append(args.index)
    if args.train:
        inputs.append(args.train)
    _write_manifest(args.out, "eval", inputs, [prf_path, conf_path, pred_path])
    print(comparison_table([("model", result.prf)]), end="")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    config = _load_config(args)
    train_insts = corpus_instances(_read_corpus(args.train))
    dev_insts = corpus_instances(_read_corpus(args.dev))
    emb = _load_vectors(args.vectors)
    distances = args.distances.split(",")
    merges = args.merges.split(",")
    memory_sizes = [int(x) for x in args.memory_sizes.split(",")]
    seeds = [int(x) for x in args.seeds.split(",")]
    try:
        report = ablate(
            config,
            train_insts,
            dev_insts,
            distances,
            merges,
            memory_sizes,
            seeds,
            emb=emb,
            pretrained=_load_vectors(args.pretrained),
        )
    except ValueError as e:
        raise DataError(str(e)) from e
    _ensure_out_dir(args.out)
    table_path = os.path.join(args.out, "ablation.tsv")
    with open(table_path, "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    inputs = [args.train, args.dev]
    if args.vectors:
        inputs.append(args.vectors)
    _write_manifest(
        args.out, "ablate", inputs, [table_path],
        seed=seeds[0], config_text=config.to_text(),
    )
    print(report.to_text(), end="")
    return EXIT_OK


def _write_confusion_csv(path: str, matrix: np.ndarray, labels: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("gold\\pred," + ",".join(labels) + "\n")
        for i, lab in enumerate(labels):
            fh.write(lab + "," + ",".join(str(int(x)) for x in matrix[i]) + "\n")


def _cmd_confusion(args) -> int:
    model, data_insts, index, train_insts = _load_model_and_memory(args)
    try:
        result = evaluate(model, data_insts, index, train_insts)
    except ValueError as e:
        raise DataError(str(e)) from e
    labels = args.labels.split(",") if args.labels else result.labels
    from .conll import confusion_matrix

    matrix = confusion_matrix(data_insts, result.predictions, labels)
    _ensure_out_dir(args.out)
    path = os.path.join(args.out, "confusion.csv")
    _write_confusion_csv(path, matrix, labels)
    inputs = [args.checkpoint, args.data]
    if args.index:
        inputs.append(args.index)
    if args.train:
        inputs.append(args.train)
    _write_manifest(args.out, "confusion", inputs, [path])
    print(f"wrote {path}")
    return EXIT_OK


def _write_pgm(path: str, matrix: np.ndarray) -> None:
    """Portable graymap (ASCII P2); brightest cell = matrix maximum."""
    peak = float(matrix.max()) if matrix.size else 1.0
    scale = 255.0 / peak if peak > 0 else 0.0
    h, w = matrix.shape
    lines = [f"P2", f"{w} {h}", "255"]
    for row in matrix:
        lines.append(" ".join(str(int(round(v * scale))) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_dump_attention(args) -> int:
    model, data_insts, index, train_insts = _load_model_and_memory(args)
    if not model.use_amn:
        raise DataError("checkpoint has no attention component")
    wanted = [i for i in data_insts if i.id == args.instance]
    if not wanted:
        raise DataError(f"no instance {args.instance!r} in {args.data}")
    inst = wanted[0]
    by_id = {i.id: i for i in train_insts}
    memory = index.memory_for(inst.id, by_id)[: model.hp.m]
    from .autodiff import no_grad

    with no_grad():
        _, bundle = model.forward(inst, memory, return_bundle=True)
    _ensure_out_dir(args.out)
    outputs = []
    summary = [f"instance {inst.id}"]
    summary.append("tokens: " + " ".join(inst.sentence.forms()))
    summary.append(f"predicate_index: {inst.predicate_index}")
    summary.append(f"merge: {model.merge}")
    for j, entry in enumerate(memory):
        summary.append(
            f"entry {j} id={entry.instance.id} distance={entry.distance!r}"
        )
        summary.append("  tokens: " + " ".join(entry.sentence.forms()))
        summary.append("  labels: " + " ".join(entry.labels))
        alpha = bundle.alpha[j]
        csv_path = os.path.join(args.out, f"alpha_{j}.csv")
        with open(csv_path, "w", encoding="utf-8") as fh:
            fh.write("," + ",".join(entry.sentence.forms()) + "\n")
            for t, row in enumerate(alpha):
                fh.write(
                    inst.sentence.forms()[t]
                    + ","
                    + ",".join(f"{v:.6f}" for v in row)
                    + "\n"
                )
        pgm_path = os.path.join(args.out, f"alpha_{j}.pgm")
        _write_pgm(pgm_path, alpha)
        outputs.extend([csv_path, pgm_path])
        summary.append("  alpha:")
        for row in alpha:
            summary.append("    " + " ".join(f"{v:.6f}" for v in row))
    if bundle.beta is not None:
        summary.append("beta: " + " ".join(f"{v:.6f}" for v in bundle.beta[0]))
    if bundle.gamma is not None:
        summary.append("gamma rows over concatenated memory:")
        for row in bundle.gamma:
            summary.append("  " + " ".join(f"{v:.6f}" for v in row))
    summary.append("merged attention embedding (one row per input token):")
    for row in bundle.merged:
        summary.append("  " + " ".join(f"{v:.6f}" for v in row))
    txt_path = os.path.join(args.out, "attention.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(summary) + "\n")
    outputs.append(txt_path)
    inputs = [args.checkpoint, args.data, args.index, args.train]
    _write_manifest(args.out, "dump-attention", inputs, outputs)
    print(f"wrote attention dump for {inst.id} to {args.out}")
    return EXIT_OK


def _cmd_gen_synthetic(args) -> int:
    try:
        sentences, _ = synthetic.generate(
            n_sentences=args.sentences,
            n_roles=args.roles,
            n_clusters=args.clusters,
            vocab_size=args.vocab,
            seed=args.seed,
        )
    except ValueError as e:
        raise DataError(str(e)) from e
    out_dir = os.path.dirname(os.path.abspath(args.out))
    _ensure_out_dir(out_dir)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(write_conll(sentences))
    outputs = [args.out]
    if args.vectors_out:
        vecs = synthetic.generate_vectors(sentences, dim=args.vector_dim, seed=args.seed)
        vecs.save(args.vectors_out)
        outputs.append(args.vectors_out)
    _write_manifest(out_dir, "gen-synthetic", [], outputs, seed=args.seed)
    print(f"wrote {len(sentences)} sentences to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srlmem",
        description="Retrieval-augmented semantic role labeling toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="build vocabularies and corpus stats")
    p.add_argument("--train", required=True)
    p.add_argument("--min-freq", type=int, default=1, dest="min_freq")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_prepare)

    p = sub.add_parser("index", help="build a neighbor index")
    p.add_argument("--method", required=True, choices=["ed", "wmd", "sd", "rd"])
    p.add_argument("--m", required=True, type=int)
    p.add_argument("--train", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--vectors", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sif-a", type=float, default=1e-3, dest="sif_a")
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--config", default=None)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--index", default=None)
    p.add_argument("--vectors", default=None)
    p.add_argument("--ctx", default=None, help="precomputed contextual vector file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", default=None)
    p.add_argument("--train", default=None)
    p.add_argument("--ctx", default=None, help="precomputed contextual vector file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation grid")
    p.add_argument("--config", default=None)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--distances", default="ed")
    p.add_argument("--merges", default="average")
    p.add_argument("--memory-sizes", default="4", dest="memory_sizes")
    p.add_argument("--seeds", default="1")
    p.add_argument("--vectors", default=None)
    p.add_argument("--pretrained", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("dump-attention", help="export attention matrices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--instance", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dump_attention)

    p = sub.add_parser("confusion", help="export a labeling confusion matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--index", default=None)
    p.add_argument("--train", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_confusion)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic corpus")
    p.add_argument("--sentences", required=True, type=int)
    p.add_argument("--roles", type=int, default=5)
    p.add_argument("--clusters", type=int, default=6)
    p.add_argument("--vocab", type=int, default=120)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--vectors-out", default=None, dest="vectors_out")
    p.add_argument("--vector-dim", type=int, default=16, dest="vector_dim")
    p.set_defaults(func=_cmd_gen_synthetic)

    return parser


def run(argv: list[str]) -> int:
    """Entry point returning an exit status instead of exiting."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse prints its own message; --help exits 0, usage errors 2
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - last-resort boundary
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
