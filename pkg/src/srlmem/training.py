"""Training orchestration: epochs, batching, optimization, checkpointing,
evaluation, and the ablation grid over distance x merging x memory size.

Every number a run produces is a pure function of (config, seed, data):
batch order derives from (seed, epoch), dropout from (seed, epoch) as
well, and reports/checkpoints are written in deterministic formats.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .autodiff import AdamState, adam_step, clip_grad_norm, mul_scalar, zero_grads
from .conll import (
    PRF,
    PredicateInstance,
    Vocabs,
    build_vocabs,
    confusion_matrix,
    score,
)
from .model import Hyperparams, SrlModel
from .retrieval import (
    DISTANCE_METHODS,
    NeighborIndex,
    build_index,
    prepare_resources,
)
from .vectors import WordVectors


@dataclass
class TrainConfig:
    hp: Hyperparams = field(default_factory=Hyperparams)
    distance: str = "ed"
    merge: str = "average"
    use_amn: bool = True
    memory_flag: bool = True
    tune_pretrained: bool = False
    max_epochs: int = 20
    batch_size: int = 32
    seed: int = 1
    eval_every: int = 1
    patience: int = 5
    grad_clip: float | None = None
    min_freq: int = 1
    target_f1: float | None = None
    rd_seed: int = 0

    def validate(self) -> None:
        self.hp.validate()
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.distance not in DISTANCE_METHODS:
            raise ValueError(f"unknown distance {self.distance!r}")

    def to_text(self) -> str:
        """Flat key=value lines, hyperparameter names at the top level."""
        items = dict(asdict(self.hp))
        for f in fields(self):
            if f.name == "hp":
                continue
            items[f.name] = getattr(self, f.name)
        lines = []
        for k in sorted(items):
            v = items[k]
            if v is None:
                v = "none"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        hp_fields = {f.name: f.type for f in fields(Hyperparams)}
        cfg_fields = {f.name: f for f in fields(cls) if f.name != "hp"}
        hp_kwargs: dict = {}
        kwargs: dict = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"config line {lineno}: expected key=value")
            key = key.strip()
            value = value.strip()
            if key in hp_fields:
                hp_kwargs[key] = float(value) if key in ("r_d", "l_r") else int(value)
            elif key in cfg_fields:
                kwargs[key] = _parse_value(key, value)
            else:
                raise ValueError(f"config line {lineno}: unknown key {key!r}")
        cfg = cls(hp=Hyperparams(**hp_kwargs), **kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path: str) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())


def _parse_value(key: str, value: str):
    if value.lower() == "none":
        return None
    if key in ("use_amn", "memory_flag", "tune_pretrained"):
        if value.lower() not in ("true", "false"):
            raise ValueError(f"{key} must be true or false, got {value!r}")
        return value.lower() == "true"
    if key in ("distance", "merge"):
        return value
    if key in ("grad_clip", "target_f1"):
        return float(value)
    return int(value)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    dev: PRF | None


@dataclass
class RunReport:
    epochs: list[EpochStats]
    best_epoch: int
    best_f1: float
    wall_clock: float  # excluded from the serialized report (volatile)

    def to_json(self) -> str:
        payload = {
            "best_epoch": self.best_epoch,
            "best_f1": self.best_f1,
            "epochs": [
                {
                    "epoch": e.epoch,
                    "train_loss": e.train_loss,
                    "dev": None
                    if e.dev is None
                    else {
                        "precision": e.dev.precision,
                        "recall": e.dev.recall,
                        "f1": e.dev.f1,
                        "counts": list(e.dev.counts),
                    },
                }
                for e in self.epochs
            ],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def check_index_coverage(
    index: NeighborIndex,
    instances: list[PredicateInstance],
    m: int,
    train_ids: set[str],
) -> None:
    for inst in instances:
        entries = index.entries.get(inst.id)
        if entries is None:
            raise ValueError(f"neighbor index has no entry for instance {inst.id!r}")
        if len(entries) < m:
            raise ValueError(
                f"neighbor index entry for {inst.id!r} has {len(entries)} "
                f"neighbors, memory size is {m}"
            )
        for tid, _ in entries[:m]:
            if tid not in train_ids:
                raise ValueError(
                    f"index entry {inst.id!r} references unknown train instance {tid!r}"
                )


def _batches(
    instances: list[PredicateInstance], batch_size: int, seed: int, epoch: int
) -> list[list[int]]:
    """Deterministic epoch batching: shuffle, bucket by length, chunk,
    shuffle the chunk order. A pure function of (seed, epoch)."""
    rng = np.random.default_rng([seed, epoch])
    perm = rng.permutation(len(instances))
    perm = sorted(perm, key=lambda i: len(instances[i]))  # stable: keeps shuffle within a length
    chunks = [perm[i : i + batch_size] for i in range(0, len(perm), batch_size)]
    order = rng.permutation(len(chunks))
    return [list(chunks[i]) for i in order]


def train(
    config: TrainConfig,
    train_instances: list[PredicateInstance],
    dev_instances: list[PredicateInstance],
    index: NeighborIndex | None,
    vocabs: Vocabs | None = None,
    pretrained: WordVectors | None = None,
    ctx: dict[str, np.ndarray] | None = None,
    checkpoint_path: str | None = None,
    report_path: str | None = None,
) -> tuple[RunReport, SrlModel]:
    """Adam training with best-dev checkpointing and early stopping.

    With memory enabled, `index` must cover every train and dev instance
    with at least m neighbors; this is verified before the first epoch.
    `ctx` maps sentence ids to precomputed contextual vector matrices and
    is required when d_ce > 0 (memory sentences missing from it fall back
    to a zero column).
    """
    config.validate()
    if not train_instances:
        raise ValueError("no training instances")
    hp = config.hp
    if vocabs is None:
        seen: dict[str, PredicateInstance] = {}
        sents = []
        for inst in train_instances:
            if inst.sentence.id not in seen:
                seen[inst.sentence.id] = inst
                sents.append(inst.sentence)
        vocabs = build_vocabs(sents, min_freq=config.min_freq)

    by_id = {inst.id: inst for inst in train_instances}
    memories: dict[str, list] = {}
    if config.use_amn:
        if index is None:
            raise ValueError("memory-enabled training needs a neighbor index")
        check_index_coverage(
            index, train_instances + dev_instances, hp.m, set(by_id)
        )
        for inst in train_instances + dev_instances:
            memories[inst.id] = index.memory_for(inst.id, by_id)[: hp.m]
    else:
        memories = {inst.id: [] for inst in train_instances + dev_instances}

    ctx_width = 0
    if hp.d_ce > 0:
        if not ctx:
            raise ValueError("d_ce > 0 requires precomputed contextual vectors")
        ctx_width = next(iter(ctx.values())).shape[1]
        for inst in train_instances + dev_instances:
            if inst.sentence.id not in ctx:
                raise ValueError(
                    f"no contextual vectors for sentence {inst.sentence.id!r}"
                )
    rng_init = np.random.default_rng(config.seed)
    model = SrlModel(
        vocabs,
        hp,
        use_amn=config.use_amn,
        merge=config.merge,
        rng=rng_init,
        pretrained=pretrained,
        ctx_width=ctx_width,
        memory_flag=config.memory_flag,
        tune_pretrained=config.tune_pretrained,
    )
    trainable = model.trainable()
    opt = AdamState(trainable, lr=hp.l_r)

    started = time.monotonic()
    stats: list[EpochStats] = []
    best_f1 = -1.0
    best_epoch = 0
    best_params: dict[str, np.ndarray] = {}
    for epoch in range(1, config.max_epochs + 1):
        drop_rng = np.random.default_rng([config.seed, epoch, 1])
        epoch_loss = 0.0
        for batch in _batches(train_instances, config.batch_size, config.seed, epoch):
            zero_grads(trainable)
            for i in batch:
                inst = train_instances[i]
                loss = model.loss(
                    inst,
                    memories[inst.id],
                    training=True,
                    rng=drop_rng,
                    ctx=(ctx or {}).get(inst.sentence.id),
                    memory_ctx=ctx,
                )
                epoch_loss += loss.item()
                mul_scalar(loss, 1.0 / len(batch)).backward()
            if config.grad_clip is not None:
                clip_grad_norm(trainable, config.grad_clip)
            adam_step(opt, trainable)
        epoch_loss /= len(train_instances)

        dev_prf = None
        if epoch % config.eval_every == 0:
            dev_prf = _evaluate_instances(model, dev_instances, memories, ctx).prf
            if dev_prf.f1 > best_f1:
                best_f1 = dev_prf.f1
                best_epoch = epoch
                best_params = {k: t.data.copy() for k, t in model.params.items()}
        stats.append(EpochStats(epoch=epoch, train_loss=epoch_loss, dev=dev_prf))

        if config.target_f1 is not None and best_f1 >= config.target_f1:
            break
        if dev_prf is not None and epoch - best_epoch >= config.patience:
            break

    if best_params:
        for k, t in model.params.items():
            t.data[...] = best_params[k]
    report = RunReport(
        epochs=stats,
        best_epoch=best_epoch,
        best_f1=max(best_f1, 0.0),
        wall_clock=time.monotonic() - started,
    )
    if checkpoint_path:
        model.save(checkpoint_path)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    return report, model


@dataclass
class EvalResult:
    prf: PRF
    confusion: np.ndarray
    labels: list[str]
    predictions: list[PredicateInstance]


def _evaluate_instances(
    model: SrlModel,
    instances: list[PredicateInstance],
    memories: dict[str, list],
    ctx: dict[str, np.ndarray] | None = None,
) -> EvalResult:
    preds = []
    for inst in instances:
        labels = model.predict_labels(
            inst,
            memories[inst.id],
            ctx=(ctx or {}).get(inst.sentence.id),
            memory_ctx=ctx,
        )
        preds.append(
            PredicateInstance(
                sentence=inst.sentence,
                predicate_index=inst.predicate_index,
                gold_labels=labels,
            )
        )
    label_order = model.vocabs.role.tokens()
    return EvalResult(
        prf=score(instances, preds),
        confusion=confusion_matrix(instances, preds, label_order),
        labels=label_order,
        predictions=preds,
    )


def evaluate(
    model: SrlModel,
    instances: list[PredicateInstance],
    index: NeighborIndex | None,
    train_instances: list[PredicateInstance] | None = None,
    ctx: dict[str, np.ndarray] | None = None,
) -> EvalResult:
    """Greedy predictions scored with labeled P/R/F1 plus a confusion
    matrix over the full role vocabulary."""
    if model.use_amn:
        if index is None or train_instances is None:
            raise ValueError("memory-enabled evaluation needs an index and train set")
        by_id = {inst.id: inst for inst in train_instances}
        check_index_coverage(index, instances, model.hp.m, set(by_id))
        memories = {
            inst.id: index.memory_for(inst.id, by_id)[: model.hp.m]
            for inst in instances
        }
    else:
        memories = {inst.id: [] for inst in instances}
    return _evaluate_instances(model, instances, memories, ctx)


def comparison_table(rows: list[tuple[str, PRF]]) -> str:
    """Fixed-width model-vs-model table of P/R/F1 values."""
    width = max(len(name) for name, _ in rows)
    out = [f"{'model':<{width}}  {'P':>7}  {'R':>7}  {'F1':>7}"]
    for name, prf in rows:
        out.append(
            f"{name:<{width}}  {prf.precision:7.4f}  {prf.recall:7.4f}  {prf.f1:7.4f}"
        )
    return "\n".join(out) + "\n"


# Published full-scale dev-set reference points for the footer of ablation
# reports (desk-scale runs are not expected to match them).
REFERENCE_FOOTER = (
    "reference full-scale dev F1: ed=88.3 average-merge=88.3 base=87.8"
)


@dataclass
class AblationRow:
    distance: str
    merge: str
    m: int
    seeds: list[int]
    precision: float
    recall: float
    f1: float


@dataclass
class AblationReport:
    rows: list[AblationRow]
    footer: str = REFERENCE_FOOTER

    def to_text(self) -> str:
        lines = ["distance\tmerge\tm\tseeds\tP\tR\tF1"]
        for r in self.rows:
            seeds = ",".join(str(s) for s in r.seeds)
            lines.append(
                f"{r.distance}\t{r.merge}\t{r.m}\t{seeds}"
                f"\t{r.precision:.4f}\t{r.recall:.4f}\t{r.f1:.4f}"
            )
        lines.append(f"# {self.footer}")
        return "\n".join(lines) + "\n"


def ablate(
    base_config: TrainConfig,
    train_instances: list[PredicateInstance],
    dev_instances: list[PredicateInstance],
    distances: list[str],
    merges: list[str],
    memory_sizes: list[int],
    seeds: list[int],
    emb: WordVectors | None = None,
    pretrained: WordVectors | None = None,
) -> AblationReport:
    """Run the full grid, averaging each cell's dev results over seeds the
    way rerun averages are usually reported."""
    if not distances or not merges or not memory_sizes or not seeds:
        raise ValueError("ablation grid must be non-empty")
    train_sents = _unique_sentences(train_instances)
    query_sents = _unique_sentences(train_instances + dev_instances)
    rows: list[AblationRow] = []
    for dist in distances:
        resources = prepare_resources(
            dist,
            train_sents,
            query_sents,
            emb=emb,
            rd_seed=base_config.rd_seed,
        )
        for msize in memory_sizes:
            index = build_index(
                train_instances,
                train_instances + dev_instances,
                dist,
                msize,
                resources,
            )
            for mg in merges:
                prfs = []
                for seed in seeds:
                    cfg = TrainConfig(**{**_config_kwargs(base_config)})
                    cfg.distance = dist
                    cfg.merge = mg
                    cfg.seed = seed
                    cfg.hp.m = msize
                    report, model = train(
                        cfg, train_instances, dev_instances, index,
                        pretrained=pretrained,
                    )
                    result = evaluate(model, dev_instances, index, train_instances)
                    prfs.append(result.prf)
                rows.append(
                    AblationRow(
                        distance=dist,
                        merge=mg,
                        m=msize,
                        seeds=list(seeds),
                        precision=float(np.mean([p.precision for p in prfs])),
                        recall=float(np.mean([p.recall for p in prfs])),
                        f1=float(np.mean([p.f1 for p in prfs])),
                    )
                )
    return AblationReport(rows=rows)


def _config_kwargs(cfg: TrainConfig) -> dict:
    out = {}
    for f in fields(TrainConfig):
        v = getattr(cfg, f.name)
        out[f.name] = Hyperparams(**asdict(v)) if f.name == "hp" else v
    return out


def _unique_sentences(instances: list[PredicateInstance]):
    seen = set()
    out = []
    for inst in instances:
        if inst.sentence.id not in seen:
            seen.add(inst.sentence.id)
            out.append(inst.sentence)
    return out
