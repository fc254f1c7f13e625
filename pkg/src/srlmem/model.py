"""The sequence-labeling model.

Per-token representations are the concatenation of a trainable word
embedding, an optional pretrained word embedding, POS and lemma
embeddings, an optional projected contextual vector, and a predicate-flag
embedding. The attention output (when memory is enabled) is concatenated
onto each token before the stacked BiLSTM encoder, and a linear layer
over the encoder states classifies each token's role.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import attention as attn
from .autodiff import (
    Tensor,
    add,
    bilstm_apply,
    concat,
    cross_entropy,
    dropout,
    init_lstm,
    matmul,
    no_grad,
    take_rows,
)
from .conll import PredicateInstance, Vocab, Vocabs
from .retrieval import MemoryEntry
from .vectors import WordVectors

CHECKPOINT_MAGIC = b"SRLMEM-CKPT v1\n"


@dataclass
class Hyperparams:
    """Model dimensions and training constants; all overridable."""

    d_re: int = 100  # trainable word embedding
    d_pe: int = 100  # pretrained word embedding
    d_pos: int = 32  # POS embedding
    d_le: int = 100  # lemma embedding
    d_ce: int = 128  # projected contextual embedding (0 disables the column)
    d_pred: int = 16  # predicate flag embedding
    d_ae: int = 128  # argument label embedding
    m: int = 4  # memory size
    k_e: int = 2  # encoder LSTM layers
    k_a: int = 3  # attention LSTM layers
    d_e: int = 512  # encoder LSTM hidden state (per direction)
    d_a: int = 512  # attention encoding width (both directions together)
    r_d: float = 0.1  # dropout rate
    l_r: float = 0.001  # learning rate

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("r_d", "l_r"):
                continue
            if v < 0:
                raise ValueError(f"{f.name} must be >= 0, got {v}")
        if self.d_e < 1 or self.k_e < 1:
            raise ValueError("encoder needs d_e >= 1 and k_e >= 1")
        if not 0.0 <= self.r_d < 1.0:
            raise ValueError(f"r_d must be in [0, 1), got {self.r_d}")
        if self.d_a % 2 != 0:
            raise ValueError(f"d_a must be even (two directions), got {self.d_a}")

    @property
    def d_word(self) -> int:
        return self.d_re + self.d_pe + self.d_pos + self.d_le + self.d_ce + self.d_pred


def load_context_vectors(path: str) -> dict[str, np.ndarray]:
    """Read a precomputed per-token contextual vector file.

    Header line `width=<d>`, then one line per token: sentence id, token
    index, d decimal components. Returns sentence id -> (n x d) matrix.
    """
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("width="):
            raise ValueError(f"{path}: missing width= header")
        width = int(header[len("width="):])
        rows: dict[str, list[tuple[int, list[float]]]] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2 + width:
                raise ValueError(f"{path}:{lineno}: expected {2 + width} fields")
            sid, tidx = parts[0], int(parts[1])
            rows.setdefault(sid, []).append((tidx, [float(x) for x in parts[2:]]))
    out = {}
    for sid, items in rows.items():
        items.sort(key=lambda it: it[0])
        if [i for i, _ in items] != list(range(len(items))):
            raise ValueError(f"{path}: non-contiguous token indices for {sid}")
        out[sid] = np.array([v for _, v in items], dtype=np.float64)
    return out


class SrlModel:
    """Parameters plus the forward/predict procedures.

    `use_amn=False` builds the plain tagger (no attention parameters, the
    encoder consumes bare word embeddings); with memory enabled the
    encoder input width grows by the merge strategy's output dimension.
    """

    def __init__(
        self,
        vocabs: Vocabs,
        hp: Hyperparams,
        use_amn: bool = True,
        merge: str = "average",
        rng: np.random.Generator | None = None,
        pretrained: WordVectors | None = None,
        ctx_width: int = 0,
        memory_flag: bool = True,
        tune_pretrained: bool = False,
    ):
        hp.validate()
        if merge not in attn.MERGE_STRATEGIES:
            raise ValueError(f"unknown merge strategy {merge!r}")
        if hp.d_ce > 0 and ctx_width <= 0:
            raise ValueError("d_ce > 0 requires the contextual vector width")
        if hp.d_pe > 0 and pretrained is None:
            raise ValueError("d_pe > 0 requires a pretrained vector table")
        if rng is None:
            rng = np.random.default_rng(0)
        self.vocabs = vocabs
        self.hp = hp
        self.use_amn = use_amn
        self.merge = merge
        self.ctx_width = ctx_width
        self.memory_flag = memory_flag
        self.tune_pretrained = tune_pretrained
        self.params: dict[str, Tensor] = {}
        self.frozen: set[str] = set()
        self._build(rng, pretrained)

    # -- construction -------------------------------------------------------

    def _emb_table(self, name: str, rows: int, dim: int, rng) -> Tensor | None:
        if dim == 0:
            return None
        t = Tensor(rng.normal(0.0, 0.1, size=(rows, dim)), requires_grad=True)
        self.params[name] = t
        return t

    def _build(self, rng: np.random.Generator, pretrained: WordVectors | None) -> None:
        hp = self.hp
        vs = self.vocabs
        self.word_re = self._emb_table("emb.word_re", len(vs.word), hp.d_re, rng)
        self.word_pe = self._emb_table("emb.word_pe", len(vs.word), hp.d_pe, rng)
        if self.word_pe is not None and pretrained is not None:
            hit = 0
            for i, w in enumerate(vs.word.tokens()):
                v = pretrained.get(w)
                if v is not None:
                    if len(v) != hp.d_pe:
                        raise ValueError(
                            f"pretrained width {len(v)} != d_pe {hp.d_pe}"
                        )
                    self.word_pe.data[i] = v
                    hit += 1
            if not self.tune_pretrained:
                self.word_pe.requires_grad = False
                self.frozen.add("emb.word_pe")
        self.pos_emb = self._emb_table("emb.pos", len(vs.pos), hp.d_pos, rng)
        self.lemma_emb = self._emb_table("emb.lemma", len(vs.lemma), hp.d_le, rng)
        self.flag_emb = self._emb_table("emb.flag", 2, hp.d_pred, rng)
        self.ctx_proj = None
        if hp.d_ce > 0:
            k = 1.0 / np.sqrt(self.ctx_width)
            self.ctx_proj = Tensor(
                rng.uniform(-k, k, size=(self.ctx_width, hp.d_ce)), requires_grad=True
            )
            self.params["emb.ctx_proj"] = self.ctx_proj

        self.arg_table = None
        self.lstm_a = None
        d_enc_in = hp.d_word
        if self.use_amn:
            self.arg_table = Tensor(
                rng.normal(0.0, 0.1, size=(len(vs.role), hp.d_ae)), requires_grad=True
            )
            self.params["arg_emb"] = self.arg_table
            self.lstm_a = init_lstm(hp.d_word, hp.d_a // 2, hp.k_a, rng)
            for name, t in self.lstm_a.named("lstm_a"):
                self.params[name] = t
            d_enc_in += attn.merge_output_dim(self.merge, hp.m, hp.d_ae)
        self.lstm_e = init_lstm(d_enc_in, hp.d_e, hp.k_e, rng)
        for name, t in self.lstm_e.named("lstm_e"):
            self.params[name] = t

        n_roles = len(vs.role)
        k = 1.0 / np.sqrt(2 * hp.d_e)
        self.cls_w = Tensor(
            rng.uniform(-k, k, size=(2 * hp.d_e, n_roles)), requires_grad=True
        )
        self.cls_b = Tensor(np.zeros((1, n_roles)), requires_grad=True)
        self.params["cls.W"] = self.cls_w
        self.params["cls.b"] = self.cls_b

    def trainable(self) -> dict[str, Tensor]:
        return {k: t for k, t in self.params.items() if k not in self.frozen}

    @property
    def n_roles(self) -> int:
        return len(self.vocabs.role)

    # -- forward ------------------------------------------------------------

    def embed_tokens(
        self,
        instance: PredicateInstance,
        ctx: np.ndarray | None = None,
        zero_ctx_ok: bool = False,
        flagged: bool = True,
    ) -> Tensor:
        """Per-token representation matrix, columns in a fixed order:
        trainable word, pretrained word, POS, lemma, contextual, flag."""
        sent = instance.sentence
        n = len(sent)
        vs = self.vocabs
        cols: list[Tensor] = []
        word_ids = [vs.word.id(t.form) for t in sent.tokens]
        if self.word_re is not None:
            cols.append(take_rows(self.word_re, word_ids))
        if self.word_pe is not None:
            cols.append(take_rows(self.word_pe, word_ids))
        if self.pos_emb is not None:
            cols.append(take_rows(self.pos_emb, [vs.pos.id(t.pos) for t in sent.tokens]))
        if self.lemma_emb is not None:
            cols.append(
                take_rows(self.lemma_emb, [vs.lemma.id(t.lemma) for t in sent.tokens])
            )
        if self.ctx_proj is not None:
            if ctx is None:
                if not zero_ctx_ok:
                    raise ValueError(
                        f"no contextual vectors for sentence {sent.id!r}"
                    )
                cols.append(Tensor(np.zeros((n, self.hp.d_ce))))
            else:
                if ctx.shape[0] != n:
                    raise ValueError(
                        f"contextual vectors for {sent.id!r} have {ctx.shape[0]} rows, "
                        f"sentence has {n} tokens"
                    )
                cols.append(matmul(Tensor(ctx), self.ctx_proj))
        if self.flag_emb is not None:
            flag_ids = [0] * n
            if flagged:
                flag_ids[instance.predicate_index] = 1
            cols.append(take_rows(self.flag_emb, flag_ids))
        if not cols:
            raise ValueError("all embedding columns are disabled")
        return cols[0] if len(cols) == 1 else concat(cols, axis=1)

    def forward(
        self,
        instance: PredicateInstance,
        memory: list[MemoryEntry],
        training: bool = False,
        rng: np.random.Generator | None = None,
        ctx: np.ndarray | None = None,
        memory_ctx: dict[str, np.ndarray] | None = None,
        return_bundle: bool = False,
    ):
        """Per-token logits (n x role count); optionally also the attention
        diagnostics bundle."""
        hp = self.hp
        x = self.embed_tokens(instance, ctx=ctx)
        bundle = None
        if self.use_amn:
            if not memory:
                raise ValueError("model was built with memory; got an empty memory")
            if len(memory) != hp.m:
                raise ValueError(
                    f"model expects {hp.m} memory entries, got {len(memory)}"
                )
            mem_embs = []
            mem_labels = []
            for entry in memory:
                ectx = (memory_ctx or {}).get(entry.sentence.id)
                mem_embs.append(
                    self.embed_tokens(
                        entry.instance,
                        ctx=ectx,
                        zero_ctx_ok=True,
                        flagged=self.memory_flag,
                    )
                )
                mem_labels.append([self.vocabs.role.id(r) for r in entry.labels])
            a, bundle = attn.amn_forward(
                x,
                mem_embs,
                mem_labels,
                self.lstm_a,
                self.arg_table,
                self.merge,
                dropout_rate=hp.r_d,
                training=training,
                rng=rng,
            )
            enc_in = concat([x, a], axis=1)
        else:
            if memory:
                raise ValueError("base model cannot consume memory entries")
            enc_in = x
        enc_in = dropout(enc_in, hp.r_d, training, rng)
        enc = bilstm_apply(
            self.lstm_e, enc_in, dropout_rate=hp.r_d, training=training, rng=rng
        )
        logits = add(matmul(enc, self.cls_w), self.cls_b)
        if return_bundle:
            return logits, bundle
        return logits

    def loss(
        self,
        instance: PredicateInstance,
        memory: list[MemoryEntry],
        training: bool = True,
        rng: np.random.Generator | None = None,
        ctx: np.ndarray | None = None,
        memory_ctx: dict[str, np.ndarray] | None = None,
    ) -> Tensor:
        logits = self.forward(
            instance, memory, training=training, rng=rng, ctx=ctx, memory_ctx=memory_ctx
        )
        gold = [self.vocabs.role.id(r) for r in instance.gold_labels]
        return cross_entropy(logits, gold)

    def predict(
        self,
        instance: PredicateInstance,
        memory: list[MemoryEntry],
        ctx: np.ndarray | None = None,
        memory_ctx: dict[str, np.ndarray] | None = None,
    ) -> np.ndarray:
        """Greedy per-token role ids; ties go to the lowest label id."""
        with no_grad():
            logits = self.forward(
                instance, memory, training=False, ctx=ctx, memory_ctx=memory_ctx
            )
        return np.argmax(logits.data, axis=1)

    def predict_labels(
        self,
        instance: PredicateInstance,
        memory: list[MemoryEntry],
        ctx: np.ndarray | None = None,
        memory_ctx: dict[str, np.ndarray] | None = None,
    ) -> list[str]:
        ids = self.predict(instance, memory, ctx=ctx, memory_ctx=memory_ctx)
        return [self.vocabs.role.token(int(i)) for i in ids]

    # -- persistence ---------------------------------------------------------

    def save(self, path: str) -> None:
        """Versioned checkpoint: magic, one JSON metadata line, then raw
        little-endian array bytes in sorted name order. Byte-stable given
        identical state."""
        names = sorted(self.params)
        meta = {
            "hp": asdict(self.hp),
            "use_amn": self.use_amn,
            "merge": self.merge,
            "ctx_width": self.ctx_width,
            "memory_flag": self.memory_flag,
            "tune_pretrained": self.tune_pretrained,
            "frozen": sorted(self.frozen),
            "vocabs": {
                "word": self.vocabs.word.tokens(),
                "lemma": self.vocabs.lemma.tokens(),
                "pos": self.vocabs.pos.tokens(),
                "role": self.vocabs.role.tokens(),
            },
            "arrays": [
                {"name": n, "shape": list(self.params[n].data.shape)} for n in names
            ],
        }
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(json.dumps(meta, sort_keys=True).encode("utf-8"))
            fh.write(b"\n")
            for n in names:
                fh.write(np.ascontiguousarray(self.params[n].data, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str) -> "SrlModel":
        with open(path, "rb") as fh:
            magic = fh.read(len(CHECKPOINT_MAGIC))
            if magic != CHECKPOINT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint file")
            meta = json.loads(fh.readline().decode("utf-8"))
            blob = fh.read()
        vocab_lists = meta["vocabs"]

        def rebuild(tokens: list[str]) -> Vocab:
            v = Vocab.__new__(Vocab)
            v._tokens = list(tokens)
            v._ids = {t: i for i, t in enumerate(tokens)}
            v.unk_id = v._ids[Vocab.UNK]
            return v

        vocabs = Vocabs(
            word=rebuild(vocab_lists["word"]),
            lemma=rebuild(vocab_lists["lemma"]),
            pos=rebuild(vocab_lists["pos"]),
            role=rebuild(vocab_lists["role"]),
        )
        hp = Hyperparams(**meta["hp"])
        model = cls(
            vocabs,
            hp,
            use_amn=meta["use_amn"],
            merge=meta["merge"],
            rng=np.random.default_rng(0),
            pretrained=None if hp.d_pe == 0 else _DummyVectors(hp.d_pe),
            ctx_width=meta["ctx_width"],
            memory_flag=meta["memory_flag"],
            tune_pretrained=meta["tune_pretrained"],
        )
        offset = 0
        for entry in meta["arrays"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            offset += count * 8
            model.params[entry["name"]].data[...] = arr.reshape(shape)
        model.frozen = set(meta["frozen"])
        for name in model.frozen:
            model.params[name].requires_grad = False
        return model


class _DummyVectors:
    """Placeholder satisfying the pretrained-table requirement during
    checkpoint load; real rows are overwritten from the file."""

    def __init__(self, dim: int):
        self.dim = dim

    def get(self, word: str):
        return None
