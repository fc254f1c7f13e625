"""CoNLL-2009 corpus handling.

Covers parsing and serialization of the tab-separated 2009 column format,
expansion of sentences into per-predicate labeling instances, vocabulary
construction, and labeled precision/recall/F1 scoring of argument
predictions. Everything here is pure functions over immutable-ish inputs;
nothing holds shared mutable state.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

# Reserved label for tokens that are not arguments of the current predicate.
# Matches the empty APRED cell so no translation is needed at the file layer.
NULL_ROLE = "_"

# Columns: ID FORM LEMMA PLEMMA POS PPOS FEAT PFEAT HEAD PHEAD DEPREL
# PDEPREL FILLPRED PRED APRED1 ... APREDn
_N_FIXED_COLS = 14


class ConllError(ValueError):
    """Base class for corpus format problems."""


class ConllParseError(ConllError):
    """Malformed row (e.g. ragged column counts); carries a line number."""


class ConllStructureError(ConllError):
    """Well-formed rows that violate sentence-level structure."""


@dataclass
class Token:
    form: str
    lemma: str  # predicted lemma (PLEMMA column)
    pos: str  # predicted POS (PPOS column)
    is_predicate: bool
    pred_sense: str | None
    roles: list[str]  # one label per predicate in the sentence, NULL_ROLE if none
    # Remaining columns, kept verbatim so serialization round-trips:
    # (LEMMA, POS, FEAT, PFEAT, HEAD, PHEAD, DEPREL, PDEPREL)
    misc: tuple[str, ...] = ("_",) * 8


@dataclass
class Sentence:
    id: str
    tokens: list[Token]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def predicate_indices(self) -> list[int]:
        return [i for i, t in enumerate(self.tokens) if t.is_predicate]

    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    def lemmas(self) -> list[str]:
        return [t.lemma for t in self.tokens]

    def pos_tags(self) -> list[str]:
        return [t.pos for t in self.tokens]


@dataclass
class PredicateInstance:
    """One (sentence, predicate) pair as an independent tagging problem."""

    sentence: Sentence
    predicate_index: int
    gold_labels: list[str]  # length n, NULL_ROLE at non-argument positions

    @property
    def id(self) -> str:
        return f"{self.sentence.id}#{self.predicate_index}"

    def __len__(self) -> int:
        return len(self.sentence)


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    counts: tuple[int, int, int]  # (gold_args, pred_args, correct_args)


def parse_conll(text: str, id_prefix: str = "s") -> list[Sentence]:
    """Parse CoNLL-2009 text into sentences.

    Sentences are blank-line separated; fields are tab or space separated.
    Sentence ids are assigned positionally as `{id_prefix}{index}`.
    """
    sentences: list[Sentence] = []
    block: list[tuple[int, list[str]]] = []
    lines = text.split("\n")
    for lineno, line in enumerate(lines, start=1):
        if line.strip():
            block.append((lineno, line.split()))
        elif block:
            sentences.append(_block_to_sentence(block, f"{id_prefix}{len(sentences)}"))
            block = []
    if block:
        sentences.append(_block_to_sentence(block, f"{id_prefix}{len(sentences)}"))
    return sentences


def _block_to_sentence(block: list[tuple[int, list[str]]], sid: str) -> Sentence:
    first_lineno, first_row = block[0]
    width = len(first_row)
    if width < _N_FIXED_COLS:
        raise ConllParseError(
            f"line {first_lineno}: expected at least {_N_FIXED_COLS} columns, got {width}"
        )
    for lineno, row in block:
        if len(row) != width:
            raise ConllParseError(
                f"line {lineno}: expected {width} columns, got {len(row)}"
            )

    n_apred = width - _N_FIXED_COLS
    tokens: list[Token] = []
    for lineno, row in block:
        is_pred = row[12] == "Y"
        sense = row[13] if row[13] != "_" else None
        if is_pred and sense is None:
            raise ConllStructureError(
                f"line {lineno}: FILLPRED is Y but PRED column is empty"
            )
        if not is_pred and sense is not None:
            raise ConllStructureError(
                f"line {lineno}: PRED column set without FILLPRED=Y"
            )
        tokens.append(
            Token(
                form=row[1],
                lemma=row[3],
                pos=row[5],
                is_predicate=is_pred,
                pred_sense=sense,
                roles=list(row[14:]),
                misc=(row[2], row[4], row[6], row[7], row[8], row[9], row[10], row[11]),
            )
        )

    n_pred = sum(t.is_predicate for t in tokens)
    if n_pred != n_apred:
        raise ConllStructureError(
            f"sentence at line {first_lineno}: {n_pred} predicates (FILLPRED=Y) "
            f"but {n_apred} APRED columns"
        )
    return Sentence(id=sid, tokens=tokens)


def write_conll(
    sentences: list[Sentence],
    predictions: dict[tuple[str, int], list[str]] | None = None,
) -> str:
    """Serialize sentences back to the tab-separated column format.

    With `predictions` (keyed by (sentence id, predicate token index), one
    label per token), the APRED columns carry the predicted roles instead
    of the stored ones; every predicate instance must be covered.
    """
    blocks = []
    for sent in sentences:
        pred_positions = sent.predicate_indices
        apred_cols: list[list[str]] = []
        for p, tidx in enumerate(pred_positions):
            if predictions is not None:
                key = (sent.id, tidx)
                if key not in predictions:
                    raise ConllStructureError(
                        f"missing prediction for sentence {sent.id} predicate index {tidx}"
                    )
                labels = predictions[key]
                if len(labels) != len(sent):
                    raise ConllStructureError(
                        f"prediction for {sent.id}#{tidx} has {len(labels)} labels, "
                        f"sentence has {len(sent)} tokens"
                    )
                apred_cols.append(list(labels))
            else:
                apred_cols.append([t.roles[p] for t in sent.tokens])
        rows = []
        for i, tok in enumerate(sent.tokens):
            m = tok.misc
            row = [
                str(i + 1),
                tok.form,
                m[0],
                tok.lemma,
                m[1],
                tok.pos,
                m[2],
                m[3],
                m[4],
                m[5],
                m[6],
                m[7],
                "Y" if tok.is_predicate else "_",
                tok.pred_sense if tok.pred_sense is not None else "_",
            ]
            row.extend(col[i] for col in apred_cols)
            rows.append("\t".join(row))
        blocks.append("\n".join(rows))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n"


def extract_instances(sentence: Sentence) -> list[PredicateInstance]:
    """One labeling instance per predicate, in textual predicate order."""
    out = []
    for p, tidx in enumerate(sentence.predicate_indices):
        out.append(
            PredicateInstance(
                sentence=sentence,
                predicate_index=tidx,
                gold_labels=[t.roles[p] for t in sentence.tokens],
            )
        )
    return out


def corpus_instances(sentences: list[Sentence]) -> list[PredicateInstance]:
    return [inst for s in sentences for inst in extract_instances(s)]


def score(gold: list[PredicateInstance], pred: list[PredicateInstance]) -> PRF:
    """Labeled precision/recall/F1 over argument positions.

    An argument is correct iff its position and label both match a
    non-NULL gold label. The NULL role never counts as an argument.
    """
    if len(gold) != len(pred):
        raise ConllError(f"instance sets differ in size: {len(gold)} vs {len(pred)}")
    gold_args = pred_args = correct = 0
    for g, p in zip(gold, pred):
        if (g.sentence.id, g.predicate_index) != (p.sentence.id, p.predicate_index):
            raise ConllError(
                f"misaligned instances: {g.id} vs {p.id}"
            )
        if len(g.gold_labels) != len(p.gold_labels):
            raise ConllError(f"label rows for {g.id} differ in length")
        for gl, pl in zip(g.gold_labels, p.gold_labels):
            if gl != NULL_ROLE:
                gold_args += 1
                if pl == gl:
                    correct += 1
            if pl != NULL_ROLE:
                pred_args += 1
    precision = correct / pred_args if pred_args > 0 else 0.0
    recall = correct / gold_args if gold_args > 0 else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0
        else 0.0
    )
    return PRF(precision, recall, f1, (gold_args, pred_args, correct))


def confusion_matrix(
    gold: list[PredicateInstance],
    pred: list[PredicateInstance],
    labels: list[str],
) -> np.ndarray:
    """Count matrix, entry (g, p) = tokens with gold label g predicted as p.

    Restricted to positions where both labels are in `labels`; rows are
    indexed by gold label in the given order.
    """
    index = {lab: i for i, lab in enumerate(labels)}
    mat = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for g, p in zip(gold, pred):
        for gl, pl in zip(g.gold_labels, p.gold_labels):
            gi = index.get(gl)
            pi = index.get(pl)
            if gi is not None and pi is not None:
                mat[gi, pi] += 1
    return mat


class Vocab:
    """Bijection token <-> dense id with a reserved unknown id."""

    UNK = "<unk>"

    def __init__(self, tokens: list[str], reserved: tuple[str, ...] = ()):
        self._tokens = list(reserved) + [Vocab.UNK]
        seen = set(self._tokens)
        for t in tokens:
            if t not in seen:
                self._tokens.append(t)
                seen.add(t)
        self._ids = {t: i for i, t in enumerate(self._tokens)}
        self.unk_id = self._ids[Vocab.UNK]

    def id(self, token: str) -> int:
        return self._ids.get(token, self.unk_id)

    def token(self, i: int) -> str:
        return self._tokens[i]

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._ids

    def tokens(self) -> list[str]:
        return list(self._tokens)


@dataclass
class Vocabs:
    word: Vocab
    lemma: Vocab
    pos: Vocab
    role: Vocab  # reserves NULL_ROLE at id 0

    @property
    def null_role_id(self) -> int:
        return self.role.id(NULL_ROLE)


def build_vocabs(corpus: list[Sentence], min_freq: int = 1) -> Vocabs:
    """Count-threshold vocabularies over a corpus.

    Word and lemma tokens seen fewer than `min_freq` times map to the
    unknown id; POS tags and roles are kept unconditionally. Token order
    within a vocab is by descending frequency, then alphabetical, so ids
    are stable across runs.
    """
    if not corpus:
        raise ConllError("cannot build vocabularies from an empty corpus")
    if min_freq < 1:
        raise ConllError(f"min_freq must be >= 1, got {min_freq}")
    word_counts: Counter[str] = Counter()
    lemma_counts: Counter[str] = Counter()
    pos_counts: Counter[str] = Counter()
    roles: set[str] = set()
    for sent in corpus:
        for tok in sent.tokens:
            word_counts[tok.form] += 1
            lemma_counts[tok.lemma] += 1
            pos_counts[tok.pos] += 1
            roles.update(r for r in tok.roles if r != NULL_ROLE)

    def keep(counts: Counter[str], threshold: int) -> list[str]:
        kept = [t for t, c in counts.items() if c >= threshold]
        kept.sort(key=lambda t: (-counts[t], t))
        return kept

    return Vocabs(
        word=Vocab(keep(word_counts, min_freq)),
        lemma=Vocab(keep(lemma_counts, min_freq)),
        pos=Vocab(keep(pos_counts, 1)),
        role=Vocab(sorted(roles), reserved=(NULL_ROLE,)),
    )
