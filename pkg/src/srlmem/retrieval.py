"""Associated-sentence retrieval.

Implements the four sentence distances used to pick labeled neighbor
sentences from the training set (POS edit distance "ed", relaxed word
mover's distance "wmd", smoothed-inverse-frequency embedding distance
"sd", and a seeded random baseline "rd") plus the top-m neighbor index
with stable tie-breaking and a persisted text format so training never
recomputes distances.

Distances operate on sentences; an instance's distance to another is the
distance between their underlying sentences, so two instances sharing a
sentence are at distance 0. A query never retrieves its own instance.
"""

from __future__ import annotations

import hashlib
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .conll import PredicateInstance, Sentence
from .vectors import WordVectors

DISTANCE_METHODS = ("ed", "wmd", "sd", "rd")

# Returned when a sentence has no in-vocabulary words left for wmd/sd.
LARGE_DISTANCE = 1e9

DEFAULT_SIF_A = 1e-3


def pos_edit_distance(a: list[str], b: list[str]) -> int:
    """Levenshtein distance over whole POS tags, unit edit costs."""
    tags = {t: i for i, t in enumerate(dict.fromkeys(list(a) + list(b)))}
    ea = np.array([tags[t] for t in a], dtype=np.intc)
    eb = np.array([tags[t] for t in b], dtype=np.intc)
    return int(kernels.levenshtein(ea, eb))


def _nbow(sentence: Sentence, emb: WordVectors) -> tuple[np.ndarray, np.ndarray]:
    """Normalized bag-of-words weights and vector rows; OOV words dropped."""
    counts = Counter(w for w in sentence.forms() if w in emb)
    if not counts:
        return np.empty(0), np.empty((0, emb.dim))
    words = sorted(counts)
    weights = np.array([counts[w] for w in words], dtype=np.float64)
    weights /= weights.sum()
    mat = np.stack([emb.get(w) for w in words])
    return weights, mat


def relaxed_wmd(a: Sentence, b: Sentence, emb: WordVectors) -> float:
    """Lower-bound relaxation of word mover's distance.

    Each one-sided relaxation moves every word's nBOW mass to its nearest
    counterpart in the other sentence; the distance is the max of the two
    sides. If either sentence loses all words to the vocabulary filter the
    sentinel LARGE_DISTANCE is returned.
    """
    wa, va = _nbow(a, emb)
    wb, vb = _nbow(b, emb)
    if wa.size == 0 or wb.size == 0:
        return LARGE_DISTANCE
    # pairwise euclidean distances
    d2 = (
        (va * va).sum(axis=1)[:, None]
        + (vb * vb).sum(axis=1)[None, :]
        - 2.0 * (va @ vb.T)
    )
    dist = np.sqrt(np.maximum(d2, 0.0))
    side_a = float(wa @ dist.min(axis=1))
    side_b = float(wb @ dist.min(axis=0))
    return max(side_a, side_b)


def sif_embed(
    corpus: list[Sentence],
    emb: WordVectors,
    word_freq: dict[str, float],
    a_param: float = DEFAULT_SIF_A,
    remove_common: bool = True,
) -> np.ndarray:
    """Frequency-weighted sentence vectors with the shared direction removed.

    Each sentence is the average of a/(a + p(w)) * v_w over in-vocabulary
    words; the stacked matrix then has every row's projection onto its
    first right-singular direction subtracted. Sentences with no usable
    words become zero vectors (with a warning).
    """
    if a_param <= 0:
        raise ValueError(f"a_param must be positive, got {a_param}")
    rows = np.zeros((len(corpus), emb.dim), dtype=np.float64)
    for i, sent in enumerate(corpus):
        acc = np.zeros(emb.dim)
        n = 0
        for w in sent.forms():
            v = emb.get(w)
            if v is None:
                continue
            p = word_freq.get(w, 0.0)
            acc += (a_param / (a_param + p)) * v
            n += 1
        if n == 0:
            warnings.warn(f"sentence {sent.id} has no in-vocabulary words; zero vector")
        else:
            rows[i] = acc / n
    if remove_common and np.any(rows):
        _, _, vt = np.linalg.svd(rows, full_matrices=False)
        u = vt[0]
        rows = rows - np.outer(rows @ u, u)
    return rows


def unigram_probabilities(corpus: list[Sentence]) -> dict[str, float]:
    counts: Counter[str] = Counter()
    for sent in corpus:
        counts.update(sent.forms())
    total = sum(counts.values())
    return {w: c / total for w, c in counts.items()}


def _random_distance(seed: int, id_a: str, id_b: str) -> float:
    """Deterministic symmetric pseudo-random distance in [0, 1)."""
    lo, hi = sorted((id_a, id_b))
    digest = hashlib.md5(f"{seed}|{lo}|{hi}".encode()).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


@dataclass
class Resources:
    """Precomputed inputs a distance method needs at query time."""

    method: str
    emb: WordVectors | None = None
    word_freq: dict[str, float] | None = None
    sif_rows: dict[str, np.ndarray] | None = None  # sentence id -> vector
    rd_seed: int = 0
    sif_a: float = DEFAULT_SIF_A


def prepare_resources(
    method: str,
    train_sentences: list[Sentence],
    query_sentences: list[Sentence] | None = None,
    emb: WordVectors | None = None,
    rd_seed: int = 0,
    sif_a: float = DEFAULT_SIF_A,
) -> Resources:
    """Build whatever the chosen method needs; word frequencies always come
    from the training corpus."""
    if method not in DISTANCE_METHODS:
        raise ValueError(f"unknown distance method {method!r}")
    res = Resources(method=method, rd_seed=rd_seed, sif_a=sif_a)
    if method in ("wmd", "sd"):
        if emb is None:
            raise ValueError(f"method {method!r} needs word vectors")
        res.emb = emb
        res.word_freq = unigram_probabilities(train_sentences)
    if method == "sd":
        seen: dict[str, Sentence] = {}
        for s in train_sentences + list(query_sentences or []):
            seen.setdefault(s.id, s)
        ordered = list(seen.values())
        rows = sif_embed(ordered, emb, res.word_freq, a_param=sif_a)
        res.sif_rows = {s.id: rows[i] for i, s in enumerate(ordered)}
    return res


def sentence_distance(
    method: str,
    a: PredicateInstance,
    b: PredicateInstance,
    resources: Resources,
) -> float:
    """Distance between the instances' underlying sentences."""
    if resources.method != method:
        raise ValueError(
            f"resources prepared for {resources.method!r}, asked for {method!r}"
        )
    sa, sb = a.sentence, b.sentence
    if method == "ed":
        return float(pos_edit_distance(sa.pos_tags(), sb.pos_tags()))
    if method == "wmd":
        if resources.emb is None:
            raise ValueError("wmd resources missing word vectors")
        return relaxed_wmd(sa, sb, resources.emb)
    if method == "sd":
        if resources.sif_rows is None:
            raise ValueError("sd resources missing precomputed sentence vectors")
        try:
            ra, rb = resources.sif_rows[sa.id], resources.sif_rows[sb.id]
        except KeyError as e:
            raise ValueError(f"no sentence vector for {e.args[0]!r}") from None
        return float(np.linalg.norm(ra - rb))
    if method == "rd":
        return _random_distance(resources.rd_seed, sa.id, sb.id)
    raise ValueError(f"unknown distance method {method!r}")


@dataclass
class MemoryEntry:
    """A retrieved training instance with its gold labels and distance."""

    instance: PredicateInstance
    distance: float

    @property
    def sentence(self) -> Sentence:
        return self.instance.sentence

    @property
    def labels(self) -> list[str]:
        return self.instance.gold_labels

    def __len__(self) -> int:
        return len(self.instance)


@dataclass
class NeighborIndex:
    method: str
    m: int
    # query instance id -> m (train instance id, distance) pairs, ascending
    entries: dict[str, list[tuple[str, float]]] = field(default_factory=dict)

    def memory_for(
        self, query_id: str, by_id: dict[str, PredicateInstance]
    ) -> list[MemoryEntry]:
        if query_id not in self.entries:
            raise KeyError(f"index has no entry for {query_id!r}")
        out = []
        for tid, dist in self.entries[query_id]:
            if tid not in by_id:
                raise KeyError(f"index references unknown train instance {tid!r}")
            out.append(MemoryEntry(instance=by_id[tid], distance=dist))
        return out

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"method={self.method}\n")
            fh.write(f"m={self.m}\n")
            for qid in self.entries:
                pairs = " ".join(f"{tid}:{repr(d)}" for tid, d in self.entries[qid])
                fh.write(f"{qid}\t{pairs}\n")

    @classmethod
    def load(cls, path: str) -> "NeighborIndex":
        with open(path, encoding="utf-8") as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if len(lines) < 2 or not lines[0].startswith("method=") or not lines[1].startswith("m="):
            raise ValueError(f"{path}: not a neighbor index file")
        idx = cls(method=lines[0][len("method="):], m=int(lines[1][len("m="):]))
        for ln in lines[2:]:
            if not ln.strip():
                continue
            qid, _, rest = ln.partition("\t")
            pairs = []
            for item in rest.split():
                tid, _, d = item.rpartition(":")
                pairs.append((tid, float(d)))
            idx.entries[qid] = pairs
        return idx


def build_index(
    train: list[PredicateInstance],
    queries: list[PredicateInstance],
    method: str,
    m: int,
    resources: Resources,
) -> NeighborIndex:
    """Top-m nearest training instances for every query.

    A full linear scan: distances are computed per unique sentence pair
    (cached), entries sorted ascending with ties broken by position in the
    training list, and a query's own instance is never returned.
    """
    if m < 1:
        raise ValueError(f"memory size must be >= 1, got {m}")
    if not train:
        raise ValueError("empty training set")

    # distance is a function of the sentence pair only; cache on ids
    pair_cache: dict[tuple[str, str], float] = {}

    ed_codes: dict[str, np.ndarray] | None = None
    if method == "ed":
        tagset: dict[str, int] = {}
        ed_codes = {}
        for inst in list(train) + list(queries):
            if inst.sentence.id in ed_codes:
                continue
            code = np.array(
                [tagset.setdefault(t, len(tagset)) for t in inst.sentence.pos_tags()],
                dtype=np.intc,
            )
            ed_codes[inst.sentence.id] = code

    def dist(q: PredicateInstance, t: PredicateInstance) -> float:
        key = (
            (q.sentence.id, t.sentence.id)
            if q.sentence.id <= t.sentence.id
            else (t.sentence.id, q.sentence.id)
        )
        cached = pair_cache.get(key)
        if cached is None:
            if ed_codes is not None:
                cached = float(
                    kernels.levenshtein(ed_codes[q.sentence.id], ed_codes[t.sentence.id])
                )
            else:
                cached = sentence_distance(method, q, t, resources)
            pair_cache[key] = cached
        return cached

    index = NeighborIndex(method=method, m=m)
    for q in queries:
        candidates = [
            (dist(q, t), pos, t) for pos, t in enumerate(train) if t.id != q.id
        ]
        if len(candidates) < m:
            raise ValueError(
                f"query {q.id}: only {len(candidates)} candidates for memory size {m}"
            )
        candidates.sort(key=lambda c: (c[0], c[1]))
        index.entries[q.id] = [(t.id, d) for d, _, t in candidates[:m]]
    return index
