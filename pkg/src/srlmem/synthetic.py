"""Synthetic CoNLL-2009 corpus generator for desk-scale experiments.

Sentences come from a small bank of templates; each paraphrase cluster is
a (template, word-pool) pair, so sentences within a cluster share a POS
sequence and role layout while clusters differ in both. That guarantees
retrieval has signal: a sentence's nearest neighbors by POS edit distance
are its cluster mates, whose gold labels sit in the same positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conll import Sentence, Token
from .vectors import WordVectors

ROLE_ORDER = ("A0", "A1", "A2", "AM-MNR", "AM-TMP", "AM-LOC", "A3", "A4")


@dataclass(frozen=True)
class Template:
    pos: tuple[str, ...]
    roles: tuple[str, ...]  # "_" for non-arguments, "PRED" marks the predicate

    @property
    def predicate_position(self) -> int:
        return self.roles.index("PRED")

    def role_set(self) -> set[str]:
        return {r for r in self.roles if r not in ("_", "PRED")}


_TEMPLATES = [
    Template(("NN", "VBD"), ("A0", "PRED")),
    Template(("NN", "VBD", "DT", "NN"), ("A0", "PRED", "_", "A1")),
    Template(("DT", "NN", "VBD", "DT", "NN", "RB"), ("_", "A0", "PRED", "_", "A1", "AM-MNR")),
    Template(("NN", "MD", "VB", "NN", "RB"), ("A0", "_", "PRED", "A1", "AM-TMP")),
    Template(("DT", "JJ", "NN", "VBZ", "IN", "DT", "NN"), ("_", "_", "A0", "PRED", "_", "_", "AM-LOC")),
    Template(("NN", "VBD", "NN", "DT", "NN"), ("A0", "PRED", "A2", "_", "A1")),
    Template(("RB", "NN", "VBZ", "NN"), ("AM-TMP", "A0", "PRED", "A1")),
    Template(("NN", "VBD", "RB"), ("A0", "PRED", "AM-MNR")),
    Template(("DT", "NN", "VBZ", "NN"), ("_", "A0", "PRED", "A1")),
    Template(("NN", "VBZ", "DT", "JJ", "NN"), ("A0", "PRED", "_", "_", "A1")),
]

# POS tags whose fillers vary by cluster; determiners and prepositions draw
# from small shared closed classes.
_OPEN_TAGS = ("NN", "VBD", "VBZ", "VB", "JJ", "RB", "MD")
_CLOSED_POOLS = {
    "DT": ["the", "a", "this"],
    "IN": ["in", "near", "behind"],
}


def role_inventory(n_roles: int) -> list[str]:
    if n_roles < 1:
        raise ValueError(f"need at least one role, got {n_roles}")
    return list(ROLE_ORDER[: min(n_roles, len(ROLE_ORDER))])


def generate(
    n_sentences: int,
    n_roles: int = 5,
    n_clusters: int = 6,
    vocab_size: int = 120,
    seed: int = 0,
) -> tuple[list[Sentence], list[int]]:
    """Build a corpus plus each sentence's cluster id.

    Deterministic in all arguments; every sentence has exactly one
    predicate and at least one non-null role.
    """
    if n_sentences < 1 or n_clusters < 1 or vocab_size < 1:
        raise ValueError("sizes must be >= 1")
    inventory = set(role_inventory(n_roles))
    usable = [t for t in _TEMPLATES if t.role_set() <= inventory]
    if not usable:
        raise ValueError(f"no template fits role inventory of size {n_roles}")

    rng = np.random.default_rng(seed)
    pool_size = max(2, vocab_size // (len(_OPEN_TAGS) * n_clusters))
    pools: dict[tuple[int, str], list[str]] = {}
    for c in range(n_clusters):
        for tag in _OPEN_TAGS:
            pools[(c, tag)] = [
                f"{tag.lower()}_c{c}w{i}" for i in range(pool_size)
            ]

    sentences: list[Sentence] = []
    clusters: list[int] = []
    for i in range(n_sentences):
        cluster = i % n_clusters
        template = usable[cluster % len(usable)]
        tokens: list[Token] = []
        pred_pos = template.predicate_position
        for t, (tag, role) in enumerate(zip(template.pos, template.roles)):
            if tag in _CLOSED_POOLS:
                form = _CLOSED_POOLS[tag][int(rng.integers(len(_CLOSED_POOLS[tag])))]
            else:
                pool = pools[(cluster, tag)]
                form = pool[int(rng.integers(len(pool)))]
            is_pred = role == "PRED"
            tokens.append(
                Token(
                    form=form,
                    lemma=form,
                    pos=tag,
                    is_predicate=is_pred,
                    pred_sense=f"{form}.01" if is_pred else None,
                    roles=[role if role not in ("_", "PRED") else "_"],
                    misc=(
                        form,
                        tag,
                        "_",
                        "_",
                        "0" if is_pred else str(pred_pos + 1),
                        "0" if is_pred else str(pred_pos + 1),
                        "root" if is_pred else "dep",
                        "root" if is_pred else "dep",
                    ),
                )
            )
        sentences.append(Sentence(id=f"syn{i}", tokens=tokens))
        clusters.append(cluster)
    return sentences, clusters


def generate_vectors(sentences: list[Sentence], dim: int = 16, seed: int = 0) -> WordVectors:
    """Deterministic random vectors for every form in the corpus, for
    exercising the embedding-based distances on synthetic data."""
    forms = sorted({t.form for s in sentences for t in s.tokens})
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, 1.0, size=(len(forms), dim))
    return WordVectors(forms, matrix)
