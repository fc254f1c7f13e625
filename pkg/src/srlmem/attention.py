"""Inter-sentence attention over retrieved labeled sentences.

The input sentence and each memory sentence are encoded by a shared
stacked BiLSTM; dot products between their contextual vectors give one
raw similarity matrix per memory entry, row-softmaxed into attention
weights that mix the memory's label embeddings into per-token feature
vectors. Four merging strategies combine the per-entry vectors into the
final attention embedding that the tagger consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    LstmParams,
    Tensor,
    bilstm_apply,
    concat,
    dropout,
    matmul,
    mean_all,
    mul,
    mul_scalar,
    slice_cols,
    softmax_rows,
    take_rows,
    transpose,
)

MERGE_STRATEGIES = ("concat", "average", "weighted", "flat")


def merge_output_dim(strategy: str, m: int, d_ae: int) -> int:
    if strategy == "concat":
        return m * d_ae
    return d_ae


def encode_for_attention(
    params: LstmParams,
    emb: Tensor,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Contextual encoding used on both sides of the attention; the same
    parameters serve the input sentence and every memory sentence."""
    x = dropout(emb, dropout_rate, training, rng)
    return bilstm_apply(params, x, dropout_rate=dropout_rate, training=training, rng=rng)


def raw_attention(s_enc: Tensor, a_enc: Tensor) -> Tensor:
    """Similarity matrix: entry (i, k) is the dot product of input token i's
    encoding with memory token k's encoding."""
    return matmul(s_enc, transpose(a_enc))


def normalize_attention(raw: Tensor) -> Tensor:
    """Row-softmax turning each similarity row into a probability vector."""
    return softmax_rows(raw)


def entry_label_embedding(alpha: Tensor, label_ids: list[int], table: Tensor) -> Tensor:
    """Attention-weighted mix of one memory entry's label embeddings."""
    if alpha.data.shape[1] != len(label_ids):
        raise ValueError(
            f"attention width {alpha.data.shape[1]} != label count {len(label_ids)}"
        )
    return matmul(alpha, take_rows(table, label_ids))


def merge(
    strategy: str,
    a_entries: list[Tensor],
    raw_mats: list[Tensor],
    label_mats: list[Tensor],
) -> tuple[Tensor, dict]:
    """Combine per-entry attention embeddings into the final embedding.

    Returns the merged matrix plus any strategy-internal weights (the
    entry weights for `weighted`, the flat attention rows for `flat`) for
    diagnostics.
    """
    m = len(a_entries)
    if m == 0:
        raise ValueError("memory must be non-empty")
    extras: dict = {}
    if strategy == "concat":
        merged = a_entries[0] if m == 1 else concat(a_entries, axis=1)
    elif strategy == "average":
        total = a_entries[0]
        for a in a_entries[1:]:
            total = total + a
        merged = mul_scalar(total, 1.0 / m)
    elif strategy == "weighted":
        means = [mean_all(r) for r in raw_mats]
        beta = softmax_rows(concat(means, axis=1) if m > 1 else means[0])
        merged = mul(a_entries[0], slice_cols(beta, 0, 1))
        for j in range(1, m):
            merged = merged + mul(a_entries[j], slice_cols(beta, j, j + 1))
        extras["beta"] = beta
    elif strategy == "flat":
        raw_cat = raw_mats[0] if m == 1 else concat(raw_mats, axis=1)
        gamma = softmax_rows(raw_cat)
        labels_cat = label_mats[0] if m == 1 else concat(label_mats, axis=0)
        merged = matmul(gamma, labels_cat)
        extras["gamma"] = gamma
    else:
        raise ValueError(f"unknown merge strategy {strategy!r}")
    return merged, extras


@dataclass
class AttentionBundle:
    """Detached per-instance diagnostics of one attention pass."""

    raw: list[np.ndarray]
    alpha: list[np.ndarray]
    entry_embeddings: list[np.ndarray]
    merged: np.ndarray
    beta: np.ndarray | None
    gamma: np.ndarray | None
    n_all: int


def amn_forward(
    s_emb: Tensor,
    memory_embs: list[Tensor],
    memory_label_ids: list[list[int]],
    lstm_a: LstmParams,
    arg_table: Tensor,
    strategy: str,
    dropout_rate: float = 0.0,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, AttentionBundle]:
    """Full attention pass: encode, attend, merge.

    Gradients flow through the memory-side encodings and the label
    embedding table; nothing is stopped.
    """
    if len(memory_embs) != len(memory_label_ids):
        raise ValueError("memory embeddings and label sequences differ in count")
    if not memory_embs:
        raise ValueError("memory must be non-empty")
    s_enc = encode_for_attention(lstm_a, s_emb, dropout_rate, training, rng)
    raw_mats: list[Tensor] = []
    alphas: list[Tensor] = []
    a_entries: list[Tensor] = []
    label_mats: list[Tensor] = []
    for emb, ids in zip(memory_embs, memory_label_ids):
        a_enc = encode_for_attention(lstm_a, emb, dropout_rate, training, rng)
        raw = raw_attention(s_enc, a_enc)
        alpha = normalize_attention(raw)
        label_mat = take_rows(arg_table, ids)
        raw_mats.append(raw)
        alphas.append(alpha)
        label_mats.append(label_mat)
        a_entries.append(matmul(alpha, label_mat))
    merged, extras = merge(strategy, a_entries, raw_mats, label_mats)
    bundle = AttentionBundle(
        raw=[r.data.copy() for r in raw_mats],
        alpha=[a.data.copy() for a in alphas],
        entry_embeddings=[a.data.copy() for a in a_entries],
        merged=merged.data.copy(),
        beta=extras["beta"].data.copy() if "beta" in extras else None,
        gamma=extras["gamma"].data.copy() if "gamma" in extras else None,
        n_all=sum(e.data.shape[0] for e in memory_embs),
    )
    return merged, bundle
