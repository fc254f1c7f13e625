import numpy as np
import pytest

from srlmem.attention import (
    amn_forward,
    encode_for_attention,
    entry_label_embedding,
    merge,
    merge_output_dim,
    normalize_attention,
    raw_attention,
)
from srlmem.autodiff import (
    Tensor,
    cross_entropy,
    grad_check,
    init_lstm,
    matmul,
)


def softmax_np(x):
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def merge_oracle(strategy, raw_mats, label_mats):
    """Straight numpy transcription of the four merging formulas,
    independent of the Tensor implementation."""
    alphas = [softmax_np(r) for r in raw_mats]
    entries = [a @ L for a, L in zip(alphas, label_mats)]
    m = len(raw_mats)
    if strategy == "concat":
        return np.concatenate(entries, axis=1)
    if strategy == "average":
        return sum(entries) / m
    if strategy == "weighted":
        beta = softmax_np(np.array([r.mean() for r in raw_mats]))
        return sum(b * e for b, e in zip(beta, entries))
    if strategy == "flat":
        gamma = softmax_np(np.concatenate(raw_mats, axis=1))
        return gamma @ np.concatenate(label_mats, axis=0)
    raise ValueError(strategy)


class TestRawAttention:
    def test_gram_symmetry(self):
        rng = np.random.default_rng(0)
        enc = Tensor(rng.normal(size=(4, 3)))
        m = raw_attention(enc, enc).data
        np.testing.assert_allclose(m, m.T, atol=1e-12)

    def test_orthogonal_rows_zero_off_diagonal(self):
        s = Tensor(np.eye(3))
        a = Tensor(np.eye(3)[::-1].copy())
        m = raw_attention(s, a).data
        np.testing.assert_allclose(m, np.eye(3)[::-1], atol=1e-12)

    def test_hand_computed(self):
        s = Tensor([[1.0, 2.0], [3.0, 4.0]])
        a = Tensor([[1.0, 0.0], [0.5, 0.5]])
        m = raw_attention(s, a).data
        np.testing.assert_allclose(m, [[1.0, 1.5], [3.0, 3.5]], atol=1e-12)


class TestEntryLabelEmbedding:
    def test_one_hot_selects_embedding(self):
        table = Tensor(np.arange(12.0).reshape(4, 3))
        alpha = Tensor([[0.0, 0.0, 1.0]])
        out = entry_label_embedding(alpha, [0, 1, 2], table)
        np.testing.assert_allclose(out.data, table.data[2][None, :])

    def test_identical_labels_constant(self):
        rng = np.random.default_rng(1)
        table = Tensor(rng.normal(size=(4, 3)))
        alpha = Tensor(softmax_np(rng.normal(size=(5, 3))))
        out = entry_label_embedding(alpha, [2, 2, 2], table)
        for row in out.data:
            np.testing.assert_allclose(row, table.data[2], atol=1e-12)

    def test_uniform_over_two_is_midpoint(self):
        table = Tensor(np.array([[0.0, 0.0], [2.0, 4.0], [6.0, 8.0]]))
        alpha = Tensor([[0.5, 0.5]])
        out = entry_label_embedding(alpha, [1, 2], table)
        np.testing.assert_allclose(out.data, [[4.0, 6.0]], atol=1e-12)

    def test_width_mismatch(self):
        with pytest.raises(ValueError, match="label count"):
            entry_label_embedding(Tensor(np.ones((1, 3))), [0, 1], Tensor(np.ones((2, 2))))


def build_entries(rng, m, n_s, d_ae, n_roles=4):
    raw_mats, label_mats, a_entries, raw_np, label_np = [], [], [], [], []
    table = rng.normal(size=(n_roles, d_ae))
    for _ in range(m):
        n_j = int(rng.integers(1, 5))
        raw = rng.normal(size=(n_s, n_j))
        labels = rng.integers(0, n_roles, size=n_j)
        lmat = table[labels]
        raw_t = Tensor(raw)
        lmat_t = Tensor(lmat)
        raw_mats.append(raw_t)
        label_mats.append(lmat_t)
        a_entries.append(matmul(normalize_attention(raw_t), lmat_t))
        raw_np.append(raw)
        label_np.append(lmat)
    return raw_mats, label_mats, a_entries, raw_np, label_np


class TestMerge:
    def test_m1_degeneracy_all_strategies_equal(self):
        rng = np.random.default_rng(2)
        raw_mats, label_mats, a_entries, _, _ = build_entries(rng, 1, 3, 4)
        outs = {}
        for strategy in ("concat", "average", "weighted", "flat"):
            out, _ = merge(strategy, a_entries, raw_mats, label_mats)
            outs[strategy] = out.data
        for strategy in ("average", "weighted", "flat"):
            np.testing.assert_allclose(outs[strategy], outs["concat"], atol=1e-12)
        assert outs["concat"].shape == (3, 4)

    def test_identical_raw_makes_weighted_equal_average(self):
        rng = np.random.default_rng(3)
        n_s, n_j, d_ae, m = 3, 4, 5, 3
        raw = rng.normal(size=(n_s, n_j))
        raw_mats = [Tensor(raw.copy()) for _ in range(m)]
        label_mats = [Tensor(rng.normal(size=(n_j, d_ae))) for _ in range(m)]
        a_entries = [
            matmul(normalize_attention(r), L) for r, L in zip(raw_mats, label_mats)
        ]
        avg, _ = merge("average", a_entries, raw_mats, label_mats)
        wavg, extras = merge("weighted", a_entries, raw_mats, label_mats)
        np.testing.assert_allclose(wavg.data, avg.data, atol=1e-9)
        np.testing.assert_allclose(extras["beta"].data, 1.0 / m, atol=1e-12)

    def test_flat_differs_from_average_on_scale(self):
        # two entries whose raw rows differ in scale: flat's shared softmax
        # shifts mass toward the hotter entry, average does not
        raw_a = np.array([[5.0, 5.0]])
        raw_b = np.array([[0.0, 0.0]])
        label_a = np.array([[1.0, 0.0], [1.0, 0.0]])
        label_b = np.array([[0.0, 1.0], [0.0, 1.0]])
        raw_mats = [Tensor(raw_a), Tensor(raw_b)]
        label_mats = [Tensor(label_a), Tensor(label_b)]
        a_entries = [
            matmul(normalize_attention(r), L) for r, L in zip(raw_mats, label_mats)
        ]
        flat, _ = merge("flat", a_entries, raw_mats, label_mats)
        avg, _ = merge("average", a_entries, raw_mats, label_mats)
        oracle_flat = merge_oracle("flat", [raw_a, raw_b], [label_a, label_b])
        oracle_avg = merge_oracle("average", [raw_a, raw_b], [label_a, label_b])
        np.testing.assert_allclose(flat.data, oracle_flat, atol=1e-12)
        np.testing.assert_allclose(avg.data, oracle_avg, atol=1e-12)
        assert np.abs(flat.data - avg.data).max() > 0.1

    @pytest.mark.parametrize("strategy", ["concat", "average", "weighted", "flat"])
    def test_matches_direct_formula_oracle(self, strategy):
        rng = np.random.default_rng(4)
        for _ in range(20):
            m = int(rng.integers(1, 4))
            n_s = int(rng.integers(1, 4))
            raw_mats, label_mats, a_entries, raw_np, label_np = build_entries(
                rng, m, n_s, 3
            )
            out, _ = merge(strategy, a_entries, raw_mats, label_mats)
            np.testing.assert_allclose(
                out.data, merge_oracle(strategy, raw_np, label_np), atol=1e-10
            )

    def test_empty_memory_rejected(self):
        with pytest.raises(ValueError, match="non-empty"):
            merge("average", [], [], [])

    def test_average_permutation_invariant(self):
        rng = np.random.default_rng(5)
        raw_mats, label_mats, a_entries, _, _ = build_entries(rng, 3, 2, 4)
        out, _ = merge("average", a_entries, raw_mats, label_mats)
        perm = [2, 0, 1]
        out_p, _ = merge(
            "average",
            [a_entries[i] for i in perm],
            [raw_mats[i] for i in perm],
            [label_mats[i] for i in perm],
        )
        np.testing.assert_allclose(out.data, out_p.data, atol=1e-12)

    def test_concat_permutes_blockwise(self):
        rng = np.random.default_rng(6)
        raw_mats, label_mats, a_entries, _, _ = build_entries(rng, 3, 2, 4)
        d = 4
        out, _ = merge("concat", a_entries, raw_mats, label_mats)
        perm = [1, 2, 0]
        out_p, _ = merge(
            "concat",
            [a_entries[i] for i in perm],
            [raw_mats[i] for i in perm],
            [label_mats[i] for i in perm],
        )
        for new_pos, old_pos in enumerate(perm):
            np.testing.assert_allclose(
                out_p.data[:, new_pos * d : (new_pos + 1) * d],
                out.data[:, old_pos * d : (old_pos + 1) * d],
                atol=1e-12,
            )

    def test_weighted_permutation_equivariant(self):
        rng = np.random.default_rng(7)
        raw_mats, label_mats, a_entries, _, _ = build_entries(rng, 3, 2, 4)
        out, ex = merge("weighted", a_entries, raw_mats, label_mats)
        perm = [2, 0, 1]
        out_p, ex_p = merge(
            "weighted",
            [a_entries[i] for i in perm],
            [raw_mats[i] for i in perm],
            [label_mats[i] for i in perm],
        )
        np.testing.assert_allclose(out.data, out_p.data, atol=1e-12)
        np.testing.assert_allclose(ex_p["beta"].data[0], ex["beta"].data[0][perm], atol=1e-12)

    def test_flat_equals_weighted_on_degenerate_rows(self):
        # equal-length entries with per-row-constant raw matrices: the flat
        # softmax factorizes into (per-entry weight) x (uniform within
        # entry), matching weighted average with uniform within-entry
        # attention
        rng = np.random.default_rng(8)
        n_s, n_j, m, d_ae = 3, 4, 3, 5
        raw_mats, label_mats, a_entries = [], [], []
        for _ in range(m):
            consts = rng.normal(size=(n_s, 1))
            raw = np.repeat(consts, n_j, axis=1)
            lmat = rng.normal(size=(n_j, d_ae))
            rt, lt = Tensor(raw), Tensor(lmat)
            raw_mats.append(rt)
            label_mats.append(lt)
            a_entries.append(matmul(normalize_attention(rt), lt))
        flat, _ = merge("flat", a_entries, raw_mats, label_mats)
        # oracle: per-row weights softmax over the m row-constants
        consts = np.stack([r.data[:, 0] for r in raw_mats], axis=1)  # n_s x m
        w = softmax_np(consts)
        expected = np.zeros((n_s, d_ae))
        for j in range(m):
            uniform = np.full((n_s, n_j), 1.0 / n_j)
            expected += w[:, j : j + 1] * (uniform @ label_mats[j].data)
        np.testing.assert_allclose(flat.data, expected, atol=1e-10)


class TestMergeOutputDim:
    def test_dims(self):
        assert merge_output_dim("concat", 4, 128) == 512
        for s in ("average", "weighted", "flat"):
            assert merge_output_dim(s, 4, 128) == 128


class TestAmnForward:
    def _setup(self, rng, strategy, m=2, n_s=3, d_in=3, d_a=4, d_ae=3, n_roles=4):
        lstm_a = init_lstm(d_in, d_a // 2, 1, rng)
        table = Tensor(rng.normal(size=(n_roles, d_ae)), requires_grad=True)
        s_emb = Tensor(rng.normal(size=(n_s, d_in)), requires_grad=True)
        mem_embs = [
            Tensor(rng.normal(size=(int(rng.integers(1, 4)), d_in)), requires_grad=True)
            for _ in range(m)
        ]
        mem_labels = [
            [int(rng.integers(n_roles)) for _ in range(e.data.shape[0])]
            for e in mem_embs
        ]
        return lstm_a, table, s_emb, mem_embs, mem_labels

    def test_output_shapes(self):
        rng = np.random.default_rng(9)
        for strategy, d_out in (("average", 3), ("concat", 6)):
            lstm_a, table, s_emb, mem_embs, mem_labels = self._setup(rng, strategy)
            out, bundle = amn_forward(
                s_emb, mem_embs, mem_labels, lstm_a, table, strategy
            )
            assert out.shape == (3, d_out)
            assert bundle.merged.shape == (3, d_out)
            assert bundle.n_all == sum(e.data.shape[0] for e in mem_embs)

    def test_alpha_rows_are_probabilities(self):
        rng = np.random.default_rng(10)
        lstm_a, table, s_emb, mem_embs, mem_labels = self._setup(rng, "flat", m=3)
        _, bundle = amn_forward(s_emb, mem_embs, mem_labels, lstm_a, table, "flat")
        for alpha in bundle.alpha:
            np.testing.assert_allclose(alpha.sum(axis=1), 1.0, atol=1e-6)
            assert (alpha >= 0).all()
        np.testing.assert_allclose(bundle.gamma.sum(axis=1), 1.0, atol=1e-6)

    def test_shared_encoder_identical_sentences(self):
        rng = np.random.default_rng(11)
        lstm_a = init_lstm(3, 2, 1, rng)
        emb = Tensor(rng.normal(size=(4, 3)))
        e1 = encode_for_attention(lstm_a, emb)
        e2 = encode_for_attention(lstm_a, emb)
        np.testing.assert_array_equal(e1.data, e2.data)

    def test_encoding_width_is_d_a(self):
        rng = np.random.default_rng(12)
        d_a = 6
        lstm_a = init_lstm(3, d_a // 2, 2, rng)
        out = encode_for_attention(lstm_a, Tensor(rng.normal(size=(5, 3))))
        assert out.shape == (5, d_a)

    @pytest.mark.parametrize("strategy", ["concat", "average", "weighted", "flat"])
    def test_gradients_flow_through_full_path(self, strategy):
        rng = np.random.default_rng(13)
        lstm_a, table, s_emb, mem_embs, mem_labels = self._setup(rng, strategy)
        w = Tensor(rng.normal(size=(merge_output_dim(strategy, 2, 3), 2)), requires_grad=True)

        def f():
            out, _ = amn_forward(s_emb, mem_embs, mem_labels, lstm_a, table, strategy)
            return cross_entropy(matmul(out, w), [0, 1, 0])

        params = dict(lstm_a.named("lstm_a"))
        params.update({"table": table, "s_emb": s_emb, "w": w})
        for j, e in enumerate(mem_embs):
            params[f"mem{j}"] = e
        report = grad_check(f, params)
        assert report.passed, (strategy, report.worst_param, report.max_error)

    def test_entry_embeddings_in_convex_hull_bounds(self):
        rng = np.random.default_rng(14)
        lstm_a, table, s_emb, mem_embs, mem_labels = self._setup(rng, "average", m=3)
        _, bundle = amn_forward(s_emb, mem_embs, mem_labels, lstm_a, table, "average")
        for j, a_ij in enumerate(bundle.entry_embeddings):
            used = table.data[mem_labels[j]]
            lo, hi = used.min(axis=0), used.max(axis=0)
            assert (a_ij >= lo - 1e-9).all()
            assert (a_ij <= hi + 1e-9).all()
