import itertools

import numpy as np
import pytest

from srlmem import kernels
from srlmem.conll import PredicateInstance, Sentence, Token
from srlmem.retrieval import (
    LARGE_DISTANCE,
    NeighborIndex,
    build_index,
    pos_edit_distance,
    prepare_resources,
    relaxed_wmd,
    sentence_distance,
    sif_embed,
    unigram_probabilities,
)
from srlmem.vectors import WordVectors


def edit_distance_oracle(a, b):
    """Exhaustive recursion with memoization, independent of the DP kernel."""
    memo = {}

    def rec(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        key = (i, j)
        if key not in memo:
            sub = rec(i - 1, j - 1) + (0 if a[i - 1] == b[j - 1] else 1)
            memo[key] = min(rec(i - 1, j) + 1, rec(i, j - 1) + 1, sub)
        return memo[key]

    return rec(len(a), len(b))


def make_sentence(forms, tags, sid, pred=0):
    tokens = [
        Token(
            form=f,
            lemma=f,
            pos=t,
            is_predicate=(i == pred),
            pred_sense=f"{f}.01" if i == pred else None,
            roles=["A0" if i == 0 else "_"],
        )
        for i, (f, t) in enumerate(zip(forms, tags))
    ]
    return Sentence(id=sid, tokens=tokens)


def make_instance(forms, tags, sid, pred=0):
    s = make_sentence(forms, tags, sid, pred)
    return PredicateInstance(
        sentence=s, predicate_index=pred, gold_labels=[t.roles[0] for t in s.tokens]
    )


class TestPosEditDistance:
    def test_identical(self):
        assert pos_edit_distance(["DT", "NN"], ["DT", "NN"]) == 0

    def test_one_insert(self):
        assert pos_edit_distance(["DT", "NN"], ["DT", "JJ", "NN"]) == 1

    def test_substitution(self):
        assert pos_edit_distance(["DT", "NN"], ["DT", "JJ"]) == 1

    def test_empty(self):
        assert pos_edit_distance([], ["DT", "NN"]) == 2
        assert pos_edit_distance([], []) == 0

    @pytest.mark.parametrize("impl", [kernels.levenshtein, kernels.pure.levenshtein])
    def test_matches_recursive_oracle_short(self, impl):
        tags = [0, 1, 2]
        seqs = [
            np.array(s, dtype=np.intc)
            for length in range(4)
            for s in itertools.product(tags, repeat=length)
        ]
        for a in seqs:
            for b in seqs:
                assert impl(a, b) == edit_distance_oracle(list(a), list(b))

    def test_backends_agree(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a = rng.integers(0, 5, size=rng.integers(0, 12)).astype(np.intc)
            b = rng.integers(0, 5, size=rng.integers(0, 12)).astype(np.intc)
            assert kernels.levenshtein(a, b) == kernels.pure.levenshtein(a, b)
        many_c = kernels.levenshtein_many(a, [b, a, b])
        many_p = kernels.pure.levenshtein_many(a, [b, a, b])
        np.testing.assert_array_equal(many_c, many_p)

    def test_symmetry_nonneg_triangle(self):
        rng = np.random.default_rng(1)
        tags = ["A", "B", "C", "D"]
        seqs = [
            [tags[int(rng.integers(4))] for _ in range(int(rng.integers(0, 6)))]
            for _ in range(30)
        ]
        for x, y in itertools.combinations(seqs, 2):
            assert pos_edit_distance(x, y) == pos_edit_distance(y, x) >= 0
        for x, y, z in itertools.combinations(seqs[:12], 3):
            assert pos_edit_distance(x, z) <= (
                pos_edit_distance(x, y) + pos_edit_distance(y, z)
            )


def toy_vectors():
    words = ["cat", "dog", "bird", "fish", "tree"]
    mat = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.9, 0.1, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.5, 0.5, 0.5],
        ]
    )
    return WordVectors(words, mat)


def exact_wmd_equal_length(forms_a, forms_b, emb):
    """Minimum-cost assignment by full permutation enumeration; valid for
    equal-length uniform-weight sentences."""
    va = [emb.get(w) for w in forms_a]
    vb = [emb.get(w) for w in forms_b]
    n = len(va)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(np.linalg.norm(va[i] - vb[perm[i]]) for i in range(n)) / n
        best = min(best, cost)
    return best


class TestRelaxedWmd:
    def test_self_distance_zero(self):
        emb = toy_vectors()
        s = make_sentence(["cat", "dog"], ["NN", "NN"], "a")
        assert relaxed_wmd(s, s, emb) == 0.0

    def test_single_word_exact(self):
        emb = toy_vectors()
        a = make_sentence(["cat"], ["NN"], "a")
        b = make_sentence(["bird"], ["NN"], "b")
        expected = np.linalg.norm(emb.get("cat") - emb.get("bird"))
        assert abs(relaxed_wmd(a, b, emb) - expected) < 1e-12

    def test_oov_words_dropped(self):
        emb = toy_vectors()
        a = make_sentence(["cat", "zzz"], ["NN", "NN"], "a")
        b = make_sentence(["cat"], ["NN"], "b")
        assert relaxed_wmd(a, b, emb) == 0.0

    def test_all_oov_sentinel(self):
        emb = toy_vectors()
        a = make_sentence(["zzz"], ["NN"], "a")
        b = make_sentence(["cat"], ["NN"], "b")
        assert relaxed_wmd(a, b, emb) == LARGE_DISTANCE

    def test_lower_bound_of_exact(self):
        emb = toy_vectors()
        words = ["cat", "dog", "bird", "fish"]
        rng = np.random.default_rng(2)
        for _ in range(200):
            n = int(rng.integers(1, 5))
            fa = list(rng.choice(words, size=n, replace=False))
            fb = list(rng.choice(words, size=n, replace=False))
            a = make_sentence(fa, ["NN"] * n, "a")
            b = make_sentence(fb, ["NN"] * n, "b")
            relaxed = relaxed_wmd(a, b, emb)
            exact = exact_wmd_equal_length(fa, fb, emb)
            assert relaxed <= exact + 1e-12

    def test_symmetry(self):
        emb = toy_vectors()
        rng = np.random.default_rng(3)
        words = ["cat", "dog", "bird", "fish", "tree"]
        for _ in range(30):
            fa = list(rng.choice(words, size=int(rng.integers(1, 4))))
            fb = list(rng.choice(words, size=int(rng.integers(1, 4))))
            a = make_sentence(fa, ["NN"] * len(fa), "a")
            b = make_sentence(fb, ["NN"] * len(fb), "b")
            assert relaxed_wmd(a, b, emb) == relaxed_wmd(b, a, emb) >= 0


class TestSifEmbed:
    def test_orthogonal_to_first_direction(self):
        emb = toy_vectors()
        corpus = [
            make_sentence(["cat", "dog"], ["NN", "NN"], "a"),
            make_sentence(["bird", "fish"], ["NN", "NN"], "b"),
            make_sentence(["tree", "cat"], ["NN", "NN"], "c"),
        ]
        freq = unigram_probabilities(corpus)
        # reconstruct the pre-removal matrix to recover the direction
        raw = np.zeros((3, emb.dim))
        for i, s in enumerate(corpus):
            acc = np.zeros(emb.dim)
            for w in s.forms():
                acc += (1e-3 / (1e-3 + freq[w])) * emb.get(w)
            raw[i] = acc / len(s)
        _, _, vt = np.linalg.svd(raw, full_matrices=False)
        rows = sif_embed(corpus, emb, freq)
        np.testing.assert_allclose(rows @ vt[0], 0.0, atol=1e-6)

    def test_identical_sentences_distance_zero(self):
        emb = toy_vectors()
        corpus = [
            make_sentence(["cat", "dog"], ["NN", "NN"], "a"),
            make_sentence(["cat", "dog"], ["NN", "NN"], "b"),
            make_sentence(["fish"], ["NN"], "c"),
        ]
        rows = sif_embed(corpus, emb, unigram_probabilities(corpus))
        assert np.linalg.norm(rows[0] - rows[1]) < 1e-12

    def test_equal_freq_ordering_preserved(self):
        # single-word sentences with equal frequencies: the SIF weights are
        # a common scalar, so before common-component removal the distance
        # ordering matches the raw vector ordering exactly
        emb = toy_vectors()
        corpus = [
            make_sentence([w], ["NN"], f"s{i}")
            for i, w in enumerate(["cat", "dog", "bird", "fish"])
        ]
        freq = {w: 0.25 for w in ["cat", "dog", "bird", "fish"]}
        rows = sif_embed(corpus, emb, freq, remove_common=False)
        raw = np.stack([emb.get(w) for w in ["cat", "dog", "bird", "fish"]])

        def ordering(mat):
            pairs = list(itertools.combinations(range(4), 2))
            d = {p: np.linalg.norm(mat[p[0]] - mat[p[1]]) for p in pairs}
            return sorted(pairs, key=lambda p: d[p])

        assert ordering(rows) == ordering(raw)

    def test_no_vocab_sentence_warns_zero(self):
        emb = toy_vectors()
        corpus = [
            make_sentence(["cat"], ["NN"], "a"),
            make_sentence(["qqq"], ["NN"], "b"),
        ]
        with pytest.warns(UserWarning, match="no in-vocabulary"):
            rows = sif_embed(corpus, emb, unigram_probabilities(corpus))
        # the zero row stays orthogonal trivially; just check it is finite
        assert np.isfinite(rows).all()

    def test_bad_a_param(self):
        with pytest.raises(ValueError):
            sif_embed([], toy_vectors(), {}, a_param=0.0)


class TestSentenceDistance:
    def test_rd_reproducible_and_symmetric(self):
        a = make_instance(["cat"], ["NN"], "a")
        b = make_instance(["dog"], ["NN"], "b")
        res = prepare_resources("rd", [a.sentence, b.sentence], rd_seed=42)
        d1 = sentence_distance("rd", a, b, res)
        d2 = sentence_distance("rd", a, b, res)
        d3 = sentence_distance("rd", b, a, res)
        assert d1 == d2 == d3
        assert 0.0 <= d1 < 1.0
        res7 = prepare_resources("rd", [a.sentence, b.sentence], rd_seed=7)
        assert sentence_distance("rd", a, b, res7) != d1

    def test_ed_delegates(self):
        a = make_instance(["x", "y"], ["DT", "NN"], "a")
        b = make_instance(["p", "q", "r"], ["DT", "JJ", "NN"], "b")
        res = prepare_resources("ed", [a.sentence, b.sentence])
        assert sentence_distance("ed", a, b, res) == float(
            pos_edit_distance(a.sentence.pos_tags(), b.sentence.pos_tags())
        )

    def test_sd_delegates(self):
        emb = toy_vectors()
        a = make_instance(["cat", "dog"], ["NN", "NN"], "a")
        b = make_instance(["bird"], ["NN"], "b")
        res = prepare_resources("sd", [a.sentence, b.sentence], emb=emb)
        expected = np.linalg.norm(res.sif_rows["a"] - res.sif_rows["b"])
        assert sentence_distance("sd", a, b, res) == pytest.approx(expected)

    def test_method_resource_mismatch(self):
        a = make_instance(["cat"], ["NN"], "a")
        b = make_instance(["dog"], ["NN"], "b")
        res = prepare_resources("ed", [a.sentence, b.sentence])
        with pytest.raises(ValueError, match="prepared for"):
            sentence_distance("rd", a, b, res)

    def test_wmd_needs_vectors(self):
        with pytest.raises(ValueError, match="vectors"):
            prepare_resources("wmd", [])


def random_instances(rng, n, sid_prefix, tags=("NN", "VB", "DT", "JJ")):
    out = []
    for i in range(n):
        length = int(rng.integers(1, 7))
        seq = [tags[int(rng.integers(len(tags)))] for _ in range(length)]
        out.append(make_instance([f"w{j}" for j in range(length)], seq, f"{sid_prefix}{i}"))
    return out


class TestBuildIndex:
    def test_exact_duplicate_retrieved(self):
        train = [
            make_instance(["a", "b"], ["DT", "NN"], "t0"),
            make_instance(["c"], ["VB"], "t1"),
        ]
        query = [make_instance(["x", "y"], ["DT", "NN"], "q0")]
        res = prepare_resources("ed", [t.sentence for t in train])
        idx = build_index(train, query, "ed", 1, res)
        assert idx.entries["q0#0"] == [("t0#0", 0.0)]

    def test_self_exclusion(self):
        rng = np.random.default_rng(4)
        train = random_instances(rng, 10, "t")
        res = prepare_resources("ed", [t.sentence for t in train])
        idx = build_index(train, train, "ed", 3, res)
        for inst in train:
            retrieved = [tid for tid, _ in idx.entries[inst.id]]
            assert inst.id not in retrieved
            assert len(retrieved) == 3

    def test_matches_brute_force(self):
        rng = np.random.default_rng(5)
        train = random_instances(rng, 30, "t")
        queries = random_instances(rng, 50, "q")
        res = prepare_resources("ed", [t.sentence for t in train])
        m = 4
        idx = build_index(train, queries, "ed", m, res)
        for q in queries:
            dists = [
                (
                    float(pos_edit_distance(q.sentence.pos_tags(), t.sentence.pos_tags())),
                    pos,
                    t.id,
                )
                for pos, t in enumerate(train)
            ]
            dists.sort()
            expected = [(tid, d) for d, _, tid in dists[:m]]
            assert idx.entries[q.id] == expected

    def test_too_few_candidates(self):
        train = [make_instance(["a"], ["NN"], "t0")]
        res = prepare_resources("ed", [train[0].sentence])
        with pytest.raises(ValueError, match="candidates"):
            build_index(train, train, "ed", 1, res)

    def test_permutation_invariance_distinct_distances(self):
        # with all-distinct distances the retrieved ids cannot depend on
        # training corpus order
        seqs = [["A", "A"], ["A"], ["B", "B"], ["B", "B", "B"], ["C", "C", "C", "C"]]
        train = [
            make_instance([f"w{j}" for j in range(len(s))], s, f"t{i}")
            for i, s in enumerate(seqs)
        ]
        query = [make_instance(["q", "q"], ["A", "A"], "q0")]
        dists = {
            pos_edit_distance(["A", "A"], s) for s in seqs
        }
        assert len(dists) == len(seqs)  # all distinct, no ties possible
        res = prepare_resources("ed", [t.sentence for t in train])
        idx1 = build_index(train, query, "ed", 3, res)
        idx2 = build_index(train[::-1], query, "ed", 3, res)
        assert idx1.entries == idx2.entries

    def test_save_load_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        train = random_instances(rng, 8, "t")
        res = prepare_resources("ed", [t.sentence for t in train])
        idx = build_index(train, train, "ed", 2, res)
        path = tmp_path / "index.txt"
        idx.save(str(path))
        loaded = NeighborIndex.load(str(path))
        assert loaded.method == idx.method
        assert loaded.m == idx.m
        assert loaded.entries == idx.entries

    def test_same_sentence_distance_zero(self):
        # two instances over one sentence tie at distance 0 and can
        # retrieve each other (only the query's own instance is excluded)
        tokens = [
            Token("a", "a", "NN", True, "a.01", ["A0", "_"]),
            Token("b", "b", "VB", True, "b.01", ["_", "A1"]),
        ]
        s = Sentence(id="s0", tokens=tokens)
        from srlmem.conll import extract_instances

        insts = extract_instances(s)
        res = prepare_resources("ed", [s])
        idx = build_index(insts, insts, "ed", 1, res)
        assert idx.entries["s0#0"] == [("s0#1", 0.0)]
        assert idx.entries["s0#1"] == [("s0#0", 0.0)]
