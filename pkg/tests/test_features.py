"""Feature-encoder tests: z-score, one-hot, projection assembly, ingestion."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evibot import features as ft
from evibot.errors import ContractError, ValidationError


class TestZscore:
    def test_closed_form(self):
        out = ft.zscore_normalize([1.0, 2.0, 3.0])
        np.testing.assert_allclose(out, [-1.22474, 0.0, 1.22474], atol=1e-5)

    def test_constant_column_guard(self):
        np.testing.assert_allclose(ft.zscore_normalize([5.0, 5.0, 5.0]), 0.0, atol=0)

    def test_moments(self):
        rng = np.random.default_rng(41)
        out = ft.zscore_normalize(rng.normal(3.0, 7.0, size=500))
        assert abs(out.mean()) < 1e-9
        assert abs(out.std() - 1.0) < 1e-7  # eps guard shifts std slightly below 1

    def test_empty_rejected(self):
        with pytest.raises(ContractError):
            ft.zscore_normalize([])

    @given(
        st.lists(st.floats(-100, 100), min_size=3, max_size=30).filter(
            lambda xs: np.std(xs) > 0.5  # eps guard distorts near-constant columns
        ),
        st.floats(0.5, 10).flatmap(lambda a: st.sampled_from([a, -a])),
        st.floats(-50, 50),
    )
    @settings(max_examples=60, deadline=None)
    def test_affine_invariance_up_to_sign(self, xs, a, b):
        base = ft.zscore_normalize(xs)
        scaled = ft.zscore_normalize(a * np.asarray(xs) + b)
        np.testing.assert_allclose(scaled, np.sign(a) * base, atol=1e-7)


class TestBooleans:
    def test_single_flag(self):
        np.testing.assert_array_equal(ft.encode_booleans([1]), [0.0, 1.0])

    def test_two_flags(self):
        np.testing.assert_array_equal(ft.encode_booleans([0, 1]), [1.0, 0.0, 0.0, 1.0])

    def test_matrix_form(self):
        out = ft.encode_booleans(np.array([[0], [1]]))
        np.testing.assert_array_equal(out, [[1.0, 0.0], [0.0, 1.0]])

    def test_rejects_non_binary(self):
        with pytest.raises(ValidationError):
            ft.encode_booleans([0, 2])

    @given(st.lists(st.integers(0, 1), min_size=1, max_size=8))
    @settings(max_examples=40, deadline=None)
    def test_length_law(self, flags):
        out = ft.encode_booleans(flags)
        assert out.shape == (2 * len(flags),)
        assert out.sum() == len(flags)  # exactly one hot entry per flag


def raw_blocks(rng, n=4, dims=(3, 5, 2, 4)):
    names = ft.BLOCK_ORDER
    return {name: rng.normal(size=(n, d)) for name, d in zip(names, dims)}


class TestAssembly:
    def test_zero_inputs_zero_projections(self):
        raw = {name: np.zeros((3, 2)) for name in ft.BLOCK_ORDER}
        params = ft.ProjectionParams(
            weights={n: np.zeros((2, 2)) for n in ft.BLOCK_ORDER},
            biases={n: np.zeros(2) for n in ft.BLOCK_ORDER},
        )
        x, blocks = ft.assemble_features(raw, params, hidden=8)
        np.testing.assert_array_equal(x.data, np.zeros((3, 8)))
        assert blocks.assembled.shape == (3, 8)

    def test_identity_projections_reproduce_inputs(self):
        rng = np.random.default_rng(42)
        raw = {name: np.abs(rng.normal(size=(3, 2))) + 0.1 for name in ft.BLOCK_ORDER}
        params = ft.ProjectionParams(
            weights={n: np.eye(2) for n in ft.BLOCK_ORDER},
            biases={n: np.zeros(2) for n in ft.BLOCK_ORDER},
        )
        x, _ = ft.assemble_features(raw, params, hidden=8)
        expected = np.concatenate([raw[n] for n in ft.BLOCK_ORDER], axis=1)
        np.testing.assert_allclose(x.data, expected, atol=1e-12)

    def test_slices_match_standalone_projection(self):
        rng = np.random.default_rng(43)
        raw = raw_blocks(rng)
        dims = {n: raw[n].shape[1] for n in ft.BLOCK_ORDER}
        params = ft.init_projections(dims, hidden=16, seed=5)
        x, blocks = ft.assemble_features(raw, params, hidden=16)
        for k, name in enumerate(ft.BLOCK_ORDER):
            pre = raw[name] @ params.weights[name] + params.biases[name]
            standalone = np.where(pre > 0, pre, 0.01 * pre)
            np.testing.assert_allclose(x.data[:, 4 * k : 4 * (k + 1)], standalone, atol=1e-12)
            np.testing.assert_allclose(blocks.block(name), standalone, atol=1e-12)

    def test_per_user_locality(self):
        rng = np.random.default_rng(44)
        raw = raw_blocks(rng)
        params = ft.init_projections({n: raw[n].shape[1] for n in raw}, 16, seed=5)
        x1, _ = ft.assemble_features(raw, params, 16)
        raw2 = {n: arr.copy() for n, arr in raw.items()}
        raw2["num"][2] += 1.0
        x2, _ = ft.assemble_features(raw2, params, 16)
        changed = np.any(x1.data != x2.data, axis=1)
        np.testing.assert_array_equal(changed, [False, False, True, False])

    def test_block_order_matters(self):
        rng = np.random.default_rng(45)
        raw = raw_blocks(rng, dims=(3, 3, 3, 3))
        params = ft.init_projections({n: 3 for n in ft.BLOCK_ORDER}, 16, seed=5)
        swapped = dict(raw)
        swapped["des"], swapped["concat"] = raw["concat"], raw["des"]
        x1, _ = ft.assemble_features(raw, params, 16)
        x2, _ = ft.assemble_features(swapped, params, 16)
        assert np.any(x1.data != x2.data)

    def test_missing_block(self):
        rng = np.random.default_rng(46)
        raw = raw_blocks(rng)
        del raw["bl"]
        params = ft.init_projections({n: 3 for n in ft.BLOCK_ORDER}, 16, seed=5)
        with pytest.raises(ValidationError, match="bl"):
            ft.assemble_features(raw, params, 16)

    def test_non_finite_entry_names_node_and_block(self):
        rng = np.random.default_rng(47)
        raw = raw_blocks(rng)
        raw["concat"][1, 0] = np.nan
        params = ft.init_projections({n: raw[n].shape[1] for n in raw}, 16, seed=5)
        with pytest.raises(ValidationError, match="node 1.*concat"):
            ft.assemble_features(raw, params, 16)

    def test_projection_init_is_seeded(self):
        dims = {n: 3 for n in ft.BLOCK_ORDER}
        p1 = ft.init_projections(dims, 16, seed=9)
        p2 = ft.init_projections(dims, 16, seed=9)
        p3 = ft.init_projections(dims, 16, seed=10)
        for n in ft.BLOCK_ORDER:
            np.testing.assert_array_equal(p1.weights[n], p2.weights[n])
        assert any(np.any(p1.weights[n] != p3.weights[n]) for n in ft.BLOCK_ORDER)

    def test_hidden_not_divisible(self):
        with pytest.raises(ContractError):
            ft.init_projections({n: 2 for n in ft.BLOCK_ORDER}, hidden=10, seed=1)


class TestIngest:
    def test_loads_verbatim(self, tmp_path):
        path = tmp_path / "n.jsonl"
        recs = [
            {"id": 0, "desc_emb": [0.5, 0.25], "tweet_emb": [1.0, 2.0]},
            {"id": 1, "desc_emb": [1 / 3, 0.1], "tweet_emb": [0.0, -1.0]},
        ]
        path.write_text("".join(json.dumps(r) + "\n" for r in recs))
        des, tweet = ft.ingest_embeddings(path)
        np.testing.assert_array_equal(des, [[0.5, 0.25], [1 / 3, 0.1]])
        np.testing.assert_array_equal(tweet, [[1.0, 2.0], [0.0, -1.0]])

    def test_missing_tweet_emb_names_node(self, tmp_path):
        path = tmp_path / "n.jsonl"
        path.write_text(json.dumps({"id": 3, "desc_emb": [1.0]}) + "\n")
        with pytest.raises(ValidationError, match="3.*tweet_emb"):
            ft.ingest_embeddings(path)

    def test_ragged_dimension(self, tmp_path):
        path = tmp_path / "n.jsonl"
        recs = [
            {"id": 0, "desc_emb": [1.0], "tweet_emb": [1.0]},
            {"id": 1, "desc_emb": [1.0, 2.0], "tweet_emb": [1.0]},
        ]
        path.write_text("".join(json.dumps(r) + "\n" for r in recs))
        with pytest.raises(ValidationError):
            ft.ingest_embeddings(path)
