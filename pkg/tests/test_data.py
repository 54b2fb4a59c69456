import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from battag.data import (
    EC_JP_RATIO,
    EC_ZH_RATIO,
    PAD,
    SyntheticSpec,
    _pools,
    generate_dataset,
    iter_batches,
    pad_batch,
    split_dataset,
)
from battag.errors import GenerationError


def shares(data):
    c = data.class_counts()
    return c / c.sum()


class TestRatios:
    @pytest.mark.parametrize("ratios", [EC_ZH_RATIO, EC_JP_RATIO, (1, 1)])
    def test_realised_frequencies_within_five_percent(self, ratios):
        data = generate_dataset(SyntheticSpec(ratios=ratios, n_sequences=500, seed=4))
        want = np.array(ratios) / sum(ratios)
        assert np.all(np.abs(shares(data) / want - 1) < 0.05)

    def test_majority_share_for_long_sequences(self):
        spec = SyntheticSpec(n_sequences=2000, mean_length=46, max_length=128, seed=1)
        assert shares(generate_dataset(spec))[0] == pytest.approx(21.2 / 24.1, abs=0.05)

    def test_noise_relabels_as_majority_but_keeps_ratio(self):
        data = generate_dataset(SyntheticSpec(noise=0.2, n_sequences=600, seed=2))
        want = np.array(EC_ZH_RATIO) / sum(EC_ZH_RATIO)
        assert np.all(np.abs(shares(data) / want - 1) < 0.05)

    def test_impossible_request(self):
        with pytest.raises(GenerationError):
            generate_dataset(SyntheticSpec(ratios=(1000, 1, 1), n_sequences=1, mean_length=2))
        with pytest.raises(GenerationError):
            SyntheticSpec(ratios=(1,))
        with pytest.raises(GenerationError):
            SyntheticSpec(vocab_size=3)


class TestTokens:
    def test_disjoint_pools_make_labels_a_function_of_tokens(self):
        data = generate_dataset(SyntheticSpec(n_sequences=300, seed=5))
        tok = np.concatenate(data.tokens)
        lab = np.concatenate(data.labels)
        for t in np.unique(tok):
            assert len(np.unique(lab[tok == t])) == 1
        assert PAD not in tok

    def test_overlap_shares_ids_between_classes(self):
        spec = SyntheticSpec(overlap=0.5, vocab_size=81)
        _, pools = _pools(spec)
        common = set(pools[0]) & set(pools[1]) & set(pools[2])
        assert len(common) == 10 and len(pools[0]) == spec.pool_size

    def test_decoys_put_majority_labels_on_minority_ids(self):
        spec = SyntheticSpec(decoy=0.2, vocab_size=60, span_mean=1, n_sequences=800, seed=0)
        data = generate_dataset(spec)
        tok, lab = np.concatenate(data.tokens), np.concatenate(data.labels)
        _, pools = _pools(spec)
        counts = data.class_counts()
        for c in (1, 2):
            on_pool = np.isin(tok, pools[c])
            assert set(np.unique(lab[on_pool])) == {0, c}
            # share of own-class labels among the pool's ids
            q = (lab[on_pool] == c).mean()
            expect = 1 / (1 + 0.2 * counts[0] / counts[1:].sum())
            assert q == pytest.approx(expect, abs=0.01)

    def test_same_seed_same_bytes(self):
        spec = SyntheticSpec(noise=0.1, overlap=0.2, decoy=0.1, seed=8)
        assert generate_dataset(spec).to_jsonl() == generate_dataset(spec).to_jsonl()
        assert generate_dataset(spec).to_jsonl() != generate_dataset(SyntheticSpec(seed=9)).to_jsonl()


class TestSplitAndBatch:
    def test_split_is_a_partition(self):
        data = generate_dataset(SyntheticSpec(n_sequences=100, seed=3))
        tr, ev = split_dataset(data, 0.2, seed=0)
        assert len(tr) + len(ev) == 100
        assert abs(len(ev) - 20) <= 2
        seen = {t.tobytes() for t in tr.tokens}
        assert not any(t.tobytes() in seen for t in ev.tokens)

    def test_padding(self):
        tok, lab, mask = pad_batch([np.array([3, 4]), np.array([5])], [np.array([1, 0]), np.array([2])])
        np.testing.assert_array_equal(tok, [[3, 4], [5, PAD]])
        np.testing.assert_array_equal(mask, [[True, True], [True, False]])

    def test_batches_cover_every_sequence_once(self):
        data = generate_dataset(SyntheticSpec(n_sequences=21, seed=3))
        batches = list(iter_batches(data, 8, np.random.default_rng(0)))
        assert [b[0].shape[0] for b in batches] == [8, 8, 5]
        assert sum(int(b[2].sum()) for b in batches) == sum(len(t) for t in data.tokens)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.floats(0.5, 30), min_size=2, max_size=4),
    st.floats(0, 0.5),
    st.integers(0, 1000),
)
def test_generated_data_respects_its_contract(ratios, noise, seed):
    spec = SyntheticSpec(ratios=ratios, noise=noise, n_sequences=40, mean_length=10, max_length=30, seed=seed)
    try:
        data = generate_dataset(spec)
    except GenerationError:
        return
    assert all(1 <= len(t) <= 30 for t in data.tokens)
    assert all(len(t) == len(l) for t, l in zip(data.tokens, data.labels))
    tok = np.concatenate(data.tokens)
    assert tok.min() >= 1 and tok.max() < spec.vocab_size
    assert data.class_counts().min() >= 1
