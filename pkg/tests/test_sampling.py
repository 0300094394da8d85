import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dqpe.core.qpe import ReadoutGrid, spectral_distribution
from dqpe.core.sampling import SampleStream, frequencies, sample, spawn_seeds
from dqpe.errors import InputError


@pytest.fixture
def parent():
    return spectral_distribution(np.array([0.2137, 0.61]), np.array([0.7, 0.3]), ReadoutGrid(6))


def test_same_seed_same_counts(parent):
    first = sample(parent, 5000, seed=42)
    second = sample(parent, 5000, seed=42)
    assert_array_equal(first.counts, second.counts)
    assert first.counts.sum() == 5000


def test_different_seeds_differ(parent):
    assert not np.array_equal(sample(parent, 5000, seed=1).counts, sample(parent, 5000, seed=2).counts)


def test_stream_records_seed_and_draw(parent):
    stream = SampleStream(7)
    first = sample(parent, 1000, stream)
    second = sample(parent, 1000, stream)
    assert (first.seed, first.draw) == (7, 0)
    assert (second.seed, second.draw) == (7, 1)
    assert second.sidecar() == {"seed": 7, "shots": 1000, "generator": "PCG64", "draw": 1}
    assert not np.array_equal(first.counts, second.counts)


def test_stream_draw_replays_from_its_record(parent):
    stream = SampleStream(7)
    for _ in range(3):
        last = sample(parent, 1000, stream)
    replay = SampleStream(last.seed)
    replay.seek(last.draw)
    assert_array_equal(sample(parent, 1000, replay).counts, last.counts)


def test_unseeded_draw_records_its_entropy(parent):
    empirical = sample(parent, 500)
    assert isinstance(empirical.seed, int)
    assert_array_equal(sample(parent, 500, empirical.seed).counts, empirical.counts)
    assert isinstance(SampleStream().seed, int)


def test_frequencies_converge(parent):
    empirical = frequencies(sample(parent, 200_000, seed=3))
    assert np.max(np.abs(empirical.probabilities - parent.probabilities)) < 0.01


def test_one_hot_parent_always_hits():
    parent = spectral_distribution(np.array([0.25]), np.array([1.0]), ReadoutGrid(4))
    counts = sample(parent, 100, seed=0).counts
    assert counts[4] == 100


def test_invalid_shots(parent):
    with pytest.raises(InputError):
        sample(parent, 0, seed=0)
    with pytest.raises(InputError):
        sample(parent, 2.5, seed=0)


def test_rows_and_sidecar(parent):
    empirical = sample(parent, 10, seed=5)
    rows = list(empirical.rows())
    assert len(rows) == 64
    assert sum(row["count"] for row in rows) == 10
    assert_allclose(sum(row["frequency"] for row in rows), 1.0)
    assert empirical.sidecar() == {"seed": 5, "shots": 10, "generator": "PCG64"}


def test_spawned_seeds_are_distinct_and_reproducible():
    seeds = spawn_seeds(99, 8)
    assert len(set(seeds)) == 8
    assert seeds == spawn_seeds(99, 8)
    assert spawn_seeds(99, 3) == seeds[:3]
