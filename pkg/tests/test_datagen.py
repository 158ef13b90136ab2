"""Synthetic world tests: determinism, geometry invariants, closed-form
latent recovery, and feature-file ingestion."""

import numpy as np
import pytest

from muprocl.datagen import (
    Sample,
    WorldSpec,
    load_feature_dataset,
    make_world,
    sample_dataset,
    world_lexicon,
)
from muprocl.embedding import write_embedding_file
from muprocl.errors import ConfigError, InputError, ParseError


def small_spec(**kw):
    base = dict(num_classes=3, modes_per_class=2, dim=6, n_in=10,
                train_per_mode=5, test_per_mode=4, mode_cosine_cap=0.5)
    base.update(kw)
    return WorldSpec(**base)


# ----------------------------------------------------------------- spec rules


def test_world_spec_validation():
    with pytest.raises(InputError):
        small_spec(num_classes=0)
    with pytest.raises(InputError):
        small_spec(n_in=4)  # below dim
    with pytest.raises(InputError):
        small_spec(mode_cosine_cap=0.95)
    with pytest.raises(InputError):
        small_spec(mode_cosine_cap=0.0)
    with pytest.raises(InputError):
        small_spec(latent_noise=-0.1)


# -------------------------------------------------------------------- geometry


def test_make_world_is_deterministic():
    a = make_world(small_spec(), seed=7)
    b = make_world(small_spec(), seed=7)
    for ca, cb in zip(a.centroids, b.centroids):
        np.testing.assert_array_equal(ca, cb)
    np.testing.assert_array_equal(a.input_map, b.input_map)
    c = make_world(small_spec(), seed=8)
    assert not np.allclose(a.input_map, c.input_map)


def test_centroids_are_unit_and_separated():
    cap = 0.3
    world = make_world(small_spec(mode_cosine_cap=cap), seed=0)
    for cent in world.centroids:
        np.testing.assert_allclose(np.linalg.norm(cent, axis=1), 1.0, atol=1e-12)
        gram = cent @ cent.T
        off = gram[~np.eye(len(cent), dtype=bool)]
        assert np.all(off <= cap + 1e-12)


def test_input_map_is_orthonormal():
    world = make_world(small_spec(), seed=1)
    q = world.input_map
    assert q.shape == (10, 6)
    np.testing.assert_allclose(q.T @ q, np.eye(6), atol=1e-12)


def test_impossible_separation_raises_config_error():
    # five pairwise near-orthogonal directions cannot fit in a 2-d latent
    # space (any five unit vectors in the plane put two within 72 degrees)
    spec = WorldSpec(num_classes=1, modes_per_class=5, dim=2, n_in=4,
                     mode_cosine_cap=0.05, max_retries=50)
    with pytest.raises(ConfigError):
        make_world(spec, seed=0)


def test_names_are_positional():
    world = make_world(small_spec(), seed=2)
    assert world.class_names == ("class0", "class1", "class2")
    assert world.mode_names[0] == ("mode0", "mode1")
    lex = world_lexicon(world)
    assert lex["class1"] == [("mode0", True), ("mode1", True)]


# -------------------------------------------------------------------- sampling


def test_sample_dataset_counts_and_balance():
    world = make_world(small_spec(), seed=3)
    train = sample_dataset(world, "train", seed=3)
    test = sample_dataset(world, "test", seed=3)
    assert len(train) == 3 * 2 * 5 and len(test) == 3 * 2 * 4
    for c in range(3):
        for k in range(2):
            assert sum(1 for s in train if s.label == c and s.mode_id == k) == 5


def test_sample_dataset_deterministic_and_split_disjoint():
    world = make_world(small_spec(), seed=4)
    a = sample_dataset(world, "train", seed=4)
    b = sample_dataset(world, "train", seed=4)
    for sa, sb in zip(a, b):
        np.testing.assert_array_equal(sa.x, sb.x)
    t = sample_dataset(world, "test", seed=4)
    assert not np.allclose(a[0].x, t[0].x)  # separate draw streams
    with pytest.raises(InputError):
        sample_dataset(world, "validation", seed=4)


def test_latents_recoverable_through_transpose_map():
    # with zero input noise, x = Q latent exactly, so Q^T x returns the latent
    spec = small_spec(latent_noise=0.0, input_noise=0.0)
    world = make_world(spec, seed=5)
    for s in sample_dataset(world, "train", seed=5)[:10]:
        latent = world.input_map.T @ s.x
        np.testing.assert_allclose(latent, world.centroids[s.label][s.mode_id], atol=1e-10)


def test_latent_noise_scales_spread():
    quiet = make_world(small_spec(latent_noise=0.01, input_noise=0.0), seed=6)
    loud = make_world(small_spec(latent_noise=0.5, input_noise=0.0), seed=6)

    def spread(world):
        xs = np.array([s.x for s in sample_dataset(world, "train", seed=6)
                       if s.label == 0 and s.mode_id == 0])
        return float(np.mean(np.linalg.norm(xs - xs.mean(axis=0), axis=1)))

    assert spread(loud) > 10 * spread(quiet)


# ----------------------------------------------------------- feature ingestion


def _write_feature_files(tmp_path, keys_splits, dim=3):
    rng = np.random.default_rng(0)
    records = [(key, cid, rng.normal(size=dim)) for key, cid, _ in keys_splits]
    fpath = tmp_path / "features.tsv"
    write_embedding_file(fpath, dim, records)
    spath = tmp_path / "split.tsv"
    spath.write_text("".join(f"{key}\t{split}\n" for key, _, split in keys_splits))
    return fpath, spath


def test_load_feature_dataset_round_trip(tmp_path):
    rows = [("r0", 0, "train"), ("r1", 0, "test"), ("r2", 1, "train"), ("r3", 1, "train")]
    fpath, spath = _write_feature_files(tmp_path, rows)
    train, test, dim = load_feature_dataset(fpath, spath)
    assert dim == 3
    assert sorted(s.label for s in train) == [0, 1, 1]
    assert [s.label for s in test] == [0]
    assert all(isinstance(s, Sample) and s.mode_id == -1 for s in train + test)


def test_load_feature_dataset_requires_nonnegative_class(tmp_path):
    fpath, spath = _write_feature_files(tmp_path, [("r0", -1, "train")])
    with pytest.raises(InputError):
        load_feature_dataset(fpath, spath)


def test_split_file_errors_carry_line_numbers(tmp_path):
    fpath, spath = _write_feature_files(tmp_path, [("r0", 0, "train"), ("r1", 1, "test")])

    spath.write_text("r0\ttrain\nr0\ttest\n")
    with pytest.raises(ParseError) as err:
        load_feature_dataset(fpath, spath)
    assert err.value.line_no == 2  # duplicate assignment

    spath.write_text("r0\ttrain\nr9\ttest\n")
    with pytest.raises(ParseError) as err:
        load_feature_dataset(fpath, spath)
    assert err.value.line_no == 2  # unknown key

    spath.write_text("r0\tvalidation\n")
    with pytest.raises(ParseError) as err:
        load_feature_dataset(fpath, spath)
    assert err.value.line_no == 1  # unknown split token

    spath.write_text("r0 train\n")
    with pytest.raises(ParseError):
        load_feature_dataset(fpath, spath)  # tab-separated, not spaces


def test_missing_assignment_is_rejected(tmp_path):
    fpath, spath = _write_feature_files(tmp_path, [("r0", 0, "train"), ("r1", 1, "test")])
    spath.write_text("r0\ttrain\n")
    with pytest.raises(InputError):
        load_feature_dataset(fpath, spath)
