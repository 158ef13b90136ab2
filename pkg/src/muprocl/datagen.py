"""Synthetic multimodal "polysemy world" generator and feature-file ingestion.

Each class owns one or more unit-norm latent mode centroids; inputs are a
fixed orthonormal lift of (centroid + latent noise) plus input noise. Class
names and per-class mode names give the prompt pipeline something to
disambiguate, and the mode-aware embedder maps those prompts back onto the
same centroids, so multi-prototype targets can align with the data modes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .embedding import read_embedding_records
from .errors import ConfigError, InputError, ParseError

_SPLIT_TAGS = {"train": 0, "test": 1}


@dataclass(frozen=True)
class WorldSpec:
    num_classes: int
    modes_per_class: int = 2
    dim: int = 8
    n_in: int = 16
    latent_noise: float = 0.05
    input_noise: float = 0.02
    train_per_mode: int = 40
    test_per_mode: int = 20
    mode_cosine_cap: float = 0.9
    max_retries: int = 200

    def __post_init__(self):
        if min(self.num_classes, self.modes_per_class, self.dim, self.n_in,
               self.train_per_mode, self.test_per_mode) < 1:
            raise InputError("world dims and counts must be positive")
        if self.n_in < self.dim:
            raise InputError("n_in must be >= dim for an orthonormal input map")
        if not (0.0 < self.mode_cosine_cap <= 0.9):
            raise InputError("mode_cosine_cap must lie in (0, 0.9]")
        if self.latent_noise < 0 or self.input_noise < 0:
            raise InputError("noise scales must be nonnegative")


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    label: int
    mode_id: int = -1   # ground-truth mode, hidden from training


@dataclass(frozen=True)
class SyntheticWorld:
    spec: WorldSpec
    centroids: tuple        # centroids[c]: (M_c, dim) unit rows
    input_map: np.ndarray   # (n_in, dim), orthonormal columns
    class_names: tuple
    mode_names: tuple       # mode_names[c]: tuple of per-mode names

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes


def _draw_separated_unit_rows(rng, n_rows, dim, cosine_cap, max_retries):
    rows = []
    for _ in range(n_rows):
        for attempt in range(max_retries + 1):
            v = rng.standard_normal(dim)
            v = v / np.linalg.norm(v)
            if all(float(v @ u) <= cosine_cap for u in rows):
                rows.append(v)
                break
        else:
            raise ConfigError(
                f"could not place {n_rows} modes in dim {dim} with pairwise "
                f"cosine <= {cosine_cap} within {max_retries} retries")
    return np.array(rows)


def make_world(spec: WorldSpec, seed: int) -> SyntheticWorld:
    """Deterministic world from (spec, seed); within-class mode centroids repelled."""
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(11,)))
    centroids = tuple(
        _draw_separated_unit_rows(rng, spec.modes_per_class, spec.dim,
                                  spec.mode_cosine_cap, spec.max_retries)
        for _ in range(spec.num_classes)
    )
    gauss = rng.standard_normal((spec.n_in, spec.dim))
    q, _ = np.linalg.qr(gauss)
    class_names = tuple(f"class{c}" for c in range(spec.num_classes))
    mode_names = tuple(tuple(f"mode{k}" for k in range(spec.modes_per_class))
                       for _ in range(spec.num_classes))
    return SyntheticWorld(spec=spec, centroids=centroids, input_map=q,
                          class_names=class_names, mode_names=mode_names)


def sample_dataset(world: SyntheticWorld, split: str, seed: int) -> list[Sample]:
    """Balanced samples: x = input_map @ (centroid + latent noise) + input noise.

    Train and test draw from disjoint streams derived from the split name.
    """
    if split not in _SPLIT_TAGS:
        raise InputError(f"split must be 'train' or 'test', got {split!r}")
    spec = world.spec
    n = spec.train_per_mode if split == "train" else spec.test_per_mode
    rng = np.random.default_rng(
        np.random.SeedSequence(seed, spawn_key=(12, _SPLIT_TAGS[split])))
    out = []
    for c in range(spec.num_classes):
        for k in range(spec.modes_per_class):
            latents = world.centroids[c][k] + spec.latent_noise * rng.standard_normal((n, spec.dim))
            xs = latents @ world.input_map.T + spec.input_noise * rng.standard_normal((n, spec.n_in))
            for i in range(n):
                out.append(Sample(x=xs[i], label=c, mode_id=k))
    return out


def world_lexicon(world: SyntheticWorld) -> dict:
    """Per-class sense list for the stub agent: every ground-truth mode, all visual."""
    return {name: [(m, True) for m in world.mode_names[c]]
            for c, name in enumerate(world.class_names)}


def load_feature_dataset(features_path, split_path) -> tuple[list[Sample], list[Sample], int]:
    """Precomputed feature ingestion: embedding-format file + split index file.

    Every feature row must be assigned exactly once in the split file, and the
    split file may not mention unknown rows. Returns (train, test, dim).
    """
    dim, records = read_embedding_records(features_path)
    by_key = {}
    for key, class_id, vec in records:
        if class_id < 0:
            raise InputError(f"feature row {key!r} needs a nonnegative class_id")
        by_key[key] = (class_id, vec)
    assignment = {}
    with open(split_path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(split_path, ln, "expected <row-key>\\t<train|test>")
            key, split = parts
            if split not in _SPLIT_TAGS:
                raise ParseError(split_path, ln, f"unknown split {split!r}")
            if key not in by_key:
                raise ParseError(split_path, ln, f"unknown row key {key!r}")
            if key in assignment:
                raise ParseError(split_path, ln, f"duplicate assignment for {key!r}")
            assignment[key] = split
    missing = [k for k in by_key if k not in assignment]
    if missing:
        raise InputError(
            f"{len(missing)} feature rows lack a split assignment (first: {missing[0]!r})")
    train, test = [], []
    for key, (class_id, vec) in by_key.items():
        sample = Sample(x=vec, label=class_id)
        (train if assignment[key] == "train" else test).append(sample)
    return train, test, dim
