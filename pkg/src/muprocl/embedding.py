"""Text-embedding abstraction and the shared embedding file format.

Every `Embedding` in the system is L2-normalized at construction; inner
products on unit vectors equal cosine similarity, which is what the
dedup/selection thresholds assume.

Three embedder kinds:
  * stub  - deterministic counter-based hash expansion of the prompt text,
  * file  - exact-key lookup in a persisted embedding file,
  * world - test/experiment embedder aligned with a synthetic world's
            ground-truth mode centroids (see `datagen`).
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, MissingEmbeddingError, ParseError
from .numerics import Vector, as_vector, normalize

_FILE_HEADER = re.compile(r"^#dim=(\d+)$")


@dataclass(frozen=True)
class Embedding:
    """Unit-norm text embedding plus its provenance."""

    vector: Vector
    source_prompt: str
    class_id: int = -1

    def __post_init__(self):
        v = as_vector(self.vector)
        n = float(np.linalg.norm(v))
        if abs(n - 1.0) > 1e-9:
            raise InputError(f"embedding norm {n} deviates from 1 by more than 1e-9")
        object.__setattr__(self, "vector", v)


@dataclass(frozen=True)
class EmbedderSpec:
    """Which embedder to build: kind in {stub, file}, dim, optional path, seed."""

    kind: str
    dim: int
    path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("stub", "file"):
            raise InputError(f"unknown embedder kind: {self.kind!r}")
        if self.dim <= 0:
            raise InputError("embedder dim must be positive")
        if self.kind == "file" and not self.path:
            raise InputError("file embedder requires a path")


def hash_unit_vector(seed: int, text: str, dim: int) -> Vector:
    """Deterministic unit vector from (seed, text): counter-based SHA-256 expansion."""
    key = f"{seed}\x1f{text}".encode("utf-8")
    out = np.empty(dim, dtype=np.float64)
    i = 0
    counter = 0
    while i < dim:
        digest = hashlib.sha256(key + b"\x1f" + counter.to_bytes(8, "big")).digest()
        for off in range(0, 32, 8):
            if i >= dim:
                break
            u = int.from_bytes(digest[off : off + 8], "big")
            out[i] = (u / 2.0**64) * 2.0 - 1.0
            i += 1
        counter += 1
    return normalize(out)


class StubEmbedder:
    """Deterministic hash-based embedder; a pure function of (seed, prompt)."""

    def __init__(self, spec: EmbedderSpec):
        self.spec = spec
        self.dim = spec.dim

    def embed(self, prompt: str, class_id: int = -1) -> Embedding:
        if not prompt:
            raise InputError("prompt must be nonempty")
        vec = hash_unit_vector(self.spec.seed, prompt, self.dim)
        return Embedding(vec, prompt, class_id)


class FileEmbedder:
    """Exact-string prompt lookup over a loaded embedding file."""

    def __init__(self, spec: EmbedderSpec):
        self.spec = spec
        dim, records = read_embedding_records(spec.path)
        if dim != spec.dim:
            raise InputError(
                f"embedding file dim {dim} does not match requested dim {spec.dim}"
            )
        self.dim = dim
        self._table = {key: (cid, vec) for key, cid, vec in records}

    def embed(self, prompt: str, class_id: int = -1) -> Embedding:
        if not prompt:
            raise InputError("prompt must be nonempty")
        if prompt not in self._table:
            raise MissingEmbeddingError(prompt)
        file_cid, vec = self._table[prompt]
        cid = class_id if class_id >= 0 else file_cid
        return Embedding(normalize(vec), prompt, cid)


_QUALIFIED = re.compile(r"^(.*?)\s+\((.+)\)$")


class WorldEmbedder:
    """Embedder aligned with a synthetic world's mode centroids.

    Prompt shapes:
      * "name (mode)"  -> normalize(centroid + noise_scale * seeded unit noise)
      * "name" exactly -> normalize(mean of the class's mode centroids), no noise
      * any other prompt mentioning exactly one class name (e.g. a template
        around it) -> normalize(mean centroid + noise_scale * seeded unit noise)
    Anything else, or an unknown mode qualifier, is a missing-embedding error.
    """

    def __init__(self, spec: EmbedderSpec, world, noise_scale: float = 0.0):
        if noise_scale < 0:
            raise InputError("noise_scale must be >= 0")
        self.spec = spec
        self.world = world
        self.noise_scale = float(noise_scale)
        self.dim = world.dim
        self._class_index = {name: c for c, name in enumerate(world.class_names)}
        self._word_res = {
            name: re.compile(r"(?<![\w])" + re.escape(name) + r"(?![\w])")
            for name in world.class_names
        }

    def _noisy(self, base: Vector, prompt: str) -> Vector:
        if self.noise_scale == 0.0:
            return normalize(base)
        eps = hash_unit_vector(self.spec.seed, prompt, self.dim)
        return normalize(base + self.noise_scale * eps)

    def embed(self, prompt: str, class_id: int = -1) -> Embedding:
        if not prompt:
            raise InputError("prompt must be nonempty")
        world = self.world
        if prompt in self._class_index:
            c = self._class_index[prompt]
            mean = np.mean(world.centroids[c], axis=0)
            return Embedding(normalize(mean), prompt, class_id if class_id >= 0 else c)
        m = _QUALIFIED.match(prompt)
        if m and m.group(1) in self._class_index:
            c = self._class_index[m.group(1)]
            qualifier = m.group(2)
            if qualifier not in world.mode_names[c]:
                raise MissingEmbeddingError(prompt)
            k = world.mode_names[c].index(qualifier)
            vec = self._noisy(world.centroids[c][k], prompt)
            return Embedding(vec, prompt, class_id if class_id >= 0 else c)
        hits = [name for name, rx in self._word_res.items() if rx.search(prompt)]
        if len(hits) != 1:
            raise MissingEmbeddingError(prompt)
        c = self._class_index[hits[0]]
        mean = np.mean(world.centroids[c], axis=0)
        vec = self._noisy(mean, prompt)
        return Embedding(vec, prompt, class_id if class_id >= 0 else c)


def make_embedder(spec: EmbedderSpec, world=None, noise_scale: float = 0.0):
    """Build the embedder for a spec; pass a world to get the mode-aware stub."""
    if world is not None:
        return WorldEmbedder(spec, world, noise_scale)
    if spec.kind == "stub":
        return StubEmbedder(spec)
    return FileEmbedder(spec)


def embed(spec: EmbedderSpec, prompt: str) -> Embedding:
    """One-shot embedding of a prompt under a spec (pure in (spec, prompt))."""
    return make_embedder(spec).embed(prompt)


def mode_aware_stub_embed(spec: EmbedderSpec, prompt: str, world, noise_scale: float = 0.0) -> Embedding:
    """One-shot world-aligned embedding; see `WorldEmbedder` for prompt shapes."""
    return WorldEmbedder(spec, world, noise_scale).embed(prompt)


# ---------------------------------------------------------------------------
# Embedding file format (shared with the offline exporter):
#   line 1:   #dim=<d>
#   records:  <prompt-key>\t<class_id>\t<f_1> <f_2> ... <f_d>
# Keys are verbatim prompt text (tabs/newlines forbidden); floats are stored
# at 32-bit precision. Blank lines are ignored.
# ---------------------------------------------------------------------------


def read_embedding_records(path) -> tuple[int, list[tuple[str, int, Vector]]]:
    """Parse an embedding file into (dim, [(key, class_id, vector), ...])."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or _FILE_HEADER.match(lines[0].strip()) is None:
        raise ParseError(path, 1, "expected header '#dim=<d>'")
    dim = int(_FILE_HEADER.match(lines[0].strip()).group(1))
    if dim <= 0:
        raise ParseError(path, 1, "dim must be positive")
    records: list[tuple[str, int, Vector]] = []
    seen: set[str] = set()
    for line_no, raw in enumerate(lines[1:], start=2):
        if raw.strip() == "":
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
        key, cid_text, floats_text = parts
        if key == "":
            raise ParseError(path, line_no, "empty prompt key")
        if key in seen:
            raise ParseError(path, line_no, f"duplicate prompt key: {key!r}")
        try:
            cid = int(cid_text)
        except ValueError:
            raise ParseError(path, line_no, f"bad class_id: {cid_text!r}") from None
        pieces = floats_text.split()
        if len(pieces) != dim:
            raise ParseError(path, line_no, f"expected {dim} floats, got {len(pieces)}")
        try:
            vec = np.array([float(p) for p in pieces], dtype=np.float64)
        except ValueError:
            raise ParseError(path, line_no, "unparseable float") from None
        if not np.all(np.isfinite(vec)):
            raise ParseError(path, line_no, "non-finite value")
        seen.add(key)
        records.append((key, cid, vec))
    return dim, records


def load_embedding_file(path) -> dict[str, Vector]:
    """Return the file's prompt-key -> vector table (vectors as stored)."""
    _, records = read_embedding_records(path)
    return {key: vec for key, _, vec in records}


def write_embedding_file(path, dim: int, records) -> None:
    """Write records of (key, class_id, vector) at 32-bit float precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim={dim}\n")
        for key, cid, vec in records:
            if "\t" in key or "\n" in key:
                raise InputError(f"prompt key may not contain tabs/newlines: {key!r}")
            v = np.asarray(vec, dtype=np.float32)
            if v.shape != (dim,):
                raise InputError(f"vector for {key!r} has shape {v.shape}, expected ({dim},)")
            floats = " ".join(f"{x:.9g}" for x in v)
            fh.write(f"{key}\t{int(cid)}\t{floats}\n")
