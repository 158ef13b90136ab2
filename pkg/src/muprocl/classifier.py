"""Frozen prototype banks, trainable linear heads, LogSumExp class scoring,
and cross-entropy with closed-form gradients.

One scoring kernel serves every method: scores come from sims = Z @ rows.T
followed by a per-class LogSumExp over each class's row slice. A class with a
single row reduces to the plain inner product exactly (max-shifted LSE of one
element is that element), so single-target and multi-target training coincide
bit for bit when every K_c == 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InputError, ParseError
from .numerics import as_matrix, as_vector, log_sum_exp_rows, softmax_rows

# loaded banks carry float32 quantization, so the unit-row check is looser
# than the 1e-9 the build path achieves
_ROW_NORM_TOL = 1e-6


@dataclass
class PrototypeBank:
    """Stacked per-class prototype rows. Class c owns rows[offsets[c]:offsets[c+1]]."""

    rows: np.ndarray        # (R, d), unit rows
    offsets: np.ndarray     # (C+1,) int, ascending, offsets[0] == 0, offsets[-1] == R
    class_ids: np.ndarray   # (C,) int, score order
    frozen: bool = True
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.rows = as_matrix(self.rows)
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        if self.offsets.ndim != 1 or self.offsets[0] != 0 or self.offsets[-1] != len(self.rows):
            raise InputError("offsets must run from 0 to the row count")
        if np.any(np.diff(self.offsets) < 1):
            raise InputError("every class needs at least one prototype row")
        if len(self.class_ids) != len(self.offsets) - 1:
            raise InputError("one class_id per offset segment required")
        if len(set(self.class_ids.tolist())) != len(self.class_ids):
            raise InputError("duplicate class_id in bank")
        norms = np.linalg.norm(self.rows, axis=1)
        if np.any(np.abs(norms - 1.0) > _ROW_NORM_TOL):
            raise InputError("bank rows must be unit norm")
        self.rows.setflags(write=False)
        self._index = {int(c): i for i, c in enumerate(self.class_ids)}

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    def k_of(self, class_pos: int) -> int:
        return int(self.offsets[class_pos + 1] - self.offsets[class_pos])

    def class_index(self, class_id: int) -> int:
        try:
            return self._index[int(class_id)]
        except KeyError:
            raise InputError(f"class_id {class_id} not in bank") from None

    def class_rows(self, class_pos: int) -> np.ndarray:
        return self.rows[self.offsets[class_pos]:self.offsets[class_pos + 1]]


@dataclass
class TrainableHead:
    """Linear head W (one row per class) with momentum buffers; never frozen."""

    weights: np.ndarray    # (C, d)
    velocity: np.ndarray   # (C, d)
    class_ids: np.ndarray  # (C,)
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = as_matrix(self.weights)
        self.velocity = as_matrix(self.velocity)
        self.class_ids = np.asarray(self.class_ids, dtype=np.int64)
        if self.velocity.shape != self.weights.shape:
            raise InputError("velocity must shape-match weights")
        if len(self.class_ids) != len(self.weights):
            raise InputError("one class_id per head row required")
        self._index = {int(c): i for i, c in enumerate(self.class_ids)}

    frozen = False

    @property
    def rows(self) -> np.ndarray:
        return self.weights

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(len(self.weights) + 1, dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_ids)

    def class_index(self, class_id: int) -> int:
        try:
            return self._index[int(class_id)]
        except KeyError:
            raise InputError(f"class_id {class_id} not in head") from None


def init_head(class_ids, dim: int, rng: np.random.Generator) -> TrainableHead:
    """Fresh head with standard-normal rows and zero momentum."""
    ids = np.asarray(list(class_ids), dtype=np.int64)
    w = rng.standard_normal((len(ids), dim))
    return TrainableHead(weights=w, velocity=np.zeros_like(w), class_ids=ids)


def extend_head(head: TrainableHead, new_class_ids, rng: np.random.Generator) -> TrainableHead:
    """Widen with fresh standard-normal rows; existing rows and buffers are kept."""
    new_ids = np.asarray(list(new_class_ids), dtype=np.int64)
    if any(int(c) in head._index for c in new_ids):
        raise InputError("cannot extend head with an already-present class")
    fresh = rng.standard_normal((len(new_ids), head.dim))
    return TrainableHead(
        weights=np.vstack([head.weights, fresh]),
        velocity=np.vstack([head.velocity, np.zeros_like(fresh)]),
        class_ids=np.concatenate([head.class_ids, new_ids]),
    )


def head_sgd_step(head: TrainableHead, grad_w: np.ndarray, lr: float, momentum: float) -> None:
    """In-place momentum SGD: v <- momentum*v + g; W <- W - lr*v."""
    grad_w = as_matrix(grad_w)
    if grad_w.shape != head.weights.shape:
        raise InputError("grad shape must match head weights")
    head.velocity *= momentum
    head.velocity += grad_w
    head.weights -= lr * head.velocity


def build_bank(prompt_sets, embedder) -> PrototypeBank:
    """Embed every selected prompt in order; rows frozen after build."""
    rows, offsets, class_ids = [], [0], []
    for ps in prompt_sets:
        for cand in ps.prompts:
            rows.append(embedder.embed(cand.text, class_id=ps.class_id).vector)
        offsets.append(len(rows))
        class_ids.append(ps.class_id)
    if not rows:
        raise InputError("cannot build a bank from zero prompt sets")
    return PrototypeBank(rows=np.array(rows), offsets=np.array(offsets),
                         class_ids=np.array(class_ids), frozen=True)


def extend_bank(bank: PrototypeBank, prompt_sets, embedder) -> PrototypeBank:
    """New bank with the new classes' rows appended; existing rows are reused as-is."""
    tail = build_bank(prompt_sets, embedder)
    if any(int(c) in bank._index for c in tail.class_ids):
        raise InputError("cannot extend bank with an already-present class")
    return PrototypeBank(
        rows=np.vstack([bank.rows, tail.rows]),
        offsets=np.concatenate([bank.offsets, tail.offsets[1:] + bank.offsets[-1]]),
        class_ids=np.concatenate([bank.class_ids, tail.class_ids]),
        frozen=True,
    )


# ---------------------------------------------------------------------------
# Scoring: shared kernel. `model` is a PrototypeBank or TrainableHead.
# ---------------------------------------------------------------------------


def _sims(model, Z: np.ndarray, scale: float) -> np.ndarray:
    if Z.shape[1] != model.dim:
        raise InputError(f"feature dim {Z.shape[1]} != model dim {model.dim}")
    sims = Z @ model.rows.T
    if scale != 1.0:
        sims = sims * scale
    return sims


def _segment_lse(sims: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    n, n_classes = sims.shape[0], len(offsets) - 1
    out = np.empty((n, n_classes))
    for c in range(n_classes):
        out[:, c] = log_sum_exp_rows(sims[:, offsets[c]:offsets[c + 1]])
    return out


def _segment_softmax(sims: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    out = np.empty_like(sims)
    for c in range(len(offsets) - 1):
        seg = slice(offsets[c], offsets[c + 1])
        out[:, seg] = softmax_rows(sims[:, seg])
    return out


def score_batch(model, Z, scale: float = 1.0) -> np.ndarray:
    """(n, C) scores: per-class LSE of prototype similarities."""
    Z = as_matrix(Z)
    return _segment_lse(_sims(model, Z, scale), model.offsets)


def score_multi(bank, z, scale: float = 1.0) -> np.ndarray:
    """Per-class LSE score vector for one feature."""
    return score_batch(bank, as_vector(z)[None, :], scale)[0]


def score_single(model, z, scale: float = 1.0) -> np.ndarray:
    """Per-class inner-product scores; requires one row per class."""
    if len(model.rows) != model.n_classes:
        raise InputError("score_single requires exactly one row per class")
    return score_batch(model, as_vector(z)[None, :], scale)[0]


def predict_batch(model, Z, scale: float = 1.0) -> np.ndarray:
    """Predicted class_ids (argmax over scores; ties go to the earlier class)."""
    scores = score_batch(model, Z, scale)
    return model.class_ids[np.argmax(scores, axis=1)]


# ---------------------------------------------------------------------------
# Cross-entropy and gradients. Losses are per-sample -log softmax(scores)[y];
# grad_Z is per-sample dL_i/dz_i, grad_W is the gradient of the batch MEAN loss.
# ---------------------------------------------------------------------------


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise InputError("labels must be a 1-D index array")
    if np.any((labels < 0) | (labels >= n_classes)):
        raise InputError("label index out of range")
    return labels


def batch_ce_loss_grad_z(model, Z, labels, scale: float = 1.0):
    """(losses (n,), grad_Z (n,d)) for frozen-target training and eval."""
    Z = as_matrix(Z)
    labels = _check_labels(labels, model.n_classes)
    sims = _sims(model, Z, scale)
    offsets = model.offsets
    scores = _segment_lse(sims, offsets)
    n = len(Z)
    losses = log_sum_exp_rows(scores) - scores[np.arange(n), labels]
    probs = softmax_rows(scores)
    signed = probs.copy()
    signed[np.arange(n), labels] -= 1.0
    # per-row coefficient: (p_c - y_c) * alpha_{c,k}; grad flows through rows only
    alpha = _segment_softmax(sims, offsets)
    coeffs = np.repeat(signed, np.diff(offsets), axis=1) * alpha
    grad_Z = coeffs @ model.rows
    if scale != 1.0:
        grad_Z = grad_Z * scale
    return losses, grad_Z


def batch_ce_loss_grads(head: TrainableHead, Z, labels, scale: float = 1.0):
    """(losses (n,), grad_Z (n,d), grad_W (C,d)) for trainable-head training.

    grad_W is averaged over the batch; frozen models are rejected.
    """
    if head.frozen:
        raise ContractViolation("frozen banks reject weight-gradient requests")
    Z = as_matrix(Z)
    labels = _check_labels(labels, head.n_classes)
    sims = _sims(head, Z, scale)
    scores = _segment_lse(sims, head.offsets)
    n = len(Z)
    losses = log_sum_exp_rows(scores) - scores[np.arange(n), labels]
    probs = softmax_rows(scores)
    signed = probs.copy()
    signed[np.arange(n), labels] -= 1.0
    alpha = _segment_softmax(sims, head.offsets)
    coeffs = np.repeat(signed, np.diff(head.offsets), axis=1) * alpha
    grad_Z = coeffs @ head.rows
    grad_W = coeffs.T @ Z / n
    if scale != 1.0:
        grad_Z = grad_Z * scale
        grad_W = grad_W * scale
    return losses, grad_Z, grad_W


def ce_loss_and_grad_z(model, z, label: int, scale: float = 1.0):
    """(loss, grad_z) for a single sample; label indexes the score vector."""
    losses, grad_Z = batch_ce_loss_grad_z(model, as_vector(z)[None, :],
                                          np.array([label]), scale)
    return float(losses[0]), grad_Z[0]


def ce_loss_and_grad_w(head: TrainableHead, z, label: int, scale: float = 1.0):
    """(loss, grad_W) for a single sample through a trainable head."""
    losses, _, grad_W = batch_ce_loss_grads(head, as_vector(z)[None, :],
                                            np.array([label]), scale)
    return float(losses[0]), grad_W


# ---------------------------------------------------------------------------
# Persistence: text dump, one line per prototype row.
#   #dim=<d>
#   <class_id>\t<k>\t<f_1> <f_2> ... <f_d>     (float32 precision)
# ---------------------------------------------------------------------------


def save_bank(path, bank: PrototypeBank) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim={bank.dim}\n")
        for c in range(bank.n_classes):
            for k, row in enumerate(bank.class_rows(c)):
                vals = " ".join(f"{v:.9g}" for v in row.astype(np.float32))
                fh.write(f"{int(bank.class_ids[c])}\t{k}\t{vals}\n")


def load_bank(path) -> PrototypeBank:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].startswith("#dim="):
        raise ParseError(path, 1, "expected '#dim=<d>' header")
    try:
        dim = int(lines[0][len("#dim="):])
    except ValueError:
        raise ParseError(path, 1, "bad dimension header") from None
    if dim < 1:
        raise ParseError(path, 1, "dimension must be positive")
    rows, offsets, class_ids = [], [0], []
    prev_cid, prev_k = None, None
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(path, ln, "expected <class_id>\\t<k>\\t<floats>")
        try:
            cid, k = int(parts[0]), int(parts[1])
            vec = np.array([float(tok) for tok in parts[2].split()])
        except ValueError:
            raise ParseError(path, ln, "bad integer or float field") from None
        if len(vec) != dim:
            raise ParseError(path, ln, f"expected {dim} floats, got {len(vec)}")
        if not np.all(np.isfinite(vec)):
            raise ParseError(path, ln, "non-finite value")
        if cid != prev_cid:
            if cid in class_ids:
                raise ParseError(path, ln, f"class {cid} rows are not contiguous")
            if prev_cid is not None:
                offsets.append(len(rows))
            class_ids.append(cid)
            prev_k = -1
        if k != prev_k + 1:
            raise ParseError(path, ln, f"prototype index {k} out of order")
        rows.append(vec)
        prev_cid, prev_k = cid, k
    if not rows:
        raise ParseError(path, 2, "bank has no rows")
    offsets.append(len(rows))
    return PrototypeBank(rows=np.array(rows), offsets=np.array(offsets),
                         class_ids=np.array(class_ids), frozen=True)
