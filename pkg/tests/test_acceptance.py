"""Acceptance gate: one test per top-level acceptance criterion.

Each test prints a summary line with the measured numbers; the pytest verdict
for the test is the pass/fail line for that criterion. Everything here runs
with the stub agent and stub/world embedders only (no network, no files
beyond pytest tmp dirs).
"""

import json
import math
import time

import numpy as np
import pytest

from muprocl.agent import (
    AgentSpec,
    PromptCandidate,
    SelectConfig,
    fps_select,
    select_one,
)
from muprocl.classifier import (
    PrototypeBank,
    batch_ce_loss_grad_z,
    batch_ce_loss_grads,
    init_head,
    score_batch,
)
from muprocl.cli import main as cli_main
from muprocl.continual import (
    AccuracyMatrix,
    MethodMode,
    TrainSettings,
    compute_metrics,
    read_summary_csv,
    run_experiment,
)
from muprocl.datagen import WorldSpec, make_world, sample_dataset, world_lexicon
from muprocl.embedding import (
    EmbedderSpec,
    WorldEmbedder,
    read_embedding_records,
    write_embedding_file,
)
from muprocl.encoder import backward_batch, forward_batch, init_params, load_checkpoint, save_checkpoint
from muprocl.numerics import cosine, normalize


def _world_bundle(seed, *, num_classes=4, modes=2, cap=0.05, noise=0.3,
                  n_train=20, n_test=50, prompt_noise=0.02):
    spec = WorldSpec(num_classes=num_classes, modes_per_class=modes, dim=8, n_in=16,
                     mode_cosine_cap=cap, latent_noise=noise,
                     train_per_mode=n_train, test_per_mode=n_test)
    world = make_world(spec, seed)
    train = sample_dataset(world, "train", seed)
    test = sample_dataset(world, "test", seed)
    embedder = WorldEmbedder(EmbedderSpec(kind="stub", dim=8, seed=seed),
                             world, prompt_noise)
    agent = AgentSpec(kind="stub", lexicon=world_lexicon(world))
    return world, train, test, embedder, agent


# the calibrated comparison regime: sharp scoring temperature plus a fast
# learning rate, where single-target supervision of two-mode classes is
# unstable while per-mode targets train cleanly
COMPARE = TrainSettings(epochs=120, batch_size=16, learning_rate=0.05,
                        decay_epochs=(60, 90), hidden_sizes=(32,),
                        feature_dim=8, scale=14.0)
# gentler regime used for the prototype-count sweep trend
SWEEP_SETTINGS = TrainSettings(epochs=120, batch_size=16, learning_rate=0.02,
                               decay_epochs=(60, 90), hidden_sizes=(32,),
                               feature_dim=8, scale=30.0)


def _run(mode, seed, settings, bundle=None, select_cfg=None, **kw):
    world, train, test, embedder, agent = bundle or _world_bundle(seed)
    return run_experiment(train, test, world.class_names, mode,
                          select_cfg or SelectConfig(), settings, 2, 2, seed,
                          embedder=embedder, agent=agent, **kw)


# ---------------------------------------------------------------- criterion 1


def test_criterion_1_reduction_equivalence():
    """muprocl with K_max=1 and ablations off coincides with lingocl bit for bit."""
    start = time.perf_counter()
    settings = TrainSettings(epochs=25, batch_size=16, learning_rate=0.05,
                             decay_epochs=(15, 20), hidden_sizes=(16,), feature_dim=8)
    reduced = MethodMode("muprocl", disambiguation=False, expansion=False, k_max=1)
    max_loss_diff = 0.0
    for seed in (0, 1, 2):
        bundle = _world_bundle(seed, cap=0.2, noise=0.1, n_train=8, n_test=6)
        lin = _run(MethodMode("lingocl"), seed, settings, bundle)
        red = _run(reduced, seed, settings, bundle)
        assert lin.matrix.per_task == red.matrix.per_task  # exact equality
        assert lin.matrix.overall == red.matrix.overall
        for a, b in zip(lin.epoch_losses, red.epoch_losses):
            diff = max((abs(x - y) for x, y in zip(a, b)), default=0.0)
            max_loss_diff = max(max_loss_diff, diff)
    elapsed = time.perf_counter() - start
    assert max_loss_diff <= 1e-12
    assert elapsed < 30.0
    print(f"criterion 1: matrices exactly equal on 3 seeds, "
          f"max per-epoch loss diff {max_loss_diff:.1e}, {elapsed:.1f}s")


# ---------------------------------------------------------------- criterion 2


def test_criterion_2_gradient_correctness():
    """100 random instances: analytic grads vs central differences, step 1e-5."""
    start = time.perf_counter()
    step = 1e-5
    worst = 0.0

    def rel_err(a, f):
        return abs(a - f) / max(abs(a), abs(f), 1e-6)

    rng = np.random.default_rng(20_250_101)
    for _ in range(100):
        d = int(rng.integers(2, 17))
        n_classes = int(rng.integers(2, 6))
        ks = [int(rng.integers(1, 5)) for _ in range(n_classes)]
        rows = np.array([v / np.linalg.norm(v)
                         for v in rng.normal(size=(sum(ks), d))])
        bank = PrototypeBank(rows=rows, offsets=np.concatenate([[0], np.cumsum(ks)]),
                             class_ids=np.arange(n_classes))
        head = init_head(range(n_classes), d, rng)
        n_in = int(rng.integers(2, 6))
        hidden = tuple(int(rng.integers(2, 7)) for _ in range(int(rng.integers(0, 3))))
        params = init_params((n_in, *hidden, d), rng)
        n = int(rng.integers(1, 4))
        X = rng.normal(size=(n, n_in))
        labels = rng.integers(n_classes, size=n)
        scale = float(rng.uniform(0.5, 3.0))

        # grad_z: per-sample loss as a function of the feature vector
        Z, cache = forward_batch(params, X)
        losses, grad_Z = batch_ce_loss_grad_z(bank, Z, labels, scale)
        for i in range(n):
            for j in range(d):
                orig = Z[i, j]
                Z[i, j] = orig + step
                hi = batch_ce_loss_grad_z(bank, Z, labels, scale)[0][i]
                Z[i, j] = orig - step
                lo = batch_ce_loss_grad_z(bank, Z, labels, scale)[0][i]
                Z[i, j] = orig
                worst = max(worst, rel_err(grad_Z[i, j], (hi - lo) / (2 * step)))

        # grad_W: mean loss as a function of the head weights
        _, _, grad_W = batch_ce_loss_grads(head, Z, labels, scale)
        W = head.weights
        for i in range(0, W.size, max(1, W.size // 8)):
            orig = W.ravel()[i]
            W.ravel()[i] = orig + step
            hi = float(np.mean(batch_ce_loss_grads(head, Z, labels, scale)[0]))
            W.ravel()[i] = orig - step
            lo = float(np.mean(batch_ce_loss_grads(head, Z, labels, scale)[0]))
            W.ravel()[i] = orig
            worst = max(worst, rel_err(grad_W.ravel()[i], (hi - lo) / (2 * step)))

        # encoder parameters: mean frozen-target loss through the network
        def objective():
            Zc, cache = forward_batch(params, X)
            value = float(np.mean(batch_ce_loss_grad_z(bank, Zc, labels, scale)[0]))
            pattern = tuple((a > 0).tobytes() for a in cache.inputs[1:])
            return value, pattern

        grads = backward_batch(params, cache, grad_Z)
        for l in range(len(params.weights)):
            for arr, darr in ((params.weights[l], grads.d_weights[l]),
                              (params.biases[l], grads.d_biases[l])):
                flat = arr.ravel()
                for i in range(0, flat.size, max(1, flat.size // 4)):
                    orig = flat[i]
                    flat[i] = orig + step
                    hi, pat_hi = objective()
                    flat[i] = orig - step
                    lo, pat_lo = objective()
                    flat[i] = orig
                    if pat_hi != pat_lo:
                        continue  # rectifier kink inside the FD interval
                    worst = max(worst, rel_err(darr.ravel()[i], (hi - lo) / (2 * step)))

    elapsed = time.perf_counter() - start
    assert worst < 1e-4
    assert elapsed < 10.0
    print(f"criterion 2: max relative gradient error {worst:.2e} "
          f"over 100 instances, {elapsed:.1f}s")


# ---------------------------------------------------------------- criterion 3


def test_criterion_3_lse_score_invariants():
    """Sandwich bound on 1000 draws; doubling every prototype adds exactly ln 2."""
    rng = np.random.default_rng(33)
    worst_shift = 0.0
    for _ in range(1000):
        d = int(rng.integers(2, 10))
        n_classes = int(rng.integers(1, 5))
        ks = [int(rng.integers(1, 5)) for _ in range(n_classes)]
        rows = np.array([v / np.linalg.norm(v)
                         for v in rng.normal(size=(sum(ks), d))])
        offsets = np.concatenate([[0], np.cumsum(ks)])
        bank = PrototypeBank(rows=rows, offsets=offsets, class_ids=np.arange(n_classes))
        z = rng.normal(size=d) * rng.uniform(0.1, 30)
        scores = score_batch(bank, z[None, :])[0]
        sims = z @ rows.T
        for c in range(n_classes):
            seg = sims[offsets[c]:offsets[c + 1]]
            assert seg.max() <= scores[c] + 1e-12
            assert scores[c] <= seg.max() + math.log(len(seg)) + 1e-12
        doubled = PrototypeBank(
            rows=np.vstack([rows[offsets[c]:offsets[c + 1]] for c in range(n_classes)
                            for _ in range(2)]),
            offsets=np.concatenate([[0], np.cumsum([2 * k for k in ks])]),
            class_ids=np.arange(n_classes))
        scores2 = score_batch(doubled, z[None, :])[0]
        worst_shift = max(worst_shift, float(np.max(np.abs(scores2 - scores - math.log(2.0)))))
        assert np.argmax(scores2) == np.argmax(scores)
    assert worst_shift <= 1e-10
    print(f"criterion 3: sandwich held on 1000 draws, "
          f"worst ln2-shift deviation {worst_shift:.1e}")


# ---------------------------------------------------------------- criterion 4


def test_criterion_4_selection_pipeline():
    """K_max cap, within-class cosine bound, and exact greedy agreement."""
    rng = np.random.default_rng(44)

    # (a) + (b): randomized full pipelines never exceed K_max=4 and keep
    # pairwise within-class cosines at or below the dedup threshold
    cfg = SelectConfig(k_max=4, dedup_threshold=0.95, coverage_gain_threshold=0.2)

    class _RandomEmbedder:
        spec = EmbedderSpec(kind="stub", dim=6)

        def __init__(self, rng):
            self.table = {}
            self.rng = rng

        def embed(self, text, class_id=-1):
            from muprocl.embedding import Embedding
            if text not in self.table:
                v = self.rng.normal(size=6)
                self.table[text] = v / np.linalg.norm(v)
            return Embedding(self.table[text], text, class_id)

    for trial in range(100):
        emb = _RandomEmbedder(rng)
        n = int(rng.integers(1, 9))
        cands = [PromptCandidate(f"t{trial}c0", 0, "bare")] + [
            PromptCandidate(f"t{trial}c{i}", 0, "expansion") for i in range(1, n)
        ]
        ps = select_one(cands, emb, cfg, class_id=0)
        assert ps.k <= 4
        vecs = [emb.embed(c.text).vector for c in ps.prompts]
        for i in range(len(vecs)):
            for j in range(i + 1, len(vecs)):
                assert cosine(vecs[i], vecs[j]) <= 0.95 + 1e-12

    # banks built by a real run obey the same bounds
    res = _run(MethodMode("muprocl"), 0, SWEEP_SETTINGS)
    for ps in res.prompt_sets:
        assert ps.k <= 4
    for c in range(res.model.n_classes):
        seg = res.model.class_rows(c)
        for i in range(len(seg)):
            for j in range(i + 1, len(seg)):
                assert cosine(seg[i], seg[j]) <= 0.95 + 1e-12

    # (c): fps_select equals an independent from-scratch greedy on 200 draws
    def naive(cands, vecs, cfg):
        bare = next((i for i, c in enumerate(cands) if c.kind == "bare"), 0)
        sel = [bare]
        while len(sel) < cfg.k_max:
            best, best_gain = None, -math.inf
            for i in range(len(cands)):
                if i in sel:
                    continue
                g = min(1.0 - cosine(vecs[i], vecs[j]) for j in sel)
                if g > best_gain:
                    best, best_gain = i, g
            if best is None or best_gain < cfg.coverage_gain_threshold:
                break
            sel.append(best)
        return sorted(sel)

    for _ in range(200):
        n = int(rng.integers(1, 9))
        vecs = [normalize(rng.normal(size=5)) for _ in range(n)]
        cands = [PromptCandidate("b", 0, "bare")] + [
            PromptCandidate(f"x{i}", 0, "expansion") for i in range(1, n)
        ]
        draw_cfg = SelectConfig(k_max=int(rng.integers(1, 6)),
                                coverage_gain_threshold=float(rng.uniform(0.05, 0.9)))
        got = fps_select(cands, vecs, draw_cfg)
        want = naive(cands, vecs, draw_cfg)
        assert [c.text for c in got.prompts] == [cands[i].text for i in want]

    print("criterion 4: cap, cosine bound, and 200/200 greedy matches held")


# ---------------------------------------------------------------- criterion 5


def test_criterion_5_polysemy_directional_result():
    """Multi-prototype beats the single bare target on the two-mode world."""
    start = time.perf_counter()
    seeds = range(5)

    def paired(modes_per_class):
        last = {"lingocl": [], "muprocl": []}
        forg = {"lingocl": [], "muprocl": []}
        for seed in seeds:
            bundle = _world_bundle(seed, modes=modes_per_class)
            for name in ("lingocl", "muprocl"):
                rep = _run(MethodMode(name), seed, COMPARE, bundle).report
                last[name].append(rep.last)
                forg[name].append(rep.forgetting)
        return last, forg

    last, forg = paired(2)
    med_lin, med_mu = np.median(last["lingocl"]), np.median(last["muprocl"])
    med_f_lin, med_f_mu = np.median(forg["lingocl"]), np.median(forg["muprocl"])
    gap_multi = med_mu - med_lin
    assert med_mu > med_lin, (last, forg)
    assert med_f_mu <= med_f_lin, (last, forg)

    uni_last, _ = paired(1)
    gap_uni = float(np.median(uni_last["muprocl"]) - np.median(uni_last["lingocl"]))
    assert abs(gap_uni) <= abs(gap_multi) / 2.0

    elapsed = time.perf_counter() - start
    assert elapsed < 120.0
    print(f"criterion 5: median Last {med_mu:.3f} vs {med_lin:.3f} "
          f"(gap {gap_multi:+.3f}), median F {med_f_mu:.3f} vs {med_f_lin:.3f}, "
          f"unimodal gap {gap_uni:+.3f}, {elapsed:.0f}s")


# ---------------------------------------------------------------- criterion 6


def test_criterion_6_metrics_oracle():
    """Hand-computed metrics, the zero-epoch second task, and F applicability."""
    matrix = AccuracyMatrix(per_task=[[0.9], [0.6, 0.8]], overall=[0.9, 0.7])
    report = compute_metrics(matrix, MethodMode("lingocl"))
    assert report.avg == 0.8 and report.last == 0.7
    assert report.forgetting == pytest.approx(0.3, abs=1e-15)

    # a second task trained for zero epochs cannot disturb the first task
    bundle = _world_bundle(6, cap=0.2, noise=0.1, n_train=8, n_test=6)
    settings = TrainSettings(epochs=40, batch_size=16, learning_rate=0.05,
                             decay_epochs=(25, 32), hidden_sizes=(16,), feature_dim=8)
    res = _run(MethodMode("muprocl"), 6, settings, bundle, per_task_epochs=(40, 0))
    assert res.report.forgetting == 0.0

    oracle = compute_metrics(matrix, MethodMode("oracle"))
    assert oracle.forgetting is None
    single = _run(MethodMode("lingocl"), 6,
                  TrainSettings(epochs=2, hidden_sizes=(8,), feature_dim=8),
                  bundle=None)
    single_matrix = AccuracyMatrix(per_task=[[0.5]], overall=[0.5])
    assert compute_metrics(single_matrix, MethodMode("lingocl")).forgetting is None
    oracle_run = _run(MethodMode("oracle"), 6,
                      TrainSettings(epochs=2, hidden_sizes=(8,), feature_dim=8))
    assert oracle_run.report.forgetting is None
    print("criterion 6: hand metrics exact, zero-epoch F=0, "
          "oracle/single-phase F not applicable")


# ---------------------------------------------------------------- criterion 7


def test_criterion_7_k_max_sweep(tmp_path):
    """CLI sweep over {1,2,4,8,16} emits 5 summary rows; 1 -> 2 -> 4 medians rise."""
    body = """
methods = muprocl
num_classes = 4
modes_per_class = 2
mode_cosine_cap = 0.05
latent_noise = 0.3
train_per_mode = 20
test_per_mode = 50
epochs = 30
batch_size = 16
hidden_sizes = 32
learning_rate = 0.02
decay_epochs = 15, 23
scale = 30
sweep_param = k_max
sweep_values = 1, 2, 4, 8, 16
n_seeds = 1
"""
    cfg_path = tmp_path / "sweep.cfg"
    cfg_path.write_text(body)
    out = tmp_path / "out"
    assert cli_main(["sweep", str(cfg_path), "--out", str(out)]) == 0
    rows = read_summary_csv(out / "summary.csv")
    assert len(rows) == 5
    assert {r["run_id"] for r in rows} == {
        f"k_max{k}-muprocl-seed0" for k in (1, 2, 4, 8, 16)
    }

    medians = []
    for k in (1, 2, 4):
        lasts = []
        for seed in range(5):
            res = _run(MethodMode("muprocl", k_max=k), seed, SWEEP_SETTINGS)
            lasts.append(res.report.last)
        medians.append(float(np.median(lasts)))
    assert medians[0] <= medians[1] <= medians[2], medians
    print(f"criterion 7: sweep emitted 5 rows; median Last over 5 seeds "
          f"K=1/2/4 -> {medians[0]:.3f}/{medians[1]:.3f}/{medians[2]:.3f}")


# ---------------------------------------------------------------- criterion 8


def test_criterion_8_determinism_and_round_trips(tmp_path):
    """Byte-identical CSVs on rerun; lossless persistence at stated precision."""
    body = """
seed = 1
methods = lingocl, muprocl
num_classes = 4
mode_cosine_cap = 0.2
latent_noise = 0.1
train_per_mode = 6
test_per_mode = 4
epochs = 5
batch_size = 16
hidden_sizes = 16
decay_epochs = 3
"""
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(body)
    out1, out2 = tmp_path / "out1", tmp_path / "out2"
    assert cli_main(["run", str(cfg_path), "--out", str(out1)]) == 0
    assert cli_main(["run", str(cfg_path), "--out", str(out2)]) == 0
    for name in ("results.csv", "summary.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()

    rng = np.random.default_rng(88)
    records = [(f"k{i}", i % 3, rng.normal(size=7)) for i in range(5)]
    epath = tmp_path / "emb.tsv"
    write_embedding_file(epath, 7, records)
    dim, loaded = read_embedding_records(epath)
    assert dim == 7
    for (_, _, want), (_, _, got) in zip(records, loaded):
        np.testing.assert_array_equal(got.astype(np.float32),
                                      np.asarray(want, dtype=np.float32))

    params = init_params((6, 5, 4), rng)
    cpath = tmp_path / "enc.npz"
    save_checkpoint(cpath, params)
    again = load_checkpoint(cpath)
    for a, b in zip(again.weights + again.biases, params.weights + params.biases):
        np.testing.assert_array_equal(a, b)

    meta = json.loads((out1 / "run_meta.json").read_text())
    assert meta["config"]["agent"] == "stub"  # no network anywhere in this gate
    print("criterion 8: reruns byte-identical; embedding and checkpoint "
          "round-trips lossless")
