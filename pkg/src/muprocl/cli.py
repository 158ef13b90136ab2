"""Config-driven experiment runner.

Config files are flat key = value text (INI sections permitted; they are
flattened, so keys must be unique across the whole file). Unknown keys are
rejected. `validate` returns every diagnostic at once; `run` executes all
configured methods on one seed; `sweep` expands a parameter grid into
independent runs with derived seeds (base + index) in subdirectories and
merges their CSVs sequentially.

Artifacts per run directory: results.csv (one row per phase/task accuracy,
task == -1 rows hold the pooled per-phase accuracy), summary.csv (one row per
run_id: avg/last/forgetting), prompt_sets_<method>.json for frozen-target
methods, report.txt, and run_meta.json. Nothing embeds a timestamp, so reruns
are byte-identical.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

from .agent import AgentSpec, SelectConfig, load_candidate_pool, save_prompt_sets
from .continual import (MODE_NAMES, MethodMode, TrainSettings, compute_metrics,
                        results_rows, run_experiment, write_results_csv,
                        write_summary_csv)
from .datagen import WorldSpec, load_feature_dataset, make_world, sample_dataset, world_lexicon
from .embedding import EmbedderSpec, FileEmbedder, WorldEmbedder
from .errors import ConfigError

_ABLATIONS = ("full", "no_disambiguation", "no_expansion")


@dataclass(frozen=True)
class RunConfig:
    """Every knob with its default; unknown config keys are rejected at parse."""

    # identity / output
    seed: int = 0
    out_dir: str = "out"
    methods: tuple = ("lingocl", "muprocl")   # subset of MODE_NAMES, comma list

    # data source: synthetic polysemy world or precomputed feature files
    data: str = "synthetic"                    # synthetic | features
    num_classes: int = 4
    modes_per_class: int = 2
    n_in: int = 16
    latent_noise: float = 0.05
    input_noise: float = 0.02
    train_per_mode: int = 40
    test_per_mode: int = 20
    mode_cosine_cap: float = 0.9
    prompt_noise: float = 0.02                 # world-embedder noise on non-bare prompts
    features_path: str = ""                    # data=features: sample vectors
    split_path: str = ""                       # data=features: train/test assignment
    embeddings_path: str = ""                  # frozen modes on features: prompt embeddings
    candidates_path: str = ""                  # frozen modes on features: candidate pool JSON

    # incremental protocol
    B: int = 2                                 # classes in the initial task
    C: int = 2                                 # classes per later task
    memory_capacity: int = 20                  # exemplars kept per class

    # prompt selection
    k_max: int = 4
    dedup_threshold: float = 0.95
    coverage_gain_threshold: float = 0.2
    disambiguation: bool = True
    expansion: bool = True

    # encoder / optimizer
    hidden_sizes: tuple = (32,)
    feature_dim: int = 8
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.05
    momentum: float = 0.9
    decay_epochs: tuple = (50, 75)
    decay_factor: float = 0.1
    scale: float = 1.0

    # candidate-generating agent
    agent: str = "stub"                        # stub | http
    endpoint: str = ""
    chat_model: str = ""
    api_key_env: str = ""

    # sweep grid
    sweep_param: str = ""                      # k_max | ablation
    sweep_values: tuple = ()                   # comma list, typed per sweep_param
    n_seeds: int = 1                           # seeds per sweep value (base + index)


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_int_tuple(s: str) -> tuple:
    s = s.strip()
    return tuple(int(tok) for tok in s.split(",") if tok.strip()) if s else ()


def _parse_str_tuple(s: str) -> tuple:
    return tuple(tok.strip() for tok in s.split(",") if tok.strip())


_PARSERS = {
    "int": lambda s: int(s.strip()),
    "float": lambda s: float(s.strip()),
    "str": lambda s: s.strip(),
    "bool": _parse_bool,
}

_TUPLE_KEYS = {
    "methods": _parse_str_tuple,
    "hidden_sizes": _parse_int_tuple,
    "decay_epochs": _parse_int_tuple,
    "sweep_values": _parse_str_tuple,
}


def parse_config(path) -> RunConfig:
    """Flat key = value (sections flattened); unknown or duplicate keys rejected."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string("[_flat]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    flat: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in flat:
                raise ConfigError(f"{path}: duplicate key {key!r} across sections")
            flat[key] = value
    by_name = {f.name.lower(): f for f in fields(RunConfig)}
    kwargs = {}
    for key, raw in flat.items():
        f = by_name.get(key)
        if f is None:
            raise ConfigError(f"{path}: unknown key {key!r}")
        parse = _TUPLE_KEYS.get(f.name)
        if parse is None:
            type_name = f.type if isinstance(f.type, str) else f.type.__name__
            parse = _PARSERS[type_name]
        try:
            kwargs[f.name] = parse(raw)
        except ValueError as exc:
            raise ConfigError(f"{path}: bad value for {f.name!r}: {exc}") from None
    return RunConfig(**kwargs)


def validate(cfg: RunConfig) -> list[str]:
    """All diagnostics at once; an empty list means the config is runnable."""
    d = []
    if cfg.data not in ("synthetic", "features"):
        d.append(f"data must be 'synthetic' or 'features', got {cfg.data!r}")
    if not cfg.methods:
        d.append("methods must name at least one method mode")
    for m in cfg.methods:
        if m not in MODE_NAMES:
            d.append(f"unknown method {m!r} (choose from {', '.join(MODE_NAMES)})")
    if len(set(cfg.methods)) != len(cfg.methods):
        d.append("methods list repeats a method")
    frozen_requested = any(m in ("lingocl", "muprocl") for m in cfg.methods)

    if cfg.B < 1 or cfg.C < 1:
        d.append("B and C must be >= 1")
    if cfg.data == "synthetic":
        if cfg.num_classes < 1:
            d.append("num_classes must be >= 1")
        elif cfg.B >= 1 and cfg.C >= 1 and (
                cfg.num_classes < cfg.B or (cfg.num_classes - cfg.B) % cfg.C != 0):
            d.append(f"{cfg.num_classes} classes do not split as B={cfg.B} plus "
                     f"a whole number of C={cfg.C} tasks")
        if cfg.modes_per_class < 1:
            d.append("modes_per_class must be >= 1")
        if cfg.n_in < cfg.feature_dim:
            d.append("n_in must be >= feature_dim (orthonormal input map)")
        if not (0.0 < cfg.mode_cosine_cap <= 0.9):
            d.append("mode_cosine_cap must lie in (0, 0.9]")
        if cfg.latent_noise < 0 or cfg.input_noise < 0 or cfg.prompt_noise < 0:
            d.append("noise scales must be nonnegative")
        if cfg.train_per_mode < 1 or cfg.test_per_mode < 1:
            d.append("train_per_mode and test_per_mode must be >= 1")
    else:
        for key in ("features_path", "split_path"):
            path = getattr(cfg, key)
            if not path:
                d.append(f"data=features requires {key}")
            elif not os.path.exists(path):
                d.append(f"{key} does not exist: {path}")
        if frozen_requested:
            for key in ("embeddings_path", "candidates_path"):
                path = getattr(cfg, key)
                if not path:
                    d.append(f"frozen-target methods on feature data require {key}")
                elif not os.path.exists(path):
                    d.append(f"{key} does not exist: {path}")

    if cfg.k_max < 1:
        d.append("k_max must be >= 1 (a prompt set holds 1..K_max prototypes)")
    if not (0.0 < cfg.dedup_threshold <= 1.0):
        d.append("dedup_threshold must lie in (0, 1]")
    if not (0.0 < cfg.coverage_gain_threshold <= 1.0):
        d.append("coverage_gain_threshold must lie in (0, 1]")

    if not cfg.hidden_sizes or any(h < 1 for h in cfg.hidden_sizes):
        d.append("hidden_sizes must be positive (at least one hidden layer)")
    if cfg.feature_dim < 1:
        d.append("feature_dim must be >= 1")
    if cfg.epochs < 0:
        d.append("epochs must be >= 0")
    if cfg.batch_size < 1:
        d.append("batch_size must be >= 1")
    if cfg.learning_rate <= 0:
        d.append("learning_rate must be positive")
    if not (0.0 <= cfg.momentum < 1.0):
        d.append("momentum must lie in [0, 1)")
    if not (0.0 < cfg.decay_factor <= 1.0):
        d.append("decay_factor must lie in (0, 1]")
    if any(e < 0 for e in cfg.decay_epochs):
        d.append("decay_epochs must be nonnegative")
    if cfg.memory_capacity < 0:
        d.append("memory_capacity must be >= 0")
    if cfg.scale <= 0:
        d.append("scale must be positive")

    if cfg.agent not in ("stub", "http"):
        d.append(f"agent must be 'stub' or 'http', got {cfg.agent!r}")
    elif cfg.agent == "http" and not cfg.endpoint:
        d.append("agent=http requires endpoint")

    if cfg.sweep_param not in ("", "k_max", "ablation"):
        d.append(f"sweep_param must be 'k_max' or 'ablation', got {cfg.sweep_param!r}")
    elif cfg.sweep_param and not cfg.sweep_values:
        d.append("sweep_param set but sweep_values is empty")
    elif cfg.sweep_param == "k_max":
        for v in cfg.sweep_values:
            if not v.isdigit() or int(v) < 1:
                d.append(f"sweep value {v!r} is not a positive integer k_max")
    elif cfg.sweep_param == "ablation":
        for v in cfg.sweep_values:
            if v not in _ABLATIONS:
                d.append(f"sweep value {v!r} not in {', '.join(_ABLATIONS)}")
        if "muprocl" not in cfg.methods:
            d.append("ablation sweep requires muprocl in methods")
    if not cfg.sweep_param and cfg.sweep_values:
        d.append("sweep_values set but sweep_param is empty")
    if cfg.n_seeds < 1:
        d.append("n_seeds must be >= 1")
    if not cfg.out_dir:
        d.append("out_dir must be nonempty")
    return d


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------


def _mode_for(method: str, cfg: RunConfig, ablation: str | None = None) -> MethodMode:
    if method != "muprocl":
        return MethodMode(method)
    dis, exp = cfg.disambiguation, cfg.expansion
    if ablation == "no_disambiguation":
        dis = False
    elif ablation == "no_expansion":
        exp = False
    return MethodMode("muprocl", disambiguation=dis, expansion=exp)


def _build_data(cfg: RunConfig, seed: int):
    """(train, test, class_names, embedder, agent, candidate_pool) for one seed."""
    frozen_requested = any(m in ("lingocl", "muprocl") for m in cfg.methods)
    if cfg.data == "synthetic":
        spec = WorldSpec(num_classes=cfg.num_classes, modes_per_class=cfg.modes_per_class,
                         dim=cfg.feature_dim, n_in=cfg.n_in,
                         latent_noise=cfg.latent_noise, input_noise=cfg.input_noise,
                         train_per_mode=cfg.train_per_mode, test_per_mode=cfg.test_per_mode,
                         mode_cosine_cap=cfg.mode_cosine_cap)
        world = make_world(spec, seed)
        train = sample_dataset(world, "train", seed)
        test = sample_dataset(world, "test", seed)
        embedder = WorldEmbedder(EmbedderSpec(kind="stub", dim=cfg.feature_dim, seed=seed),
                                 world, cfg.prompt_noise) if frozen_requested else None
        if cfg.agent == "http":
            agent = AgentSpec(kind="http", endpoint=cfg.endpoint,
                              model=cfg.chat_model or None,
                              api_key_env=cfg.api_key_env or None, seed=seed)
        else:
            agent = AgentSpec(kind="stub", seed=seed, lexicon=world_lexicon(world))
        return train, test, world.class_names, embedder, agent, None
    train, test, dim = load_feature_dataset(cfg.features_path, cfg.split_path)
    if dim != cfg.feature_dim:
        raise ConfigError(f"feature file dim {dim} != feature_dim {cfg.feature_dim}")
    n_classes = max(s.label for s in train + test) + 1
    names = tuple(f"class{i}" for i in range(n_classes))
    embedder = pool = None
    if frozen_requested:
        embedder = FileEmbedder(EmbedderSpec(kind="file", dim=dim, path=cfg.embeddings_path))
        pool = load_candidate_pool(cfg.candidates_path)
    return train, test, names, embedder, None, pool


def _execute_entry(cfg: RunConfig, seed: int, tag: str, ablation: str | None = None):
    """Run every configured method on one seed; returns rows, summaries, prompt sets."""
    try:
        train, test, names, embedder, agent, pool = _build_data(cfg, seed)
    except Exception as exc:
        raise RuntimeError(f"data stage: {exc}") from exc
    select_cfg = SelectConfig(k_max=cfg.k_max, dedup_threshold=cfg.dedup_threshold,
                              coverage_gain_threshold=cfg.coverage_gain_threshold)
    settings = TrainSettings(epochs=cfg.epochs, batch_size=cfg.batch_size,
                             learning_rate=cfg.learning_rate, momentum=cfg.momentum,
                             decay_epochs=cfg.decay_epochs, decay_factor=cfg.decay_factor,
                             memory_capacity=cfg.memory_capacity,
                             hidden_sizes=cfg.hidden_sizes, feature_dim=cfg.feature_dim,
                             scale=cfg.scale)
    rows, summaries, prompt_sets = [], [], {}
    for method in cfg.methods:
        run_id = f"{tag}{method}-seed{seed}"
        mode = _mode_for(method, cfg, ablation)
        try:
            result = run_experiment(train, test, names, mode, select_cfg, settings,
                                    cfg.B, cfg.C, seed, embedder=embedder, agent=agent,
                                    candidate_pool=pool)
        except Exception as exc:
            raise RuntimeError(f"train stage [{method}]: {exc}") from exc
        rows.extend(results_rows(run_id, seed, method, cfg.B, cfg.C,
                                 select_cfg.k_max if mode.k_max is None else mode.k_max,
                                 result.matrix))
        summaries.append((run_id, result.report))
        if result.prompt_sets is not None:
            prompt_sets[method] = (result.prompt_sets, names)
    return rows, summaries, prompt_sets


def _write_entry(entry_dir: str, rows, summaries, prompt_sets) -> None:
    os.makedirs(entry_dir, exist_ok=True)
    write_results_csv(os.path.join(entry_dir, "results.csv"), rows)
    write_summary_csv(os.path.join(entry_dir, "summary.csv"), summaries)
    for method, (sets, names) in prompt_sets.items():
        save_prompt_sets(os.path.join(entry_dir, f"prompt_sets_{method}.json"),
                         sets, class_names=[names[ps.class_id] for ps in sets])


def _report_text(summaries) -> str:
    out = io.StringIO()
    out.write(f"{'run_id':<40} {'avg':>8} {'last':>8} {'forgetting':>10}\n")
    for run_id, report in summaries:
        f = "-" if report.forgetting is None else f"{report.forgetting:.4f}"
        out.write(f"{run_id:<40} {report.avg:>8.4f} {report.last:>8.4f} {f:>10}\n")
    return out.getvalue()


def _write_meta(out_dir: str, cfg: RunConfig, entries) -> None:
    meta = {"tool": "muprocl", "config": asdict(cfg), "entries": list(entries)}
    with open(os.path.join(out_dir, "run_meta.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(cfg: RunConfig) -> int:
    diags = validate(cfg)
    if diags:
        for msg in diags:
            print(f"config: {msg}", file=sys.stderr)
        return 2
    try:
        rows, summaries, prompt_sets = _execute_entry(cfg, cfg.seed, tag="")
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_entry(cfg.out_dir, rows, summaries, prompt_sets)
    report = _report_text(summaries)
    with open(os.path.join(cfg.out_dir, "report.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(report)
    _write_meta(cfg.out_dir, cfg, [""])
    print(report, end="")
    return 0


def _sweep_entry_worker(args):
    cfg, value, seed, tag, entry_dir = args
    if cfg.sweep_param == "k_max":
        entry_cfg, ablation = replace(cfg, k_max=int(value)), None
    else:
        entry_cfg, ablation = cfg, (None if value == "full" else value)
    rows, summaries, prompt_sets = _execute_entry(entry_cfg, seed, tag, ablation)
    _write_entry(entry_dir, rows, summaries, prompt_sets)
    return rows, summaries


def sweep(cfg: RunConfig, jobs: int = 1) -> int:
    diags = validate(cfg)
    if not cfg.sweep_param:
        diags.append("sweep requires sweep_param and sweep_values")
    if diags:
        for msg in diags:
            print(f"config: {msg}", file=sys.stderr)
        return 2
    entries = []
    for value in cfg.sweep_values:
        label = f"k_max{value}" if cfg.sweep_param == "k_max" else value
        for i in range(cfg.n_seeds):
            seed = cfg.seed + i
            entries.append((cfg, value, seed,
                            f"{label}-", os.path.join(cfg.out_dir, label, f"seed{seed}")))
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outputs = list(pool.map(_sweep_entry_worker, entries))
        else:
            outputs = [_sweep_entry_worker(e) for e in entries]
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    all_rows, all_summaries = [], []
    for rows, summaries in outputs:
        all_rows.extend(rows)
        all_summaries.extend(summaries)
    os.makedirs(cfg.out_dir, exist_ok=True)
    write_results_csv(os.path.join(cfg.out_dir, "results.csv"), all_rows)
    write_summary_csv(os.path.join(cfg.out_dir, "summary.csv"), all_summaries)
    report = _report_text(all_summaries)
    with open(os.path.join(cfg.out_dir, "report.txt"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(report)
    _write_meta(cfg.out_dir, cfg, [e[3].rstrip("-") for e in entries])
    print(report, end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="muprocl",
        description="Class-incremental experiments with multi-prototype language targets.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in ("run", "validate", "sweep"):
        sp = sub.add_parser(verb)
        sp.add_argument("config", help="path to a key = value config file")
        if verb != "validate":
            sp.add_argument("--seed", type=int, default=None, help="override the config seed")
            sp.add_argument("--out", default=None, help="override the output directory")
        if verb == "sweep":
            sp.add_argument("--jobs", type=int, default=1,
                            help="parallel sweep entries (processes)")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config: {exc}", file=sys.stderr)
        return 2
    if args.verb != "validate":
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.out is not None:
            cfg = replace(cfg, out_dir=args.out)
    if args.verb == "validate":
        diags = validate(cfg)
        for msg in diags:
            print(msg)
        return 0 if not diags else 1
    if args.verb == "run":
        return run(cfg)
    return sweep(cfg, jobs=args.jobs)


if __name__ == "__main__":
    sys.exit(main())
