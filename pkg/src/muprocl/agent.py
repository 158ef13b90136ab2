"""Prompt-set construction: candidate generation, sense filtering,
near-duplicate removal, and farthest-point-sampling selection.

Per class the pipeline is: generate -> sense_filter -> embed -> dedup ->
fps_select, yielding an ordered prompt set of size 1..k_max whose member
embeddings are pairwise below the dedup threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import AgentError, InputError, ParseError
from .numerics import cosine

EXPANSION_TEMPLATES = (
    "a photo of a {object}",
    "a sketch of a {object}",
    "a logo of {object}",
    "{object} at night",
)

# Built-in polysemy lexicon for the stub agent: class name -> [(sense, visual)].
# Non-visual senses exist so the sense filter has something to do.
DEFAULT_LEXICON = {
    "crane": [("bird", True), ("construction equipment", True)],
    "apple": [("fruit", True), ("company logo", True)],
    "bat": [("flying mammal", True), ("baseball bat", True)],
    "mouse": [("rodent", True), ("computer mouse", True)],
    "jaguar": [("big cat", True), ("luxury car", True)],
    "seal": [("marine mammal", True), ("wax stamp", True)],
    "bass": [("fish", True), ("music genre", False)],
    "palm": [("tree", True), ("palm of a hand", True)],
    "kiwi": [("bird", True), ("fruit", True)],
    "spring": [("metal coil", True), ("season", False)],
    "boxer": [("dog breed", True), ("athlete", True)],
}


@dataclass(frozen=True)
class PromptCandidate:
    text: str
    class_id: int
    kind: str  # "bare" | "disambiguation" | "expansion"
    mode_tag: str | None = None
    visual: bool = True

    def __post_init__(self):
        if not self.text:
            raise InputError("candidate text must be nonempty")
        if self.kind not in ("bare", "disambiguation", "expansion"):
            raise InputError(f"unknown candidate kind: {self.kind!r}")
        if self.kind == "bare" and self.mode_tag is not None:
            raise InputError("bare candidates carry no mode_tag")


@dataclass(frozen=True)
class PromptSet:
    class_id: int
    prompts: tuple[PromptCandidate, ...]

    @property
    def k(self) -> int:
        return len(self.prompts)

    def __post_init__(self):
        if len(self.prompts) < 1:
            raise InputError("a prompt set holds at least one prompt")


@dataclass(frozen=True)
class SelectConfig:
    k_max: int = 4
    dedup_threshold: float = 0.95
    coverage_gain_threshold: float = 0.2
    disambiguation_enabled: bool = True
    expansion_enabled: bool = True

    def __post_init__(self):
        if self.k_max < 1:
            raise InputError("k_max must be >= 1")
        if not (0.0 < self.dedup_threshold <= 1.0):
            raise InputError("dedup_threshold must lie in (0, 1]")
        if not (0.0 < self.coverage_gain_threshold <= 1.0):
            raise InputError("coverage_gain_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class AgentSpec:
    """Stub agent (seeded, lexicon-driven) or an OpenAI-compatible HTTP agent."""

    kind: str = "stub"
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str | None = None
    seed: int = 0
    timeout: float = 30.0
    lexicon: dict | None = None  # stub only; None -> DEFAULT_LEXICON

    def __post_init__(self):
        if self.kind not in ("stub", "http"):
            raise InputError(f"unknown agent kind: {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise InputError("http agent requires an endpoint")


def generate_candidates(agent: AgentSpec, class_name: str, cfg: SelectConfig,
                        class_id: int = 0) -> list[PromptCandidate]:
    """Candidate pool for one class: bare name, sense-qualified names, template expansions."""
    if not class_name:
        raise InputError("class_name must be nonempty")
    out = [PromptCandidate(class_name, class_id, "bare")]
    if agent.kind == "http":
        out.extend(_http_candidates(agent, class_name, cfg, class_id))
        return out
    lexicon = agent.lexicon if agent.lexicon is not None else DEFAULT_LEXICON
    if cfg.disambiguation_enabled:
        for sense, visual in lexicon.get(class_name, ()):
            out.append(PromptCandidate(f"{class_name} ({sense})", class_id,
                                       "disambiguation", mode_tag=sense, visual=visual))
    if cfg.expansion_enabled:
        for template in EXPANSION_TEMPLATES:
            out.append(PromptCandidate(template.format(object=class_name),
                                       class_id, "expansion"))
    return out


def sense_filter(candidates: list[PromptCandidate]) -> list[PromptCandidate]:
    """Drop non-visual candidates; the bare candidate is always retained."""
    return [c for c in candidates if c.visual or c.kind == "bare"]


def _vec(emb) -> np.ndarray:
    return emb.vector if hasattr(emb, "vector") else np.asarray(emb, dtype=np.float64)


def dedup_indices(embeddings, threshold: float) -> list[int]:
    """Greedy keep-first scan: drop an index whose cosine with any kept one exceeds threshold."""
    kept: list[int] = []
    vecs = [_vec(e) for e in embeddings]
    for i, vec in enumerate(vecs):
        if not any(cosine(vec, vecs[j]) > threshold for j in kept):
            kept.append(i)
    return kept


def dedup(candidates, embeddings, threshold: float) -> list[PromptCandidate]:
    """Like dedup_indices, returning the surviving candidates."""
    if len(candidates) != len(embeddings):
        raise InputError("one embedding per candidate required")
    return [candidates[i] for i in dedup_indices(embeddings, threshold)]


def fps_select(candidates, embeddings, cfg: SelectConfig) -> PromptSet:
    """Farthest-point selection seeded at the bare candidate.

    Gain of an unselected candidate is min over selected of (1 - cosine);
    stop when the best gain drops below the coverage threshold or k_max is hit.
    Ties break toward earlier input order.
    """
    if not candidates:
        raise InputError("cannot select from an empty candidate list")
    if len(candidates) != len(embeddings):
        raise InputError("one embedding per candidate required")
    vecs = [_vec(e) for e in embeddings]
    n = len(candidates)
    seed_idx = next((i for i, c in enumerate(candidates) if c.kind == "bare"), 0)
    selected = [seed_idx]
    # min cosine distance to the selected set, updated incrementally
    gain = np.array([1.0 - cosine(vecs[i], vecs[seed_idx]) for i in range(n)])
    gain[seed_idx] = -np.inf
    while len(selected) < cfg.k_max:
        best = int(np.argmax(gain))  # argmax takes the earliest on ties
        if gain[best] < cfg.coverage_gain_threshold:
            break
        selected.append(best)
        for i in range(n):
            if np.isfinite(gain[i]):
                gain[i] = min(gain[i], 1.0 - cosine(vecs[i], vecs[best]))
        gain[best] = -np.inf
    selected.sort()
    picked = tuple(candidates[i] for i in selected)
    return PromptSet(class_id=picked[0].class_id, prompts=picked)


def select_one(candidates, embedder, cfg: SelectConfig, class_id: int) -> PromptSet:
    """Per-class tail of the pipeline: sense_filter -> embed -> dedup -> fps_select."""
    cands = sense_filter(candidates)
    embs = [embedder.embed(c.text, class_id=class_id) for c in cands]
    keep = dedup_indices(embs, cfg.dedup_threshold)
    return fps_select([cands[i] for i in keep], [embs[i] for i in keep], cfg)


def build_prompt_sets(agent: AgentSpec, class_names, embedder, cfg: SelectConfig,
                      class_ids=None) -> list[PromptSet]:
    """Run the full per-class pipeline for every class name, in order."""
    names = list(class_names)
    if len(set(names)) != len(names) or any(not n for n in names):
        raise InputError("class names must be distinct and nonempty")
    ids = list(class_ids) if class_ids is not None else list(range(len(names)))
    return [select_one(generate_candidates(agent, name, cfg, class_id=cid),
                       embedder, cfg, cid)
            for cid, name in zip(ids, names)]


# ---------------------------------------------------------------------------
# Persistence: JSON of per-class candidate records. stage == "selected" for
# final prompt sets (bank rebuilds), stage == "candidates" for raw pre-filter
# pools (the exporter's output, to be filtered/selected by this module).
# ---------------------------------------------------------------------------


def _candidate_to_json(c: PromptCandidate) -> dict:
    return {"text": c.text, "kind": c.kind, "mode_tag": c.mode_tag, "visual": c.visual}


def _candidate_from_json(obj: dict, class_id: int) -> PromptCandidate:
    return PromptCandidate(text=obj["text"], class_id=class_id, kind=obj["kind"],
                           mode_tag=obj.get("mode_tag"), visual=bool(obj.get("visual", True)))


def save_prompt_sets(path, prompt_sets, class_names=None) -> None:
    names = list(class_names) if class_names is not None else [None] * len(prompt_sets)
    doc = {
        "stage": "selected",
        "classes": [
            {"class_id": ps.class_id, "class_name": name,
             "candidates": [_candidate_to_json(c) for c in ps.prompts]}
            for ps, name in zip(prompt_sets, names)
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _load_stage(path, expected_stage: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, f"bad JSON: {exc.msg}") from None
    if doc.get("stage") != expected_stage:
        raise ParseError(path, 1, f"expected stage {expected_stage!r}, got {doc.get('stage')!r}")
    if not isinstance(doc.get("classes"), list):
        raise ParseError(path, 1, "missing 'classes' list")
    return doc["classes"]


def load_prompt_sets(path) -> list[PromptSet]:
    """Load previously selected prompt sets (bank rebuild without the agent)."""
    out = []
    for entry in _load_stage(path, "selected"):
        cid = int(entry["class_id"])
        prompts = tuple(_candidate_from_json(o, cid) for o in entry["candidates"])
        out.append(PromptSet(class_id=cid, prompts=prompts))
    return out


def save_candidate_pool(path, pool: dict[int, list[PromptCandidate]], class_names=None) -> None:
    names = class_names or {}
    doc = {
        "stage": "candidates",
        "classes": [
            {"class_id": cid, "class_name": names.get(cid),
             "candidates": [_candidate_to_json(c) for c in cands]}
            for cid, cands in sorted(pool.items())
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_candidate_pool(path) -> dict[int, list[PromptCandidate]]:
    """Load a raw (pre-filter) candidate pool, e.g. one written by the exporter."""
    pool: dict[int, list[PromptCandidate]] = {}
    for entry in _load_stage(path, "candidates"):
        cid = int(entry["class_id"])
        pool[cid] = [_candidate_from_json(o, cid) for o in entry["candidates"]]
    return pool


def select_from_pool(pool: dict[int, list[PromptCandidate]], embedder,
                     cfg: SelectConfig, class_ids=None) -> list[PromptSet]:
    """Filter -> dedup -> select over an externally generated candidate pool."""
    ids = sorted(pool) if class_ids is None else list(class_ids)
    missing = [cid for cid in ids if cid not in pool]
    if missing:
        raise InputError(f"candidate pool missing classes {missing}")
    return [select_one(pool[cid], embedder, cfg, cid) for cid in ids]


# ---------------------------------------------------------------------------
# HTTP agent: OpenAI-compatible chat completion returning a JSON array of
# {"text": ..., "sense": ... or null, "visual": bool}. Any transport or
# format problem is a hard AgentError; there is no silent fallback.
# ---------------------------------------------------------------------------

_INSTRUCTION = (
    "You expand visual category names for image classification. "
    "Reply with ONLY a JSON array; each element is an object with keys "
    '"text" (a prompt string), "sense" (a short sense label for disambiguation, or null), '
    'and "visual" (boolean: does the prompt denote something visually depictable?).'
)


def _http_candidates(agent: AgentSpec, class_name: str, cfg: SelectConfig,
                     class_id: int) -> list[PromptCandidate]:
    import os

    import requests

    wants = []
    if cfg.disambiguation_enabled:
        wants.append("sense-disambiguated prompts of the form '<name> (<sense>)' if the name is polysemous")
    if cfg.expansion_enabled:
        wants.append("visual-mode expansions (photo, sketch, logo, night-time, and similar)")
    if not wants:
        return []
    user = (f"Category name: {class_name!r}. Produce " + " and ".join(wants) +
            ". Do not include the bare name itself.")
    headers = {"Content-Type": "application/json"}
    if agent.api_key_env:
        key = os.environ.get(agent.api_key_env)
        if not key:
            raise AgentError(f"environment variable {agent.api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    payload = {
        "model": agent.model or "default",
        "temperature": 0,
        "messages": [
            {"role": "system", "content": _INSTRUCTION},
            {"role": "user", "content": user},
        ],
    }
    url = agent.endpoint.rstrip("/") + "/chat/completions"
    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=agent.timeout)
        resp.raise_for_status()
        body = resp.json()
    except Exception as exc:
        raise AgentError(f"chat request to {url} failed: {exc}") from exc
    try:
        content = body["choices"][0]["message"]["content"]
        items = json.loads(content)
        assert isinstance(items, list)
    except Exception as exc:
        raise AgentError(f"malformed agent reply: {exc}") from exc
    out = []
    for item in items:
        if not isinstance(item, dict) or "text" not in item:
            raise AgentError(f"malformed candidate object: {item!r}")
        sense = item.get("sense")
        kind = "disambiguation" if sense else "expansion"
        out.append(PromptCandidate(str(item["text"]), class_id, kind,
                                   mode_tag=str(sense) if sense else None,
                                   visual=bool(item.get("visual", True))))
    return out
