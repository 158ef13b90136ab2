"""Raw prompt-candidate export from an OpenAI-compatible chat endpoint.

The reply contract matches what the engine's own http agent speaks: the
model answers with a JSON array of {"text", "sense", "visual"} objects at
temperature 0. Candidates are written exactly as received (bare name first,
then chat-provided senses, then local template rewordings); the engine owns
every filtering and selection decision downstream.
"""

import json
import os

from .job import ExportError, ExportJob

_INSTRUCTION = (
    "You expand visual category names for image classification. "
    "Reply with ONLY a JSON array; each element is an object with keys "
    '"text" (a prompt string), "sense" (a short sense label for disambiguation, or null), '
    'and "visual" (boolean: does the prompt denote something visually depictable?).'
)


def fetch_sense_candidates(job: ExportJob, class_name: str) -> list:
    """Ask the chat model for sense-disambiguated prompts for one class.

    Returns raw candidate dicts (text/kind/mode_tag/visual). Transport and
    format problems surface as ExportError with the underlying message.
    """
    import requests

    if not job.chat_endpoint:
        raise ExportError("chat endpoint is not configured")
    user = (f"Category name: {class_name!r}. Produce sense-disambiguated prompts "
            "of the form '<name> (<sense>)' if the name is polysemous. "
            "Do not include the bare name itself.")
    headers = {"Content-Type": "application/json"}
    if job.api_key_env:
        key = os.environ.get(job.api_key_env)
        if not key:
            raise ExportError(f"environment variable {job.api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    payload = {
        "model": job.chat_model or "default",
        "temperature": 0,
        "messages": [
            {"role": "system", "content": _INSTRUCTION},
            {"role": "user", "content": user},
        ],
    }
    url = job.chat_endpoint.rstrip("/") + "/chat/completions"
    try:
        resp = requests.post(url, json=payload, headers=headers, timeout=job.timeout)
        resp.raise_for_status()
        body = resp.json()
    except Exception as exc:
        raise ExportError(f"chat request to {url} failed: {exc}") from exc
    try:
        content = body["choices"][0]["message"]["content"]
        items = json.loads(content)
        assert isinstance(items, list)
    except Exception as exc:
        raise ExportError(f"malformed chat reply: {exc}") from exc
    out = []
    for item in items:
        if not isinstance(item, dict) or "text" not in item:
            raise ExportError(f"malformed candidate object: {item!r}")
        sense = item.get("sense")
        out.append({
            "text": str(item["text"]),
            "kind": "disambiguation" if sense else "expansion",
            "mode_tag": str(sense) if sense else None,
            "visual": bool(item.get("visual", True)),
        })
    return out


def build_candidate_pool(job: ExportJob, fetch=fetch_sense_candidates) -> list:
    """Assemble per-class raw candidate lists.

    Each class gets its bare name, then (flag-gated) the chat model's sense
    candidates verbatim, then local template rewordings. `fetch` is
    injectable for tests.
    """
    classes = []
    for class_id, name in enumerate(job.class_names):
        cands = [{"text": name, "kind": "bare", "mode_tag": None, "visual": True}]
        if job.disambiguation:
            cands.extend(fetch(job, name))
        if job.expansion:
            for template in job.templates:
                cands.append({"text": template.format(name=name), "kind": "expansion",
                              "mode_tag": None, "visual": True})
        classes.append({"class_id": class_id, "class_name": name, "candidates": cands})
    return classes


def write_candidate_pool(path, classes) -> None:
    doc = {"stage": "candidates", "classes": classes}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_candidate_pool(path) -> list:
    """Read back a pool this tool wrote (to embed its texts later)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("stage") != "candidates":
        raise ExportError(f"{path} is not a candidate pool (stage={doc.get('stage')!r})")
    return doc["classes"]
