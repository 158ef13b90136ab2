"""Text embedding export through a pretrained transformer encoder.

Mean-pools the last hidden state under the attention mask and L2-normalizes,
the usual recipe for turning an encoder into a sentence embedder. Vectors
are written in the engine's tab-separated format with a `#dim=` header at
32-bit float precision.
"""

import numpy as np

from .job import ExportError, ExportJob


class TextEncoder:
    """Thin wrapper over transformers AutoModel/AutoTokenizer."""

    def __init__(self, model_name_or_path: str):
        if not model_name_or_path:
            raise ExportError("encoder model is not configured")
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer

            self._torch = torch
            self.tokenizer = AutoTokenizer.from_pretrained(model_name_or_path)
            self.model = AutoModel.from_pretrained(model_name_or_path)
        except Exception as exc:
            raise ExportError(f"loading encoder {model_name_or_path!r} failed: {exc}") from exc
        self.model.eval()

    @property
    def dim(self) -> int:
        return int(self.model.config.hidden_size)

    def encode(self, texts, batch_size: int = 32) -> np.ndarray:
        """(n, dim) unit-norm float32 rows, one per input text, order kept."""
        texts = list(texts)
        if not texts:
            raise ExportError("no texts to encode")
        chunks = []
        torch = self._torch
        with torch.no_grad():
            for start in range(0, len(texts), batch_size):
                batch = texts[start:start + batch_size]
                try:
                    enc = self.tokenizer(batch, padding=True, truncation=True,
                                         return_tensors="pt")
                    hidden = self.model(**enc).last_hidden_state
                except Exception as exc:
                    raise ExportError(f"encoding failed: {exc}") from exc
                mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
                summed = (hidden * mask).sum(dim=1)
                counts = mask.sum(dim=1).clamp(min=1)
                chunks.append((summed / counts).cpu().numpy())
        out = np.concatenate(chunks, axis=0).astype(np.float32)
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        if np.any(norms == 0.0) or not np.all(np.isfinite(out)):
            raise ExportError("encoder produced a zero or non-finite embedding")
        return out / norms


def write_embedding_file(path, dim: int, records) -> None:
    """Engine format: `#dim=<d>` header, then `key<TAB>class_id<TAB>floats`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim={dim}\n")
        for key, cid, vec in records:
            if "\t" in key or "\n" in key:
                raise ExportError(f"prompt key may not contain tabs/newlines: {key!r}")
            v = np.asarray(vec, dtype=np.float32)
            if v.shape != (dim,):
                raise ExportError(f"vector for {key!r} has shape {v.shape}, expected ({dim},)")
            floats = " ".join(f"{x:.9g}" for x in v)
            fh.write(f"{key}\t{int(cid)}\t{floats}\n")


def export_embeddings(job: ExportJob, prompts, out_path, encoder: TextEncoder | None = None) -> int:
    """Embed (text, class_id) pairs and write the embedding file.

    Duplicate texts keep their first class_id (file keys are exact-match
    unique). Returns the number of records written.
    """
    seen = {}
    order = []
    for text, cid in prompts:
        if text not in seen:
            seen[text] = int(cid)
            order.append(text)
    if not order:
        raise ExportError("no prompts to embed")
    encoder = encoder or TextEncoder(job.encoder_model)
    vectors = encoder.encode(order, batch_size=job.batch_size)
    records = [(text, seen[text], vectors[i]) for i, text in enumerate(order)]
    write_embedding_file(out_path, encoder.dim, records)
    return len(records)


def pool_prompts(classes) -> list:
    """(text, class_id) pairs for every candidate in a pool, file order."""
    out = []
    for entry in classes:
        for cand in entry["candidates"]:
            out.append((cand["text"], int(entry["class_id"])))
    return out
