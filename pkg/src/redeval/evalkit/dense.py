"""Dense retrieval: brute-force cosine over an embedding index."""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError


class EmbeddingIndex:
    """Row-normalized embedding matrix aligned with chunk ids."""

    def __init__(self, ids, vectors, model_id: str | None = None):
        self.ids = list(ids)
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate ids in embedding index")
        models = {v.model_id for v in vectors if hasattr(v, "model_id")}
        if model_id is None and models:
            model_id = sorted(models)[0]
        if models and models != {model_id}:
            raise ValidationError(f"mixed embedding models in index: {sorted(models)}")
        self.model_id = model_id
        rows = [list(v.values) if hasattr(v, "values") else list(v) for v in vectors]
        if not rows or len(rows) != len(self.ids):
            raise ValidationError("embedding matrix does not align with ids")
        if len({len(r) for r in rows}) != 1:
            raise ValidationError("inconsistent embedding dimensions")
        matrix = np.asarray(rows, dtype=float)
        if matrix.ndim != 2:
            raise ValidationError("embeddings must be flat vectors")
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise ValidationError("zero-norm embedding in index")
        self.matrix = matrix / norms
        self.dim = matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def search(self, query_vector, k: int = 10) -> list[tuple[str, float]]:
        """Top-k ids by cosine, descending, ties by id. k beyond the corpus
        just returns everything."""
        if k < 1:
            raise ValidationError("k must be at least 1")
        query = np.asarray(
            list(query_vector.values)
            if hasattr(query_vector, "values")
            else query_vector,
            dtype=float,
        )
        if query.shape != (self.dim,):
            raise ValidationError(
                f"query dimension {query.shape} does not match index dim {self.dim}"
            )
        norm = np.linalg.norm(query)
        if norm == 0.0:
            raise ValidationError("zero-norm query embedding")
        sims = self.matrix @ (query / norm)
        order = sorted(range(len(self.ids)), key=lambda i: (-sims[i], self.ids[i]))
        return [(self.ids[i], float(sims[i])) for i in order[:k]]


def dense_search(query_text: str, index: EmbeddingIndex, gateway, k: int = 10):
    """Embed the query through the gateway and search the index."""
    vector = gateway.embed([query_text], model_id=index.model_id)[0]
    return index.search(vector, k)
