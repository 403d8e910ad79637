"""Pick diverse few-shot exemplars by clustering question embeddings.

K-means uses farthest-point initialisation from a seeded start, Lloyd
iterations until the assignment stops changing (at most 100), and repairs
an empty cluster by moving into it the point farthest from its own centroid.
One exemplar per cluster is kept: the member nearest the centroid, ties to
the lowest id.

Precomputed vector file::

    <dimension> <count>
    <id> <v1> <v2> ... <v_dimension>
    ...
"""

from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

MAX_ITER = 100
DEFAULT_K = 4


class PoolTooSmall(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class ProviderError(RuntimeError):
    pass


class LeakageError(AssertionError):
    def __init__(self, ids: Iterable[str]):
        self.ids = sorted(ids)
        super().__init__(f"test items in exemplar pool: {', '.join(self.ids)}")


@dataclass(frozen=True)
class Exemplar:
    id: str
    nlq: str
    query_kg1: str
    query_kg2: str
    er2: tuple = ()

    def to_json(self) -> dict:
        from .prompts import er2_pairs

        return {
            "id": self.id,
            "nlq": self.nlq,
            "query_kg1": self.query_kg1,
            "query_kg2": self.query_kg2,
            "er2": [[src, list(tgts)] for src, tgts in er2_pairs(self.er2)],
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "Exemplar":
        from .prompts import er2_pairs

        return cls(d["id"], d["nlq"], d["query_kg1"], d["query_kg2"], tuple(er2_pairs(d.get("er2") or ())))


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    source_text: str = ""

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.values):
            raise ProviderError("embedding contains non-finite values")

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ClusterModel:
    k: int
    centroids: tuple[tuple[float, ...], ...]
    assignments: tuple[int, ...]
    seed: int
    iterations: int
    distortion_history: tuple[float, ...] = field(default=())

    def members(self, cluster: int) -> list[int]:
        return [i for i, c in enumerate(self.assignments) if c == cluster]


class EmbeddingProvider(Protocol):
    def embed(self, texts: Sequence[str], ids: Sequence[str] | None = None) -> list[list[float]]: ...


class FileEmbeddingProvider:
    """Vectors read from a precomputed file, looked up by item id."""

    def __init__(self, path: str | Path, expected_dim: int | None = None):
        self.path = Path(path)
        self.vectors: dict[str, list[float]] = {}
        lines = [ln for ln in self.path.read_text(encoding="utf-8").splitlines() if ln.strip()]
        if not lines:
            raise ProviderError(f"{self.path}: empty vector file")
        try:
            dim, count = (int(x) for x in lines[0].split())
        except ValueError:
            raise ProviderError(f"{self.path}: header must be '<dimension> <count>'") from None
        if expected_dim is not None and dim != expected_dim:
            raise DimensionMismatch(f"{self.path}: dimension {dim}, pool uses {expected_dim}")
        for n, line in enumerate(lines[1:], 2):
            parts = line.split()
            if len(parts) - 1 != dim:
                raise DimensionMismatch(f"{self.path}:{n}: {len(parts) - 1} values, header says {dim}")
            try:
                self.vectors[parts[0]] = [float(x) for x in parts[1:]]
            except ValueError:
                raise ProviderError(f"{self.path}:{n}: non-numeric value") from None
        if len(self.vectors) != count:
            raise ProviderError(f"{self.path}: header says {count} vectors, found {len(self.vectors)}")
        self.dim = dim

    def embed(self, texts, ids=None):
        if ids is None:
            raise ProviderError("file vectors are looked up by id; pass ids")
        missing = [i for i in ids if i not in self.vectors]
        if missing:
            raise ProviderError(f"no precomputed vector for {', '.join(missing[:5])}")
        return [list(self.vectors[i]) for i in ids]


def write_vector_file(path: str | Path, ids: Sequence[str], vectors: Sequence[Sequence[float]]) -> None:
    dims = {len(v) for v in vectors}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed dimensions {sorted(dims)}")
    dim = dims.pop() if dims else 0
    rows = [f"{dim} {len(ids)}"] + [" ".join([i] + [repr(float(x)) for x in v]) for i, v in zip(ids, vectors)]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


_WORD_RE = re.compile(r"\w+", re.UNICODE)


class HashingEmbeddingProvider:
    """Bag-of-words hashed into a fixed number of signed buckets, L2-normalised.

    Offline and deterministic; useful when no sentence model is installed.
    """

    def __init__(self, dim: int = 64):
        self.dim = dim

    def embed(self, texts, ids=None):
        out = []
        for text in texts:
            v = [0.0] * self.dim
            for word in _WORD_RE.findall(text.lower()):
                h = hashlib.sha1(word.encode("utf-8")).digest()
                idx = int.from_bytes(h[:4], "big") % self.dim
                v[idx] += 1.0 if h[4] & 1 else -1.0
            norm = math.sqrt(sum(x * x for x in v))
            out.append([x / norm for x in v] if norm else v)
        return out


class SentenceTransformerProvider:
    """Sentence-BERT embeddings via the ``sentence-transformers`` package (loaded lazily)."""

    def __init__(self, model_name: str = "all-MiniLM-L6-v2"):
        self.model_name = model_name
        self._model = None

    def embed(self, texts, ids=None):
        if self._model is None:
            try:
                from sentence_transformers import SentenceTransformer
            except ImportError as exc:
                raise ProviderError("sentence-transformers is not installed") from exc
            try:
                self._model = SentenceTransformer(self.model_name)
            except Exception as exc:  # download or load failure
                raise ProviderError(f"cannot load {self.model_name}: {exc}") from exc
        return [list(map(float, v)) for v in self._model.encode(list(texts))]


def embed_texts(
    texts: Sequence[str],
    provider: EmbeddingProvider,
    ids: Sequence[str] | None = None,
) -> list[EmbeddingVector]:
    if not texts:
        raise ValueError("nothing to embed")
    raw = provider.embed(list(texts), list(ids) if ids is not None else None)
    if len(raw) != len(texts):
        raise ProviderError(f"provider returned {len(raw)} vectors for {len(texts)} texts")
    dims = {len(v) for v in raw}
    if len(dims) != 1:
        raise DimensionMismatch(f"mixed dimensions {sorted(dims)}")
    return [EmbeddingVector(tuple(float(x) for x in v), t) for v, t in zip(raw, texts)]


def _as_matrix(vectors) -> np.ndarray:
    rows = [v.values if isinstance(v, EmbeddingVector) else v for v in vectors]
    dims = {len(r) for r in rows}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed dimensions {sorted(dims)}")
    x = np.asarray(rows, dtype=float)
    if x.ndim != 2:
        x = x.reshape(len(rows), -1)
    if not np.all(np.isfinite(x)):
        raise ProviderError("vectors contain non-finite values")
    return x


def _sq_dists(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _farthest_point_init(x: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    n = len(x)
    chosen = [int(rng.integers(n))]
    best = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        cand = best.copy()
        cand[chosen] = -1.0
        nxt = int(np.argmax(cand))  # argmax keeps the lowest index on ties
        chosen.append(nxt)
        best = np.minimum(best, ((x - x[nxt]) ** 2).sum(axis=1))
    return chosen


def _distortion(x, centroids, assign) -> float:
    return float(((x - centroids[assign]) ** 2).sum())


def _repair_empty(x, centroids, assign, k) -> np.ndarray:
    assign = assign.copy()
    for c in range(k):
        if np.any(assign == c):
            continue
        counts = np.bincount(assign, minlength=k)
        own = ((x - centroids[assign]) ** 2).sum(axis=1)
        own[counts[assign] <= 1] = -1.0  # never empty another cluster
        victim = int(np.argmax(own))
        assign[victim] = c
        centroids[c] = x[victim]
    return assign


def cluster_kmeans(vectors, k: int = DEFAULT_K, seed: int = 0, *, max_iter: int = MAX_ITER) -> ClusterModel:
    x = _as_matrix(vectors)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(x) < k:
        raise PoolTooSmall(f"{len(x)} vectors for k={k}")
    rng = np.random.default_rng(seed)
    centroids = x[_farthest_point_init(x, k, rng)].copy()
    assign = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        new = np.argmin(_sq_dists(x, centroids), axis=1)
        new = _repair_empty(x, centroids, new, k)
        if assign is not None and np.array_equal(new, assign):
            it -= 1
            break
        assign = new
        for c in range(k):
            centroids[c] = x[assign == c].mean(axis=0)
        history.append(_distortion(x, centroids, assign))
    return ClusterModel(
        k=k,
        centroids=tuple(tuple(float(v) for v in row) for row in centroids),
        assignments=tuple(int(a) for a in assign),
        seed=seed,
        iterations=it,
        distortion_history=tuple(history),
    )


def normalize_rows(vectors) -> list[tuple[float, ...]]:
    """Unit-length rows, so Euclidean k-means orders points like cosine distance."""
    x = _as_matrix(vectors)
    norms = np.linalg.norm(x, axis=1)
    norms[norms == 0] = 1.0
    return [tuple(float(v) for v in row) for row in x / norms[:, None]]


def assert_no_leakage(items: Iterable, test_ids: Iterable[str]) -> None:
    test = set(test_ids)
    leaked = {getattr(i, "id", i) for i in items} & test
    if leaked:
        raise LeakageError(leaked)


def select_exemplars(
    pool: Sequence[Exemplar],
    vectors: Sequence | Mapping[str, Sequence[float]],
    k: int = DEFAULT_K,
    test_ids: Iterable[str] = (),
    seed: int = 0,
    *,
    metric: str = "euclidean",
    on_leak: str = "exclude",
) -> list[Exemplar]:
    """One exemplar per cluster, ordered by cluster index.

    ``vectors`` is either aligned with ``pool`` or keyed by exemplar id.
    ``on_leak="raise"`` refuses a pool holding test ids instead of dropping them.
    """
    test = set(test_ids)
    if isinstance(vectors, Mapping):
        vec_of = {e.id: vectors[e.id] for e in pool}
    else:
        if len(vectors) != len(pool):
            raise ValueError(f"{len(vectors)} vectors for {len(pool)} pool items")
        vec_of = {e.id: v for e, v in zip(pool, vectors)}
    if on_leak == "raise":
        assert_no_leakage(pool, test)
    kept = sorted((e for e in pool if e.id not in test), key=lambda e: e.id)
    if len({e.id for e in kept}) != len(kept):
        raise ValueError("duplicate exemplar ids in pool")
    if len(kept) < k:
        raise PoolTooSmall(f"{len(kept)} usable pool items for k={k}")
    x = [vec_of[e.id] for e in kept]
    if metric == "cosine":
        x = normalize_rows(x)
    elif metric != "euclidean":
        raise ValueError(f"unknown metric {metric!r}")
    model = cluster_kmeans(x, k, seed)
    mat = _as_matrix(x)
    chosen = []
    for c in range(k):
        members = model.members(c)
        centroid = np.asarray(model.centroids[c])
        d = ((mat[members] - centroid) ** 2).sum(axis=1)
        best = min(range(len(members)), key=lambda j: (d[j], kept[members[j]].id))
        chosen.append(kept[members[best]])
    assert_no_leakage(chosen, test)
    return chosen


def exemplars_from_items(items: Iterable, source: str, target: str, direction_key: str | None = None) -> list[Exemplar]:
    """Exemplars from benchmark-shaped items that hold queries for both KGs."""
    out = []
    for it in items:
        q = it.queries
        if source in q and target in q:
            er2 = ()
            if direction_key and getattr(it, "er2", None):
                er2 = tuple(it.er2.get(direction_key) or ())
            out.append(Exemplar(it.id, it.nlq, q[source], q[target], er2))
    return out
