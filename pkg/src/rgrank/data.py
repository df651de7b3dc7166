"""Implicit-feedback interaction data: loading, filtering, splitting, targets.

The pipeline is ``load_interactions -> kcore_filter -> split_per_user ->
build_matrix -> build_targets``.  Raw context/object tokens are re-indexed
to dense integer ids in first-appearance order; the original tokens are
kept as labels so the mapping can be persisted and sets compared across
re-indexings.
"""

from __future__ import annotations

import gzip
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from rgrank.errors import EmptyDatasetError, ParseError


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class InteractionSet:
    """Deduplicated (context, object) pairs over dense id spaces."""

    contexts: np.ndarray
    objects: np.ndarray
    n_contexts: int
    n_objects: int
    context_labels: tuple
    object_labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "contexts", _freeze(np.asarray(self.contexts, dtype=np.int64)))
        object.__setattr__(self, "objects", _freeze(np.asarray(self.objects, dtype=np.int64)))
        if self.contexts.shape != self.objects.shape:
            raise ValueError("contexts and objects must have equal length")
        if len(self.context_labels) != self.n_contexts or len(self.object_labels) != self.n_objects:
            raise ValueError("label count must match id-space size")
        if self.size:
            if self.contexts.min() < 0 or self.contexts.max() >= self.n_contexts:
                raise ValueError("context id out of range")
            if self.objects.min() < 0 or self.objects.max() >= self.n_objects:
                raise ValueError("object id out of range")
            key = self.contexts * self.n_objects + self.objects
            if np.unique(key).size != key.size:
                raise ValueError("duplicate (context, object) pair")

    @property
    def size(self):
        return int(self.contexts.size)

    @classmethod
    def from_entries(cls, pairs, n_contexts=None, n_objects=None,
                     context_labels=None, object_labels=None):
        pairs = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs,
                           dtype=np.int64).reshape(-1, 2)
        m = n_contexts if n_contexts is not None else (int(pairs[:, 0].max()) + 1 if pairs.size else 0)
        n = n_objects if n_objects is not None else (int(pairs[:, 1].max()) + 1 if pairs.size else 0)
        if context_labels is None:
            context_labels = tuple(str(i) for i in range(m))
        if object_labels is None:
            object_labels = tuple(str(i) for i in range(n))
        return cls(pairs[:, 0], pairs[:, 1], m, n, tuple(context_labels), tuple(object_labels))

    def labeled_pairs(self):
        return {(self.context_labels[c], self.object_labels[o])
                for c, o in zip(self.contexts, self.objects)}

    def __eq__(self, other):
        if not isinstance(other, InteractionSet):
            return NotImplemented
        return (self.n_contexts == other.n_contexts
                and self.n_objects == other.n_objects
                and self.labeled_pairs() == other.labeled_pairs())


@dataclass(frozen=True)
class InteractionMatrix:
    """CSR view of a training set: sorted object ids per context."""

    indptr: np.ndarray
    indices: np.ndarray
    n_contexts: int
    n_objects: int

    def __post_init__(self):
        object.__setattr__(self, "indptr", _freeze(np.asarray(self.indptr, dtype=np.int64)))
        object.__setattr__(self, "indices", _freeze(np.asarray(self.indices, dtype=np.int64)))

    @property
    def degrees(self):
        return np.diff(self.indptr)

    @property
    def nnz(self):
        return int(self.indices.size)

    def row(self, x):
        return self.indices[self.indptr[x]:self.indptr[x + 1]]

    def entry_contexts(self):
        """Context id of every stored entry, aligned with ``indices``."""
        cached = getattr(self, "_entry_ctx", None)
        if cached is None:
            cached = _freeze(np.repeat(np.arange(self.n_contexts), self.degrees))
            object.__setattr__(self, "_entry_ctx", cached)
        return cached

    def transposed(self):
        """CSC-style layout: (indptr over objects, context ids per object)."""
        cached = getattr(self, "_transposed", None)
        if cached is None:
            ctx = self.entry_contexts()
            order = np.lexsort((ctx, self.indices))
            tind = ctx[order]
            tptr = np.zeros(self.n_objects + 1, dtype=np.int64)
            np.add.at(tptr, self.indices + 1, 1)
            cached = (_freeze(np.cumsum(tptr)), _freeze(tind), _freeze(order))
            object.__setattr__(self, "_transposed", cached)
        return cached


@dataclass(frozen=True)
class SplitBundle:
    """Per-context train/valid/test partition of an interaction set."""

    train: InteractionSet
    valid: InteractionSet
    test: InteractionSet
    seed: int
    train_only_contexts: int = 0


@dataclass(frozen=True)
class TargetVariant:
    """Which weighting scheme backs the squared-form targets.

    kind 'full': W = |I_x| everywhere, V_x = |I_x|/N.
    kind 'sampled': W = |I_x| on positives, |I_x|(n+1)/N on negatives,
        V_x = |I_x|(n+1)/N^2 (the sample-size-derived weighting).
    kind 'hyper': W = 1 on positives, alpha on negatives, V_x = beta.
    kind 'wrmf': classic weighted binary regression, W = alpha+1 on
        positives, 1 on negatives, binary targets, no interaction term.
    """

    kind: str = "full"
    n: int | None = None
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in ("full", "sampled", "hyper", "wrmf"):
            raise ValueError(f"unknown target variant {self.kind!r}")
        if self.kind == "sampled" and (self.n is None or self.n < 1):
            raise ValueError("sampled variant requires n >= 1")
        if self.kind == "hyper" and (self.alpha is None or self.alpha <= 0):
            raise ValueError("hyperparameterized variant requires alpha > 0")
        if self.kind == "wrmf" and (self.alpha is None or self.alpha < 0):
            raise ValueError("wrmf variant requires alpha >= 0")


@dataclass(frozen=True)
class TargetMatrices:
    """Per-row target values and confidence weights, stored implicitly.

    The target matrix S is never densified: each row is a constant
    ``s_neg`` plus the correction ``s_pos`` on the row's positives.
    Weights are two scalars per row (positive/negative entries).
    """

    w_pos: np.ndarray
    w_neg: np.ndarray
    v: np.ndarray
    s_pos: np.ndarray
    s_neg: np.ndarray
    n_objects: int
    variant: TargetVariant = field(default_factory=TargetVariant)

    def __post_init__(self):
        for name in ("w_pos", "w_neg", "v", "s_pos", "s_neg"):
            object.__setattr__(self, name, _freeze(np.asarray(getattr(self, name), dtype=np.float64)))
        if np.any(self.w_pos <= 0) or np.any(self.w_neg <= 0):
            raise ValueError("weights must be strictly positive")

    @property
    def n_contexts(self):
        return self.w_pos.shape[0]

    def row_weight_sums(self, degrees):
        return self.w_pos * degrees + self.w_neg * (self.n_objects - degrees)


# ---------------------------------------------------------------------------
# Loading


@dataclass(frozen=True)
class TextFormat:
    """Delimited-text layout: column indices for each role.

    ``delimiter=None`` splits on any whitespace.  With ``has_header``,
    the first line is skipped and string column names may be used in
    place of indices.
    """

    delimiter: str | None = None
    context_col: int | str = 0
    object_col: int | str = 1
    rating_col: int | str | None = None
    time_col: int | str | None = None
    has_header: bool = False


def _open_source(source):
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        raw = open(source, "rb")
    else:
        raw = source
    head = raw.read(2)
    rest = raw.read()
    data = head + rest
    if head == b"\x1f\x8b":
        data = gzip.decompress(data)
    return io.TextIOWrapper(io.BytesIO(data), encoding="utf-8")


def _resolve_col(col, header, line_no):
    if col is None or isinstance(col, int):
        return col
    if header is None:
        raise ParseError(line_no, f"column {col!r} needs a header line")
    try:
        return header.index(col)
    except ValueError:
        raise ParseError(line_no, f"column {col!r} not in header") from None


def load_interactions(source, fmt=TextFormat(), rating_threshold=None):
    """Parse delimited interactions, apply the rating threshold, re-index.

    Rows whose rating is below ``rating_threshold`` are dropped (only
    when both a rating column and a threshold are configured).
    Duplicate pairs collapse to one entry.  Raises :class:`ParseError`
    with the 1-based line number on malformed rows and
    :class:`EmptyDatasetError` if nothing survives.
    """
    text = _open_source(source)
    lines = iter(enumerate(text, start=1))
    header = None
    if fmt.has_header:
        try:
            _, first = next(lines)
        except StopIteration:
            raise EmptyDatasetError("empty input") from None
        header = first.rstrip("\n").split(fmt.delimiter)
    ccol = _resolve_col(fmt.context_col, header, 1)
    ocol = _resolve_col(fmt.object_col, header, 1)
    rcol = _resolve_col(fmt.rating_col, header, 1)

    ctx_ids, obj_ids = {}, {}
    pairs = set()
    entries = []
    for line_no, line in lines:
        line = line.strip()
        if not line:
            continue
        parts = line.split(fmt.delimiter)
        width = max(c for c in (ccol, ocol, rcol) if c is not None) + 1
        if len(parts) < width:
            raise ParseError(line_no, f"expected at least {width} columns, got {len(parts)}")
        if rcol is not None and rating_threshold is not None:
            try:
                rating = float(parts[rcol])
            except ValueError:
                raise ParseError(line_no, f"bad rating {parts[rcol]!r}") from None
            if rating < rating_threshold:
                continue
        c_tok, o_tok = parts[ccol], parts[ocol]
        c = ctx_ids.setdefault(c_tok, len(ctx_ids))
        o = obj_ids.setdefault(o_tok, len(obj_ids))
        if (c, o) not in pairs:
            pairs.add((c, o))
            entries.append((c, o))
    if not entries:
        raise EmptyDatasetError("no interactions after parsing/threshold")
    entries = np.asarray(entries, dtype=np.int64)
    return InteractionSet(entries[:, 0], entries[:, 1], len(ctx_ids), len(obj_ids),
                          tuple(ctx_ids), tuple(obj_ids))


def serialize_interactions(iset, stream_or_path):
    """Write label pairs as tab-separated text (readable by load_interactions)."""
    own = isinstance(stream_or_path, (str, bytes)) or hasattr(stream_or_path, "__fspath__")
    fh = open(stream_or_path, "w", encoding="utf-8") if own else stream_or_path
    try:
        order = np.lexsort((iset.objects, iset.contexts))
        for i in order:
            fh.write(f"{iset.context_labels[iset.contexts[i]]}\t"
                     f"{iset.object_labels[iset.objects[i]]}\n")
    finally:
        if own:
            fh.close()


def save_id_map(path, iset):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"contexts": list(iset.context_labels),
                   "objects": list(iset.object_labels)}, fh)


def load_id_map(path):
    with open(path, encoding="utf-8") as fh:
        m = json.load(fh)
    return tuple(m["contexts"]), tuple(m["objects"])


# ---------------------------------------------------------------------------
# Filtering and splitting


def kcore_filter(iset, min_degree):
    """Iterated degree peeling to the maximal subset where every remaining
    context and object has at least ``min_degree`` interactions.

    Ids are re-indexed densely (relative order preserved); may return an
    empty set.
    """
    if min_degree < 1:
        raise ValueError("min_degree must be >= 1")
    c, o = iset.contexts.copy(), iset.objects.copy()
    while c.size:
        cdeg = np.bincount(c, minlength=iset.n_contexts)
        odeg = np.bincount(o, minlength=iset.n_objects)
        keep = (cdeg[c] >= min_degree) & (odeg[o] >= min_degree)
        if keep.all():
            break
        c, o = c[keep], o[keep]
    ctx_keep = np.unique(c)
    obj_keep = np.unique(o)
    cmap = np.full(iset.n_contexts, -1, dtype=np.int64)
    omap = np.full(iset.n_objects, -1, dtype=np.int64)
    cmap[ctx_keep] = np.arange(ctx_keep.size)
    omap[obj_keep] = np.arange(obj_keep.size)
    return InteractionSet(
        cmap[c], omap[o], int(ctx_keep.size), int(obj_keep.size),
        tuple(iset.context_labels[i] for i in ctx_keep),
        tuple(iset.object_labels[i] for i in obj_keep),
    )


def split_per_user(iset, ratios=(0.8, 0.1, 0.1), seed=0, small_context_policy="train"):
    """Seeded per-context split into train/valid/test.

    Valid and test receive ``floor(ratio * count)`` interactions each,
    with a minimum of one when the context has at least three; the
    remainder goes to train.  Contexts with fewer than three
    interactions go entirely to train (counted in the bundle metadata)
    or raise, per ``small_context_policy``.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three positive numbers summing to 1")
    if small_context_policy not in ("train", "error"):
        raise ValueError("small_context_policy must be 'train' or 'error'")

    rng = np.random.default_rng(seed)
    order = np.argsort(iset.contexts, kind="stable")
    counts = np.bincount(iset.contexts, minlength=iset.n_contexts)
    starts = np.concatenate([[0], np.cumsum(counts)])
    buckets = {"train": [], "valid": [], "test": []}
    small = 0
    for x in range(iset.n_contexts):
        idx = order[starts[x]:starts[x + 1]]
        c = idx.size
        if c == 0:
            continue
        idx = idx[rng.permutation(c)]
        if c < 3:
            if small_context_policy == "error":
                raise ValueError(f"context {x} has only {c} interactions")
            small += 1
            buckets["train"].append(idx)
            continue
        n_valid = max(1, math.floor(ratios[1] * c))
        n_test = max(1, math.floor(ratios[2] * c))
        n_train = c - n_valid - n_test
        buckets["train"].append(idx[:n_train])
        buckets["valid"].append(idx[n_train:n_train + n_valid])
        buckets["test"].append(idx[n_train + n_valid:])

    def subset(name):
        picked = (np.concatenate(buckets[name]) if buckets[name]
                  else np.empty(0, dtype=np.int64))
        return InteractionSet(iset.contexts[picked], iset.objects[picked],
                              iset.n_contexts, iset.n_objects,
                              iset.context_labels, iset.object_labels)

    return SplitBundle(subset("train"), subset("valid"), subset("test"),
                       seed=seed, train_only_contexts=small)


# ---------------------------------------------------------------------------
# Matrix and targets


def build_matrix(train):
    """Sorted CSR layout of a non-empty interaction set."""
    if train.size == 0:
        raise EmptyDatasetError("cannot build a matrix from an empty set")
    order = np.lexsort((train.objects, train.contexts))
    indices = train.objects[order]
    indptr = np.zeros(train.n_contexts + 1, dtype=np.int64)
    np.add.at(indptr, train.contexts + 1, 1)
    return InteractionMatrix(np.cumsum(indptr), indices,
                             train.n_contexts, train.n_objects)


def build_targets(matrix, variant=TargetVariant()):
    """Derive the squared-form target/weight structure for a variant.

    The target row is ``s_neg = -1`` everywhere except the positives,
    where it is ``N / |I_x| - 1`` (so the mean of S+1 over a row is 1).
    """
    d = matrix.degrees.astype(np.float64)
    n = float(matrix.n_objects)
    zero = np.where(d == 0)[0]
    if zero.size:
        raise ZeroDivisionError(
            f"context {int(zero[0])} has zero positives; cannot form N/|I_x|")
    s_pos = n / d - 1.0
    s_neg = np.full_like(d, -1.0)
    if variant.kind == "full":
        w_pos, w_neg, v = d, d.copy(), d / n
    elif variant.kind == "sampled":
        w_pos = d
        w_neg = d * (variant.n + 1) / n
        v = d * (variant.n + 1) / n**2
    elif variant.kind == "hyper":
        w_pos = np.ones_like(d)
        w_neg = np.full_like(d, variant.alpha)
        v = np.full_like(d, 0.0 if variant.beta is None else variant.beta)
    elif variant.kind == "wrmf":
        w_pos = np.full_like(d, variant.alpha + 1.0)
        w_neg = np.ones_like(d)
        v = np.zeros_like(d)
        s_pos = np.ones_like(d)
        s_neg = np.zeros_like(d)
    else:  # pragma: no cover - TargetVariant validates kinds
        raise ValueError(variant.kind)
    return TargetMatrices(w_pos, w_neg, v, s_pos, s_neg, matrix.n_objects, variant)


# ---------------------------------------------------------------------------
# Matrix snapshots

_MATRIX_MAGIC = b"RGM1"


def save_matrix(path, matrix, binary=False):
    """Snapshot: text form is 'M N |D|' then one sorted-id row per context;
    binary form is magic + little-endian int64 header/indptr/indices."""
    if binary:
        with open(path, "wb") as fh:
            fh.write(_MATRIX_MAGIC)
            np.asarray([matrix.n_contexts, matrix.n_objects, matrix.nnz],
                       dtype="<i8").tofile(fh)
            matrix.indptr.astype("<i8").tofile(fh)
            matrix.indices.astype("<i8").tofile(fh)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{matrix.n_contexts} {matrix.n_objects} {matrix.nnz}\n")
        for x in range(matrix.n_contexts):
            fh.write(" ".join(map(str, matrix.row(x))) + "\n")


def load_matrix(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic == _MATRIX_MAGIC:
            m, n, nnz = np.fromfile(fh, dtype="<i8", count=3)
            indptr = np.fromfile(fh, dtype="<i8", count=m + 1)
            indices = np.fromfile(fh, dtype="<i8", count=nnz)
            return InteractionMatrix(indptr, indices, int(m), int(n))
    with open(path, encoding="utf-8") as fh:
        m, n, nnz = map(int, fh.readline().split())
        rows = [np.array(fh.readline().split(), dtype=np.int64) for _ in range(m)]
    indptr = np.concatenate([[0], np.cumsum([r.size for r in rows])]).astype(np.int64)
    indices = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    if indices.size != nnz:
        raise ValueError(f"snapshot claims {nnz} entries, found {indices.size}")
    return InteractionMatrix(indptr, indices, m, n)
