"""Reference implementations used to check package code; no package imports."""

from __future__ import annotations

import itertools
from collections import Counter
from functools import lru_cache


# -- exhaustive k-partition --------------------------------------------------

def _sse(points):
    n = len(points)
    dim = len(points[0])
    mean = [sum(p[d] for p in points) / n for d in range(dim)]
    return sum((p[d] - mean[d]) ** 2 for p in points for d in range(dim))


def optimal_partition(points, k):
    """Minimum within-cluster sum of squares over all partitions into k non-empty parts.

    Returns (cost, list of frozensets of indices).
    """
    n = len(points)
    full = (1 << n) - 1
    cost = [0.0] * (full + 1)
    for mask in range(1, full + 1):
        cost[mask] = _sse([points[i] for i in range(n) if mask >> i & 1])

    @lru_cache(maxsize=None)
    def best(mask, parts):
        if parts == 1:
            return cost[mask], (mask,)
        low = mask & -mask
        rest = mask ^ low
        out = (float("inf"), ())
        # the part holding the lowest remaining point: low plus any subset of rest
        sub = rest
        while True:
            part = sub | low
            remaining = mask ^ part
            if remaining and bin(remaining).count("1") >= parts - 1:
                c, tail = best(remaining, parts - 1)
                if cost[part] + c < out[0]:
                    out = (cost[part] + c, (part,) + tail)
            if sub == 0:
                break
            sub = (sub - 1) & rest
        return out

    total, masks = best(full, k)
    return total, [frozenset(i for i in range(n) if m >> i & 1) for m in masks]


# -- brute-force result comparison -------------------------------------------

def _bnode_free_equal(gold, cand):
    return Counter(gold) == Counter(cand)


def _rows_with_bnode_map(rows, mapping):
    return [tuple(mapping.get(v, v) for v in row) for row in rows]


def _bnodes(rows):
    return sorted({v for row in rows for v in row if v[0] == "bnode"})


def results_equal(gold_vars, gold_rows, cand_vars, cand_rows, ordered=False):
    """Exact-match by brute force.

    Rows are tuples of already-normalized hashable terms ``(kind, value, ...)``
    in variable order.  Every column permutation is tried; blank nodes may be
    renamed by any bijection; rows compare as multisets unless ``ordered``.
    """
    if len(gold_vars) != len(cand_vars):
        return False
    if len(gold_rows) != len(cand_rows):
        return False
    gb = _bnodes(gold_rows)
    for perm in itertools.permutations(range(len(gold_vars))):
        permuted = [tuple(row[j] for j in perm) for row in cand_rows]
        cb = _bnodes(permuted)
        if len(cb) != len(gb):
            continue
        for image in itertools.permutations(gb):
            mapping = dict(zip(cb, image))
            renamed = _rows_with_bnode_map(permuted, mapping)
            if ordered:
                if renamed == list(gold_rows):
                    return True
            elif _bnode_free_equal(gold_rows, renamed):
                return True
    return False


# -- label co-occurrence -----------------------------------------------------

def cooccurrence_tally(label_sets, categories):
    """Quadratic tally: cell (a, b) counts label sets holding both a and b."""
    out = {a: {b: 0 for b in categories} for a in categories}
    for labels in label_sets:
        for a in categories:
            for b in categories:
                if a in labels and b in labels:
                    out[a][b] += 1
    return out
