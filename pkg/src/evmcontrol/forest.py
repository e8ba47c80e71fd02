"""Random forest of CART classification trees with out-of-bag error.

Each tree is grown on a bootstrap sample (n draws with replacement); at
every node ``mtry`` features are drawn at random and the best Gini split
among them is taken.  Nodes stop splitting when pure, smaller than
2 * ``min_node``, or when no candidate split improves impurity; candidate
thresholds always leave at least ``min_node`` rows on each side, so
impure leaves have at least ``min_node`` rows.  The forest predicts by
majority vote across trees; the reported probability is the fraction of
tree votes.  Out-of-bag rows (never drawn into a tree's bootstrap) give
the internal error estimate.

Tree RNG streams are derived per tree index, so fits are deterministic
and trees could be grown in parallel without changing the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .rng import generator


@dataclass(frozen=True)
class _Tree:
    feature: np.ndarray    # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    vote: np.ndarray       # majority class per node
    counts: np.ndarray     # (nodes, 2) class counts
    bootstrap: np.ndarray  # training row indices drawn for this tree


def _best_split(Xf: np.ndarray, y01: np.ndarray, min_node: int):
    """Best Gini split of one feature column; returns (score, threshold)."""
    n = len(y01)
    order = np.argsort(Xf, kind="stable")
    xs = Xf[order]
    ys = y01[order]
    pos = np.cumsum(ys)
    total_pos = pos[-1]
    ks = np.arange(1, n)  # split size of the left block
    valid = (xs[1:] != xs[:-1]) & (ks >= min_node) & (n - ks >= min_node)
    if not valid.any():
        return None
    ks = ks[valid]
    left_pos = pos[:-1][valid]
    right_pos = total_pos - left_pos
    left_n = ks
    right_n = n - ks
    # minimize total weighted Gini == maximize sum of squared class counts / size
    score = (left_pos**2 + (left_n - left_pos) ** 2) / left_n + (
        right_pos**2 + (right_n - right_pos) ** 2
    ) / right_n
    best = int(np.argmax(score))
    parent_score = (total_pos**2 + (n - total_pos) ** 2) / n
    if score[best] <= parent_score + 1e-12:
        return None
    k = ks[best]
    threshold = 0.5 * (xs[k - 1] + xs[k])
    return float(score[best]), threshold


def _grow_tree(X: np.ndarray, y01: np.ndarray, rows: np.ndarray, mtry: int, min_node: int, rng):
    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    vote: list[int] = []
    counts: list[tuple[int, int]] = []
    n_features = X.shape[1]

    def new_node(idx: np.ndarray) -> int:
        node = len(feature)
        n_pos = int(y01[idx].sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((len(idx) - n_pos, n_pos))
        vote.append(int(n_pos * 2 > len(idx)))
        return node

    stack = [(new_node(rows), rows)]
    while stack:
        node, idx = stack.pop()
        n = len(idx)
        n_pos = counts[node][1]
        if n < 2 * min_node or n_pos == 0 or n_pos == n:
            continue
        candidates = rng.permutation(n_features)[:mtry]
        best = None
        for f in candidates:
            found = _best_split(X[idx, f], y01[idx], min_node)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], int(f), found[1])
        if best is None:
            continue
        _, f, thr = best
        go_left = X[idx, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left_id = new_node(idx[go_left])
        right_id = new_node(idx[~go_left])
        left[node] = left_id
        right[node] = right_id
        stack.append((left_id, idx[go_left]))
        stack.append((right_id, idx[~go_left]))

    return _Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        vote=np.asarray(vote, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64),
        bootstrap=rows.copy(),
    )


def _tree_votes(tree: _Tree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    active = tree.feature[node] >= 0
    while active.any():
        idx = np.flatnonzero(active)
        nd = node[idx]
        go_left = X[idx, tree.feature[nd]] <= tree.threshold[nd]
        node[idx] = np.where(go_left, tree.left[nd], tree.right[nd])
        active = tree.feature[node] >= 0
    return tree.vote[node]


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[_Tree, ...]
    ntree: int
    mtry: int
    min_node: int
    oob_error: float
    oob_coverage: float  # fraction of training rows with at least one OOB vote


def forest_fit(X, y, ntree: int = 500, mtry: int = 1, min_node: int = 5, seed: int = 0) -> ForestModel:
    X = np.asarray(X, dtype=float)
    y01 = np.asarray(y).astype(bool).astype(np.int64)
    n = len(y01)
    if n < 2:
        raise ValidationError("forest training needs at least 2 rows")
    if ntree < 1:
        raise ValidationError("ntree must be >= 1")
    if not 1 <= mtry <= X.shape[1]:
        raise ValidationError("mtry must lie in [1, n_features]")
    trees = []
    oob_votes = np.zeros((n, 2), dtype=np.int64)
    for tree_ix in range(ntree):
        rng = generator(seed, 0xF03E57, tree_ix)
        rows = rng.integers(0, n, size=n)
        tree = _grow_tree(X, y01, rows, mtry, min_node, rng)
        trees.append(tree)
        oob = np.setdiff1d(np.arange(n), rows, assume_unique=False)
        if len(oob):
            votes = _tree_votes(tree, X[oob])
            oob_votes[oob, votes] += 1
    covered = oob_votes.sum(axis=1) > 0
    if covered.any():
        oob_pred = oob_votes.argmax(axis=1)
        oob_error = float((oob_pred[covered] != y01[covered]).mean())
    else:
        oob_error = float("nan")
    return ForestModel(
        trees=tuple(trees),
        ntree=ntree,
        mtry=mtry,
        min_node=min_node,
        oob_error=oob_error,
        oob_coverage=float(covered.mean()),
    )


def forest_predict(model: ForestModel, X) -> np.ndarray:
    """Vote-fraction probabilities, columns [P(class 0), P(class 1)]."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pos = np.zeros(len(X))
    for tree in model.trees:
        pos += _tree_votes(tree, X)
    pos /= model.ntree
    return np.column_stack([1.0 - pos, pos])
