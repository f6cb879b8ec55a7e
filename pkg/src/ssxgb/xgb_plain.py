"""Plaintext gradient-boosted regression trees (binary logistic objective).

This engine serves two roles: the label-bearing participant builds the
first tree of every run with it, and the test suite uses it as the
ground-truth oracle for the encrypted pipeline.  Split scoring follows the
second-order gain

    0.5 * [G_L^2/(H_L+lambda) + G_R^2/(H_R+lambda) - G^2/(H+lambda)] - gamma

with leaf weights -G/(H+lambda) scaled by the learning rate.  Rows route
LEFT iff feature value < threshold; candidate thresholds are equal-frequency
quantile cut points of the node's instances.
"""

import math
from dataclasses import dataclass

import numpy as np

LABEL_CLIP = 1e-5


class DatasetError(Exception):
    """Raised for malformed training data."""


@dataclass
class PlainDataset:
    features: np.ndarray       # M x n_features, float64
    labels: np.ndarray         # length M, values in {0, 1}
    feature_names: list

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.features.ndim != 2 or len(self.labels) != self.features.shape[0]:
            raise DatasetError("features must be M x n with matching labels")
        if self.features.shape[0] < 2:
            raise DatasetError("need at least two samples")
        if np.isnan(self.features).any() or np.isnan(self.labels).any():
            raise DatasetError("dataset contains NaN")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class BoostParams:
    eta: float = 0.1
    reg_lambda: float = 1.0
    gamma: float = 0.0
    max_depth: int = 3
    rounds: int = 5
    subsample_rows: float = 1.0
    subsample_cols: float = 1.0
    n_candidates: int = 8
    bucket_size: int | None = None

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must be in (0, 1]")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValueError("lambda and gamma must be non-negative")
        if self.n_candidates < 1:
            raise ValueError("need at least one split candidate")
        if self.bucket_size is not None and self.bucket_size < 1:
            raise ValueError("bucket size must be positive")

    def candidates_for(self, n_node: int) -> int:
        """Candidates per feature at a node: ceil(n/q) when bucketed."""
        if self.bucket_size is not None:
            return max(1, math.ceil(n_node / self.bucket_size))
        return self.n_candidates


@dataclass
class PlainNode:
    feature: int
    threshold: float
    left: object
    right: object


@dataclass
class PlainLeaf:
    weight: float


@dataclass
class PlainTree:
    root: object
    max_depth: int


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def compute_base_score(labels) -> float:
    """Initial logit F0 = log(p/(1-p)) of the clipped label mean."""
    labels = np.asarray(labels, dtype=np.float64)
    if labels.size == 0:
        raise DatasetError("cannot compute a base score from empty labels")
    p = float(np.clip(labels.mean(), LABEL_CLIP, 1.0 - LABEL_CLIP))
    return math.log(p / (1.0 - p))


def gradients(labels, preds_logit):
    """Logistic-loss first and second derivatives: g = p - y, h = p(1-p)."""
    labels = np.asarray(labels, dtype=np.float64)
    preds_logit = np.asarray(preds_logit, dtype=np.float64)
    if labels.shape != preds_logit.shape:
        raise DatasetError("labels and predictions must align")
    p = sigmoid(preds_logit)
    return p - labels, p * (1.0 - p)


def quantile_candidates(values, k: int) -> list:
    """Equal-frequency threshold candidates over one feature column.

    Picks up to k cut values at quantile positions of the sorted column,
    skipping any that would route every instance the same way.  Shared by
    the plaintext builder and the participant proposal step so both sides
    evaluate the identical candidate set.
    """
    vs = np.sort(np.asarray(values, dtype=np.float64))
    n = len(vs)
    if n < 2:
        return []
    picked = []
    for i in range(1, k + 1):
        pos = min(max(1, math.ceil(i * n / (k + 1))), n - 1)
        v = float(vs[pos])
        if v > vs[0] and (not picked or v > picked[-1]):
            picked.append(v)
    return picked


def split_gain(g_l, h_l, g_tot, h_tot, reg_lambda, gamma) -> float:
    g_r = g_tot - g_l
    h_r = h_tot - h_l
    return 0.5 * (g_l * g_l / (h_l + reg_lambda)
                  + g_r * g_r / (h_r + reg_lambda)
                  - g_tot * g_tot / (h_tot + reg_lambda)) - gamma


def build_tree(g, h, features, params: BoostParams, instance_set,
               feature_ids=None, gain_log=None) -> PlainTree:
    """Greedy depth-first tree over the given instance set.

    A node becomes a leaf at max depth, when the best gain is non-positive,
    or when every candidate would leave a child empty.  Ties break toward
    the lowest (feature, candidate) pair.
    """
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)
    instances = np.asarray(list(instance_set), dtype=np.intp)
    if instances.size == 0:
        raise DatasetError("instance set is empty")
    if feature_ids is None:
        feature_ids = list(range(features.shape[1]))

    def make_leaf(idx):
        g_tot = float(g[idx].sum())
        h_tot = float(h[idx].sum())
        w = -g_tot / (h_tot + params.reg_lambda) * params.eta
        if gain_log is not None:
            gain_log.append({"kind": "leaf", "instances": tuple(int(i) for i in idx),
                             "g": g_tot, "h": h_tot, "weight": w})
        return PlainLeaf(weight=w)

    def grow(idx, depth):
        if depth >= params.max_depth or len(idx) < 2:
            return make_leaf(idx)
        g_tot = float(g[idx].sum())
        h_tot = float(h[idx].sum())
        k = params.candidates_for(len(idx))
        best = None   # (gain, j, cand_idx, threshold)
        logged = []
        for j in feature_ids:
            col = features[idx, j]
            for cand, thr in enumerate(quantile_candidates(col, k)):
                mask = col < thr
                n_left = int(mask.sum())
                if n_left == 0 or n_left == len(idx):
                    continue
                gain = split_gain(float(g[idx][mask].sum()), float(h[idx][mask].sum()),
                                  g_tot, h_tot, params.reg_lambda, params.gamma)
                logged.append((j, cand, thr, gain))
                if best is None or gain > best[0]:
                    best = (gain, j, cand, thr)
        if gain_log is not None:
            gain_log.append({"kind": "split_search", "depth": depth,
                             "instances": tuple(int(i) for i in idx),
                             "candidates": logged,
                             "chosen": None if best is None or best[0] <= 0 else best})
        if best is None or best[0] <= 0:
            return make_leaf(idx)
        _, j, _, thr = best
        mask = features[idx, j] < thr
        return PlainNode(feature=j, threshold=thr,
                         left=grow(idx[mask], depth + 1),
                         right=grow(idx[~mask], depth + 1))

    return PlainTree(root=grow(instances, 0), max_depth=params.max_depth)


def predict_tree(tree: PlainTree, row) -> float:
    node = tree.root
    while isinstance(node, PlainNode):
        node = node.left if row[node.feature] < node.threshold else node.right
    return node.weight


def predict_tree_batch(tree: PlainTree, features) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    return np.array([predict_tree(tree, row) for row in features])


def lbp_xgb_train(x_lbp, y, params: BoostParams, instance_set=None):
    """First boosting round on the label holder's own columns.

    Returns (F0, tree, preds): the base score, the first tree (built on the
    sampled instance set), and the updated logit predictions for all rows.
    """
    x_lbp = np.asarray(x_lbp, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if instance_set is None:
        instance_set = range(len(y))
    f0 = compute_base_score(y)
    preds = np.full(len(y), f0, dtype=np.float64)
    g, h = gradients(y, preds)
    tree = build_tree(g, h, x_lbp, params, instance_set)
    preds = preds + predict_tree_batch(tree, x_lbp)
    return f0, tree, preds


def logloss(labels, logits) -> float:
    p = np.clip(sigmoid(np.asarray(logits, dtype=np.float64)), 1e-12, 1 - 1e-12)
    y = np.asarray(labels, dtype=np.float64)
    return float(-(y * np.log(p) + (1 - y) * np.log(1 - p)).mean())


def accuracy(labels, logits) -> float:
    y = np.asarray(labels, dtype=np.float64)
    return float(((np.asarray(logits) >= 0.0) == (y > 0.5)).mean())
