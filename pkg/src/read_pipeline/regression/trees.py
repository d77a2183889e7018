""" Regression trees grown greedily on squared loss, as used by the boosted ensemble.

Every feature is sorted once per fit; a node recovers its rows' order in each feature by filtering the global
order, so a node costs O(n * s) for n rows and s features. Among equally good splits the first in feature-major,
then position order wins. Rows with x <= threshold go left.
"""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """ A tree as parallel node arrays; leaves have feature -1. """
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def depth(self):
        depths = np.zeros(self.n_nodes, dtype=int)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depths[self.left[node]] = depths[self.right[node]] = depths[node] + 1
        return int(depths.max())

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        node = np.zeros(len(x), dtype=int)
        while True:
            internal = self.feature[node] >= 0
            if not internal.any():
                return self.value[node]
            rows = np.nonzero(internal)[0]
            current = node[rows]
            goes_left = x[rows, self.feature[current]] <= self.threshold[current]
            node[rows] = np.where(goes_left, self.left[current], self.right[current])


def presort(x):
    """ Per-feature row order, shaped features x rows. """
    return np.argsort(x, axis=0, kind='stable').T


def best_split(x, residuals, orders, in_node):
    """ Best variance-reduction split of the rows flagged by in_node.

    The gain of splitting a node with residual sum S over n rows into (S_L, n_L) and (S_R, n_R) is
    S_L^2 / n_L + S_R^2 / n_R - S^2 / n.

    :return: (gain, feature, threshold), or None when no split separates distinct values.
    """
    n_node = int(in_node.sum())
    if n_node < 2:
        return None
    n_features = orders.shape[0]
    node_orders = orders[in_node[orders]].reshape(n_features, n_node)
    values = np.take_along_axis(x.T, node_orders, axis=1)
    sums = np.cumsum(residuals[node_orders], axis=1)
    total = sums[:, -1:]
    n_left = np.arange(1, n_node)
    left = sums[:, :-1]
    gain = left ** 2 / n_left + (total - left) ** 2 / (n_node - n_left) - total ** 2 / n_node
    gain = np.where(values[:, :-1] < values[:, 1:], gain, -np.inf)
    flat = int(np.argmax(gain))
    feature, position = divmod(flat, n_node - 1)
    if not np.isfinite(gain[feature, position]):
        return None
    lower, upper = values[feature, position], values[feature, position + 1]
    threshold = lower + (upper - lower) / 2.0
    if not lower <= threshold < upper:
        threshold = lower
    return float(gain[feature, position]), int(feature), float(threshold)


def fit_tree(x, residuals, max_depth, orders=None):
    """ Grow a tree of at most max_depth levels of splits; leaves hold the mean residual.

    :param numpy.ndarray x: N x s features.
    :param numpy.ndarray residuals: N targets.
    :param int max_depth: Maximum number of splits on a root-to-leaf path.
    :param numpy.ndarray orders: presort(x), computed when omitted.
    :rtype: RegressionTree
    """
    x = np.asarray(x, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    orders = presort(x) if orders is None else orders
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(in_node, depth):
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(residuals[in_node].mean()))
        split = best_split(x, residuals, orders, in_node) if depth < max_depth else None
        if split is None:
            return node
        _, split_feature, split_threshold = split
        goes_left = x[:, split_feature] <= split_threshold
        feature[node] = split_feature
        threshold[node] = split_threshold
        left[node] = grow(in_node & goes_left, depth + 1)
        right[node] = grow(in_node & ~goes_left, depth + 1)
        return node

    grow(np.ones(len(residuals), dtype=bool), 0)
    return RegressionTree(feature=np.array(feature, dtype=int), threshold=np.array(threshold),
                          left=np.array(left, dtype=int), right=np.array(right, dtype=int), value=np.array(value))
