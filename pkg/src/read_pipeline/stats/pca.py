""" Principal component analysis from the sample covariance, solved with cyclic Jacobi rotations. """
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from read_pipeline.common.constants import PCA_VERSION
from read_pipeline.common.exceptions import (DataError, DegenerateVariance, InvalidComponentCount, NonFiniteInput,
                                             ShapeMismatch, TooFewRows)
from read_pipeline.common.utility import read_csv, write_csv

MAX_COMPONENTS = 10
RATIO_TOLERANCE = 1e-12


def jacobi_eigh(matrix, tol=1e-14, max_sweeps=100):
    """ Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    :param numpy.ndarray matrix: Symmetric n x n matrix.
    :param float tol: Sweeps stop once the off-diagonal norm is below tol times the matrix norm.
    :param int max_sweeps: Upper bound on full sweeps.
    :return: (eigenvalues, eigenvectors as columns), unsorted.
    :rtype: tuple
    """
    a = np.array(matrix, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(n), v
    for sweep in range(max_sweeps):
        off = np.sqrt(np.sum(a ** 2) - np.sum(np.diag(a) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    else:
        logging.warning("Jacobi eigensolver stopped after {} sweeps".format(max_sweeps))
    return np.diag(a).copy(), v


def sample_covariance(x):
    """ Covariance with 1/(N-1) normalization. """
    centered = x - x.mean(axis=0)
    return centered.T @ centered / (len(x) - 1)


def orient(components):
    """ Flip each row so that its largest-magnitude entry is positive (first such entry on ties). """
    pivots = np.argmax(np.abs(components), axis=1)
    signs = np.where(components[np.arange(len(components)), pivots] < 0, -1.0, 1.0)
    return components * signs[:, None]


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray
    total_variance: float

    @property
    def k(self):
        return self.components.shape[0]

    @property
    def dim(self):
        return self.components.shape[1]


def fit(x, k):
    """ Fit k principal components to the rows of x.

    :param numpy.ndarray x: N x E embeddings.
    :param int k: Components to keep, 1 <= k <= min(N - 1, E).
    :rtype: PcaModel
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ShapeMismatch("PCA input", ('N', 'E'), x.shape)
    n, dim = x.shape
    if n < 2:
        raise TooFewRows(n, 2)
    upper = min(n - 1, dim)
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= upper):
        raise InvalidComponentCount(k, upper)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("PCA input")
    mean = x.mean(axis=0)
    covariance = sample_covariance(x)
    total = float(np.trace(covariance))
    if total <= 0.0:
        raise DegenerateVariance()

    eigenvalues, vectors = jacobi_eigh(covariance)
    order = np.argsort(-eigenvalues, kind='stable')
    eigenvalues = np.maximum(eigenvalues[order], 0.0)
    components = orient(vectors[:, order].T)
    ratios = eigenvalues / eigenvalues.sum()
    logging.debug("PCA on {} x {}: leading ratios {}".format(n, dim, np.round(ratios[:k], 4)))
    return PcaModel(mean=mean, components=components[:k], eigenvalues=eigenvalues[:k],
                    explained_variance_ratio=ratios[:k], total_variance=float(eigenvalues.sum()))


def transform(model, x):
    """ Project an E-vector (or N x E matrix) onto the model's components. """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise ShapeMismatch("PCA input", model.dim, x.shape[-1])
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("PCA input")
    return (x - model.mean) @ model.components.T


def reconstruct(model, z):
    return model.mean + np.asarray(z, dtype=float) @ model.components


def choose_k(model, variance_target=0.8, k_max=MAX_COMPONENTS):
    """ Smallest k whose cumulative explained variance reaches the target, clamped to [1, k_max]. """
    cumulative = np.cumsum(model.explained_variance_ratio)
    reached = np.nonzero(cumulative >= variance_target - RATIO_TOLERANCE)[0]
    k = int(reached[0]) + 1 if len(reached) else len(cumulative)
    return int(min(max(k, 1), k_max, model.k))


def fit_auto(x, k='auto', k_max=MAX_COMPONENTS, variance_target=0.8):
    """ Fit with a fixed k, or with k_max components and then truncate to choose_k. """
    x = np.asarray(x, dtype=float)
    if k != 'auto':
        return fit(x, int(k))
    upper = max(min(k_max, x.shape[0] - 1, x.shape[1]), 1)
    model = fit(x, upper)
    return truncate(model, choose_k(model, variance_target, k_max))


def truncate(model, k):
    """ The model restricted to its first k components. """
    if not 1 <= k <= model.k:
        raise InvalidComponentCount(k, model.k)
    return PcaModel(mean=model.mean, components=model.components[:k], eigenvalues=model.eigenvalues[:k],
                    explained_variance_ratio=model.explained_variance_ratio[:k], total_variance=model.total_variance)


def save_pca(path, model, meta=None):
    """ Write a model as CSV blocks: one `mean` row, then one `component` row per eigenpair. """
    columns = ['block', 'index', 'eigenvalue', 'ratio'] + ['v{}'.format(i) for i in range(model.dim)]
    rows = [['mean', 0, 0.0, 0.0] + model.mean.tolist()]
    for index in range(model.k):
        rows.append(['component', index, float(model.eigenvalues[index]),
                     float(model.explained_variance_ratio[index])] + model.components[index].tolist())
    header = dict(meta or {})
    header.update({'version': PCA_VERSION, 'k': model.k, 'dim': model.dim,
                   'total_variance': repr(model.total_variance)})
    write_csv(path, pd.DataFrame(rows, columns=columns), header)


def load_pca(path):
    """ Read a model written by save_pca.

    :return: (PcaModel, metadata)
    :rtype: tuple
    """
    frame, meta = read_csv(path)
    if int(meta.get('version', -1)) != PCA_VERSION:
        raise DataError("PCA file {} has version {}, expected {}.".format(path, meta.get('version'), PCA_VERSION))
    values = frame[[column for column in frame.columns if column.startswith('v')]].to_numpy(dtype=float)
    is_mean = (frame['block'] == 'mean').to_numpy()
    components = frame[~is_mean]
    model = PcaModel(mean=values[is_mean][0], components=values[~is_mean],
                     eigenvalues=components['eigenvalue'].to_numpy(dtype=float),
                     explained_variance_ratio=components['ratio'].to_numpy(dtype=float),
                     total_variance=float(meta['total_variance']))
    return model, meta
