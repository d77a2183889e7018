""" Ridge, lasso and gradient-boosted tree regressors over district representations.

Ridge and lasso work on features standardized with the training mean and standard deviation and on centred
targets, so the intercept is never penalised. The boosted trees use raw features.
"""
import io
import logging
import os
import zipfile
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from read_pipeline.common.constants import REGRESSOR_VERSION
from read_pipeline.common.exceptions import (CheckpointFormatError, InvalidConfiguration, NonFiniteInput,
                                             ShapeMismatch, SingularSystem, TooFewRows)
from read_pipeline.regression.trees import RegressionTree, fit_tree, presort

VARIANTS = ('ridge', 'lasso', 'gbt')
# ridge systems with a larger condition number are reported as singular when lambda is 0
MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class RegressorModel:
    variant: str
    n_features: int
    weights: Optional[np.ndarray] = None
    intercept: float = 0.0
    lam: float = 0.0
    x_mean: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    trees: List[RegressionTree] = field(default_factory=list)
    learning_rate: float = 0.1
    base: float = 0.0
    depth: int = 0

    @property
    def coefficients(self):
        """ Linear weights on the raw (unstandardized) features. """
        return self.weights / self.x_scale

    @property
    def raw_intercept(self):
        return float(self.intercept - self.coefficients @ self.x_mean)

    def hyperparameters(self):
        if self.variant == 'gbt':
            return {'trees': len(self.trees), 'depth': self.depth, 'learning_rate': self.learning_rate}
        return {'lambda': self.lam}


def _check_xy(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
        raise ShapeMismatch("Regression data", ('N', 's'), (x.shape, y.shape))
    if len(y) < 2:
        raise TooFewRows(len(y), 2)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("Regression data")
    return x, y


def standardize(x):
    """ Training mean and scale; constant columns get scale 1. """
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    return mean, np.where(scale > 0, scale, 1.0)


def ridge_solve(x, y, lam):
    """ Solve (X^T X + lam I) w = X^T y.

    :raises SingularSystem: when lam is 0 and the system is singular.
    """
    gram = x.T @ x + lam * np.eye(x.shape[1])
    if lam == 0 and (x.shape[1] > x.shape[0] or np.linalg.cond(gram) > MAX_CONDITION):
        raise SingularSystem(lam)
    try:
        return np.linalg.solve(gram, x.T @ y)
    except np.linalg.LinAlgError:
        raise SingularSystem(lam)


def ridge_fit(x, y, lam):
    """ Ridge regression by the normal equations, with lam on the weights only.

    :rtype: RegressorModel
    """
    x, y = _check_xy(x, y)
    if lam < 0:
        raise InvalidConfiguration('regression.lambda_grid', "lambda must be non-negative")
    mean, scale = standardize(x)
    weights = ridge_solve((x - mean) / scale, y - y.mean(), lam)
    return RegressorModel(variant='ridge', n_features=x.shape[1], weights=weights, intercept=float(y.mean()),
                          lam=float(lam), x_mean=mean, x_scale=scale)


def soft_threshold(value, lam):
    return np.sign(value) * max(abs(value) - lam, 0.0)


def lasso_solve(x, y, lam, tol=1e-8, max_iter=10000):
    """ Cyclic coordinate descent on (1 / 2N) ||y - X w||^2 + lam ||w||_1 for centred x and y.

    Full sweeps alternate with sweeps over the non-zero weights until the largest coordinate change is below tol.

    :return: (weights, converged)
    """
    n, s = x.shape
    weights = np.zeros(s)
    residual = y.copy()
    norms = (x ** 2).sum(axis=0) / n

    def sweep(coordinates):
        largest = 0.0
        for j in coordinates:
            if norms[j] == 0.0:
                continue
            old = weights[j]
            rho = x[:, j] @ residual / n + norms[j] * old
            new = soft_threshold(rho, lam) / norms[j]
            if new != old:
                residual[:] -= x[:, j] * (new - old)
                weights[j] = new
                largest = max(largest, abs(new - old))
        return largest

    all_coordinates = range(s)
    for _ in range(max_iter):
        if sweep(all_coordinates) <= tol:
            return weights, True
        active = np.nonzero(weights)[0]
        for _ in range(max_iter):
            if sweep(active) <= tol:
                break
    return weights, False


def lasso_fit(x, y, lam, tol=1e-8, max_iter=10000):
    """ Lasso regression by coordinate descent to tolerance.

    :rtype: RegressorModel
    """
    x, y = _check_xy(x, y)
    if lam < 0:
        raise InvalidConfiguration('regression.lambda_grid', "lambda must be non-negative")
    mean, scale = standardize(x)
    weights, converged = lasso_solve((x - mean) / scale, y - y.mean(), lam, tol=tol, max_iter=max_iter)
    if not converged:
        logging.warning("Lasso with lambda={} did not converge to tolerance {}".format(lam, tol))
    return RegressorModel(variant='lasso', n_features=x.shape[1], weights=weights, intercept=float(y.mean()),
                          lam=float(lam), x_mean=mean, x_scale=scale)


def gbt_fit(x, y, trees=200, depth=3, learning_rate=0.1, base_score=None):
    """ Gradient-boosted regression trees on squared loss.

    Each tree is fitted to the current residuals and adds learning_rate times its leaf value.

    :param float base_score: Initial prediction; mean(y) when None.
    :rtype: RegressorModel
    """
    x, y = _check_xy(x, y)
    base = float(y.mean()) if base_score is None else float(base_score)
    prediction = np.full(len(y), base)
    orders = presort(x)
    ensemble = []
    for _ in range(trees):
        tree = fit_tree(x, y - prediction, depth, orders=orders)
        prediction = prediction + learning_rate * tree.predict(x)
        ensemble.append(tree)
    return RegressorModel(variant='gbt', n_features=x.shape[1], trees=ensemble, learning_rate=float(learning_rate),
                          base=base, depth=int(depth))


def fit_regressor(variant, x, y, value, trees=200, learning_rate=0.1, lasso_tol=1e-8):
    """ Fit one variant; value is lambda for ridge and lasso, the tree depth for gbt. """
    if variant == 'ridge':
        return ridge_fit(x, y, value)
    if variant == 'lasso':
        return lasso_fit(x, y, value, tol=lasso_tol)
    if variant == 'gbt':
        return gbt_fit(x, y, trees=trees, depth=value, learning_rate=learning_rate)
    raise InvalidConfiguration('regression.model', "unknown variant {}".format(variant))


def predict(model, x):
    """ Predictions for the rows of x (or a single representation vector). """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.n_features:
        raise ShapeMismatch("Representation", model.n_features, x.shape[1])
    if model.variant == 'gbt':
        prediction = np.full(len(x), model.base)
        for tree in model.trees:
            prediction = prediction + model.learning_rate * tree.predict(x)
    else:
        prediction = model.intercept + ((x - model.x_mean) / model.x_scale) @ model.weights
    return prediction[0] if single else prediction


def staged_predict(model, x):
    """ GBT predictions after each tree. """
    prediction = np.full(len(x), model.base)
    for tree in model.trees:
        prediction = prediction + model.learning_rate * tree.predict(x)
        yield prediction


# persistence

def _arrays(model):
    arrays = {'version': np.array([REGRESSOR_VERSION]), 'variant': np.array([VARIANTS.index(model.variant)]),
              'n_features': np.array([model.n_features])}
    if model.variant == 'gbt':
        arrays['scalars'] = np.array([model.base, model.learning_rate, model.depth], dtype=float)
        arrays['tree_sizes'] = np.array([tree.n_nodes for tree in model.trees], dtype=int)
        for name in ('feature', 'threshold', 'left', 'right', 'value'):
            parts = [getattr(tree, name) for tree in model.trees]
            arrays['tree_' + name] = np.concatenate(parts) if parts else np.zeros(0)
    else:
        arrays['scalars'] = np.array([model.intercept, model.lam], dtype=float)
        arrays['weights'] = model.weights
        arrays['x_mean'] = model.x_mean
        arrays['x_scale'] = model.x_scale
    return arrays


def save_regressor(path, model, meta=None):
    """ Write a model as a NumPy `.npz` archive with fixed member timestamps, so equal models give equal bytes. """
    arrays = _arrays(model)
    for key, value in sorted((meta or {}).items()):
        arrays['meta_' + key] = np.array([str(value)])
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with zipfile.ZipFile(path, 'w', compression=zipfile.ZIP_STORED) as archive:
        for name in sorted(arrays):
            buffer = io.BytesIO()
            np.lib.format.write_array(buffer, np.asarray(arrays[name]), allow_pickle=False)
            archive.writestr(zipfile.ZipInfo(name + '.npy', date_time=(1980, 1, 1, 0, 0, 0)), buffer.getvalue())


def load_regressor(path):
    """ Read a model written by save_regressor.

    :return: (RegressorModel, metadata)
    :rtype: tuple
    """
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files}
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise CheckpointFormatError(path, repr(e))
    if int(arrays.get('version', [-1])[0]) != REGRESSOR_VERSION:
        raise CheckpointFormatError(path, "unsupported regressor version")
    meta = {name[len('meta_'):]: str(value[0]) for name, value in arrays.items() if name.startswith('meta_')}
    variant = VARIANTS[int(arrays['variant'][0])]
    n_features = int(arrays['n_features'][0])
    scalars = arrays['scalars']
    if variant != 'gbt':
        model = RegressorModel(variant=variant, n_features=n_features, weights=arrays['weights'],
                               intercept=float(scalars[0]), lam=float(scalars[1]), x_mean=arrays['x_mean'],
                               x_scale=arrays['x_scale'])
        return model, meta
    trees = []
    offset = 0
    for size in arrays['tree_sizes']:
        part = slice(offset, offset + int(size))
        trees.append(RegressionTree(feature=arrays['tree_feature'][part].astype(int),
                                    threshold=arrays['tree_threshold'][part].astype(float),
                                    left=arrays['tree_left'][part].astype(int),
                                    right=arrays['tree_right'][part].astype(int),
                                    value=arrays['tree_value'][part].astype(float)))
        offset += int(size)
    model = RegressorModel(variant=variant, n_features=n_features, trees=trees, base=float(scalars[0]),
                           learning_rate=float(scalars[1]), depth=int(scalars[2]))
    return model, meta
