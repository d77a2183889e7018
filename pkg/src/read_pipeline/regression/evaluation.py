""" Trial protocol: random 80/20 splits, cross-validated hyperparameter choice, test metrics over trials. """
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from tqdm import tqdm

from read_pipeline.common.constants import STATISTIC_GROUPS
from read_pipeline.common.exceptions import (InvalidConfiguration, NonPositiveTarget, ShapeMismatch, TooFewRows,
                                             UndefinedMetric)
from read_pipeline.common.utility import format_mean_sd, render_table
from read_pipeline.regression.models import VARIANTS, fit_regressor, predict
from read_pipeline.stats import pca
from read_pipeline.stats.spatial import ReducedDistrict, represent

MIN_ROWS = 5
GROUP_LABELS = {'mu': 'μ', 'sigma': 'σ', 'n': 'n', 'rho': 'ρ'}


@dataclass(frozen=True, eq=False)
class Dataset:
    district_ids: tuple
    y: np.ndarray
    target_name: str
    x: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.district_ids)

    def with_features(self, x):
        x = np.asarray(x, dtype=float)
        if len(x) != len(self):
            raise ShapeMismatch("Feature matrix", (len(self), 's'), x.shape)
        return Dataset(district_ids=self.district_ids, y=self.y, target_name=self.target_name, x=x)

    def subset(self, district_ids):
        position = {district_id: index for index, district_id in enumerate(self.district_ids)}
        index = np.array([position[district_id] for district_id in district_ids], dtype=int)
        return Dataset(district_ids=tuple(district_ids), y=self.y[index], target_name=self.target_name,
                       x=None if self.x is None else self.x[index])


def log_targets(demographics, variable, district_ids=None):
    """ Natural-log targets of one demographic variable.

    :param dict demographics: district id -> DemographicsRow.
    :param str variable: The variable name.
    :param district_ids: Districts to include, in order (all rows when None).
    :rtype: Dataset
    """
    district_ids = list(demographics) if district_ids is None else list(district_ids)
    values = []
    for district_id in district_ids:
        value = demographics[district_id].variables[variable]
        if not value > 0:
            raise NonPositiveTarget(district_id, variable, value)
        values.append(value)
    return Dataset(district_ids=tuple(district_ids), y=np.log(np.array(values, dtype=float)), target_name=variable)


def split_80_20(n, rng, test_fraction=0.2):
    """ Shuffled disjoint train/test positions with round(test_fraction * n) test rows.

    :param int n: Number of rows.
    :param numpy.random.Generator rng: Seeded generator.
    :return: (train positions, test positions), in shuffled order.
    """
    if n < MIN_ROWS:
        raise TooFewRows(n, MIN_ROWS)
    order = rng.permutation(n)
    n_test = int(round(test_fraction * n))
    return order[n_test:], order[:n_test]


def kfold(positions, k=4):
    """ k consecutive folds of the given positions.

    :return: list of (fit positions, validation positions)
    """
    positions = np.asarray(positions)
    if len(positions) < k:
        raise TooFewRows(len(positions), k)
    folds = np.array_split(positions, k)
    return [(np.concatenate(folds[:i] + folds[i + 1:]), folds[i]) for i in range(k)]


def mse(y, y_hat):
    y, y_hat = np.asarray(y, dtype=float), np.asarray(y_hat, dtype=float)
    return float(np.mean((y - y_hat) ** 2))


def r2(y, y_hat):
    """ 1 - SS_res / SS_tot. """
    y, y_hat = np.asarray(y, dtype=float), np.asarray(y_hat, dtype=float)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetric("R-squared", "targets have zero variance")
    return 1.0 - float(np.sum((y - y_hat) ** 2)) / ss_tot


@dataclass(frozen=True)
class EvalSettings:
    seed: int
    model: str = 'gbt'
    trials: int = 20
    folds: int = 4
    test_fraction: float = 0.2
    k_grid: tuple = tuple(range(1, 11))
    lambda_grid: tuple = (1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3)
    depth_grid: tuple = (2, 3, 4)
    trees: int = 200
    learning_rate: float = 0.1
    lasso_tol: float = 1e-8
    transductive: bool = False
    sigma_ddof: int = 1
    progress: bool = False

    @classmethod
    def from_config(cls, config):
        regression = config.regression
        return cls(seed=config.seed, model=regression.model, trials=regression.trials, folds=regression.folds,
                   test_fraction=regression.test_fraction, k_grid=tuple(regression.k_grid),
                   lambda_grid=tuple(regression.lambda_grid), depth_grid=tuple(regression.gbt.depth_grid),
                   trees=regression.gbt.trees, learning_rate=regression.gbt.learning_rate,
                   lasso_tol=regression.lasso_tol, transductive=config.pca.transductive,
                   sigma_ddof=config.spatial_stats.sigma_ddof, progress=config.logging.progress)

    def grid(self, variant):
        """ (name, values) of the variant's tuned hyperparameter. """
        if variant == 'gbt':
            return 'depth', self.depth_grid
        return 'lambda', self.lambda_grid

    def fit(self, variant, x, y, value):
        return fit_regressor(variant, x, y, value, trees=self.trees, learning_rate=self.learning_rate,
                             lasso_tol=self.lasso_tol)


@dataclass
class EvalReport:
    label: str
    variable: str
    variant: str
    r2: List[float] = field(default_factory=list)
    mse: List[float] = field(default_factory=list)
    choices: List[Dict] = field(default_factory=list)

    @staticmethod
    def _sd(values):
        return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0

    @property
    def r2_mean(self):
        return float(np.mean(self.r2))

    @property
    def r2_sd(self):
        return self._sd(self.r2)

    @property
    def mse_mean(self):
        return float(np.mean(self.mse))

    @property
    def mse_sd(self):
        return self._sd(self.mse)

    def to_dict(self):
        return {'label': self.label, 'variable': self.variable, 'model': self.variant, 'trials': len(self.r2),
                'r2': {'mean': self.r2_mean, 'sd': self.r2_sd, 'values': list(self.r2)},
                'mse': {'mean': self.mse_mean, 'sd': self.mse_sd, 'values': list(self.mse)},
                'choices': list(self.choices)}


def render_reports(reports, title=None):
    """ Text table in the layout `Model | MSE | R-Squared` with mean±sd cells. """
    rows = [[report.label, format_mean_sd(report.mse_mean, report.mse_sd),
             format_mean_sd(report.r2_mean, report.r2_sd)] for report in reports]
    return render_table(['Model', 'MSE', 'R-Squared'], rows, title=title)


def render_variables(reports, title=None):
    rows = [[report.variable, format_mean_sd(report.r2_mean, report.r2_sd),
             format_mean_sd(report.mse_mean, report.mse_sd)] for report in reports]
    return render_table(['Variable', 'R-Squared', 'MSE'], rows, title=title)


def represent_all(tiles, district_ids, model, exclude=(), sigma_ddof=1):
    """ Representation matrix of the listed districts under a fitted PCA model. """
    return np.vstack([represent(ReducedDistrict(district_id, pca.transform(model, tiles[district_id])),
                                sigma_ddof=sigma_ddof, exclude=exclude).vector for district_id in district_ids])


def cross_validate(features, y, positions, variant, settings):
    """ Choose (k, hyperparameter) by mean validation MSE over the folds of the training positions.

    Ties keep the first candidate in k-major grid order.

    :param dict features: k -> representation matrix of every district.
    :return: (k, hyperparameter value, mean validation MSE)
    """
    _, values = settings.grid(variant)
    folds = kfold(positions, settings.folds)
    best = None
    for k in sorted(features):
        x = features[k]
        for value in values:
            errors = []
            for fit_positions, validation_positions in folds:
                model = settings.fit(variant, x[fit_positions], y[fit_positions], value)
                errors.append(mse(y[validation_positions], predict(model, x[validation_positions])))
            score = float(np.mean(errors))
            if best is None or score < best[2]:
                best = (k, value, score)
    return best


def run_trial(tiles, dataset, settings, variant, trial, exclude=(), k_grid=None):
    """ One seeded trial: split, fit PCA, build representations, tune by cross-validation, test.

    :return: (r2, mse, choice)
    """
    rng = np.random.default_rng([settings.seed, trial])
    train, test = split_80_20(len(dataset), rng, settings.test_fraction)
    ids = dataset.district_ids
    fit_ids = ids if settings.transductive else [ids[p] for p in train]
    rows = np.vstack([tiles[district_id] for district_id in fit_ids])
    k_grid = tuple(k_grid or settings.k_grid)
    k_top = min(max(k_grid), rows.shape[0] - 1, rows.shape[1])
    model = pca.fit(rows, k_top)
    features = {k: represent_all(tiles, ids, pca.truncate(model, k), exclude, settings.sigma_ddof)
                for k in k_grid if k <= k_top}
    if not features:
        features = {k_top: represent_all(tiles, ids, model, exclude, settings.sigma_ddof)}
    k, value, cv_mse = cross_validate(features, dataset.y, train, variant, settings)
    regressor = settings.fit(variant, features[k][train], dataset.y[train], value)
    y_hat = predict(regressor, features[k][test])
    name, _ = settings.grid(variant)
    choice = {'trial': trial, 'k': int(k), name: value, 'cv_mse': cv_mse}
    return r2(dataset.y[test], y_hat), mse(dataset.y[test], y_hat), choice


def evaluate(tiles, dataset, settings, variant=None, exclude=(), k_grid=None, label='READ'):
    """ Repeat the trial protocol and collect test metrics.

    :param dict tiles: district id -> n_i x E embeddings of the district's kept tiles.
    :param Dataset dataset: Log-scaled targets of the districts to use.
    :param EvalSettings settings: Protocol settings.
    :param str variant: ridge, lasso or gbt (settings.model when None).
    :param exclude: Statistic groups left out of the representation.
    :param k_grid: PCA dimensions to search (settings.k_grid when None).
    :rtype: EvalReport
    """
    variant = variant or settings.model
    if variant not in VARIANTS:
        raise InvalidConfiguration('regression.model', "unknown variant {}".format(variant))
    report = EvalReport(label=label, variable=dataset.target_name, variant=variant)
    for trial in tqdm(range(settings.trials), desc=label, disable=None if settings.progress else True):
        trial_r2, trial_mse, choice = run_trial(tiles, dataset, settings, variant, trial, exclude, k_grid)
        report.r2.append(trial_r2)
        report.mse.append(trial_mse)
        report.choices.append(choice)
    logging.info("{} ({}, {}): R2 {} MSE {}".format(label, dataset.target_name, variant,
                                                   format_mean_sd(report.r2_mean, report.r2_sd),
                                                   format_mean_sd(report.mse_mean, report.mse_sd)))
    return report


def ablate(tiles, dataset, settings, variant=None):
    """ Evaluate with each statistic group removed in turn, then with the full representation.

    :return: Reports labelled `READ w/o μ`, `READ w/o σ`, `READ w/o n`, `READ w/o ρ` and `READ`.
    :rtype: list
    """
    reports = [evaluate(tiles, dataset, settings, variant, exclude=(group,),
                        label='READ w/o {}'.format(GROUP_LABELS[group])) for group in STATISTIC_GROUPS]
    reports.append(evaluate(tiles, dataset, settings, variant, label='READ'))
    return reports


def sweep(tiles, dataset, settings, variants=VARIANTS):
    """ Test performance of every variant at every fixed PCA dimension of the grid. """
    reports = []
    for variant in variants:
        for k in settings.k_grid:
            reports.append(evaluate(tiles, dataset, settings, variant, k_grid=(k,),
                                    label='{} k={}'.format(variant, k)))
    return reports
