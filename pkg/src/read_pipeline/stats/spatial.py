""" Fixed-length district representations built from embedded spatial statistics.

For k reduced dimensions the base vector is laid out as

    [mu_1..mu_k, sigma_1..sigma_k, n, rho_(1,2), rho_(1,3), .., rho_(k-1,k)]

(m = 2k + 1 + k(k-1)/2 entries) and the representation appends every product base_a * base_b with a <= b in
row-major upper-triangle order, for s = m + m(m+1)/2 entries in total. Statistic groups can be excluded for
ablation; the remaining groups keep their relative order.
"""
from dataclasses import dataclass

import numpy as np
import pandas as pd

from read_pipeline.common.constants import REPRESENTATION_LAYOUT_VERSION, STATISTIC_GROUPS
from read_pipeline.common.exceptions import DataError, InvalidConfiguration, NonFiniteInput, ShapeMismatch
from read_pipeline.common.utility import read_csv, write_csv


@dataclass(frozen=True, eq=False)
class ReducedDistrict:
    district_id: str
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] < 1:
            raise ShapeMismatch("Reduced district {}".format(self.district_id), ('n >= 1', 'k'), matrix.shape)
        if not np.all(np.isfinite(matrix)):
            raise NonFiniteInput("Reduced district {}".format(self.district_id))
        object.__setattr__(self, 'matrix', matrix)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def k(self):
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class DistrictRepresentation:
    district_id: str
    k: int
    base: np.ndarray
    cross: np.ndarray

    @property
    def vector(self):
        return np.concatenate([self.base, self.cross])

    def __len__(self):
        return len(self.base) + len(self.cross)


def _check_exclude(exclude):
    exclude = tuple(exclude or ())
    unknown = set(exclude) - set(STATISTIC_GROUPS)
    if unknown:
        raise InvalidConfiguration('exclude', "unknown statistic groups {}".format(sorted(unknown)))
    return exclude


def group_sizes(k):
    return {'mu': k, 'sigma': k, 'n': 1, 'rho': k * (k - 1) // 2}


def base_length(k, exclude=()):
    exclude = _check_exclude(exclude)
    return sum(size for group, size in group_sizes(k).items() if group not in exclude)


def representation_length(k, exclude=()):
    """ s = m + m(m+1)/2 for the base length m. """
    m = base_length(k, exclude)
    return m + m * (m + 1) // 2


def base_names(k, exclude=()):
    """ Names of the base entries, e.g. mu_1, sigma_1, n, rho_1_2. """
    exclude = _check_exclude(exclude)
    names = []
    if 'mu' not in exclude:
        names += ['mu_{}'.format(d + 1) for d in range(k)]
    if 'sigma' not in exclude:
        names += ['sigma_{}'.format(d + 1) for d in range(k)]
    if 'n' not in exclude:
        names.append('n')
    if 'rho' not in exclude:
        names += ['rho_{}_{}'.format(a + 1, b + 1) for a, b in zip(*np.triu_indices(k, 1))]
    return names


def feature_names(k, exclude=()):
    base = base_names(k, exclude)
    rows, cols = np.triu_indices(len(base))
    return base + ['{}*{}'.format(base[a], base[b]) for a, b in zip(rows, cols)]


def correlations(matrix):
    """ Pearson correlations of every column pair (a < b); 0 when a column is constant or n < 2. """
    n, k = matrix.shape
    rows, cols = np.triu_indices(k, 1)
    if n < 2:
        return np.zeros(len(rows))
    centered = matrix - matrix.mean(axis=0)
    sums = centered.T @ centered
    scale = np.sqrt(np.outer(np.diag(sums), np.diag(sums)))
    with np.errstate(divide='ignore', invalid='ignore'):
        rho = np.where(scale > 0, sums / np.where(scale > 0, scale, 1.0), 0.0)
    return np.clip(rho[rows, cols], -1.0, 1.0)


def base_features(matrix, sigma_ddof=1, exclude=()):
    """ Embedded spatial statistics of one district's n x k reduced tile features.

    :param numpy.ndarray matrix: Reduced features, one row per kept tile.
    :param int sigma_ddof: 1 for the sample standard deviation, 0 for the population one.
    :param exclude: Statistic groups (mu, sigma, n, rho) to leave out.
    :rtype: numpy.ndarray
    """
    exclude = _check_exclude(exclude)
    matrix = ReducedDistrict('-', matrix).matrix
    # canonical row order so floating-point sums do not depend on tile order
    matrix = matrix[np.lexsort(matrix.T[::-1])]
    n, k = matrix.shape
    parts = []
    if 'mu' not in exclude:
        parts.append(matrix.mean(axis=0))
    if 'sigma' not in exclude:
        parts.append(matrix.std(axis=0, ddof=sigma_ddof) if n > sigma_ddof else np.zeros(k))
    if 'n' not in exclude:
        parts.append(np.array([float(n)]))
    if 'rho' not in exclude:
        parts.append(correlations(matrix))
    return np.concatenate(parts) if parts else np.zeros(0)


def cross_products(base):
    """ Products base_a * base_b for a <= b in row-major upper-triangle order. """
    base = np.asarray(base, dtype=float)
    if not np.all(np.isfinite(base)):
        raise NonFiniteInput("Base features")
    rows, cols = np.triu_indices(len(base))
    return base[rows] * base[cols]


def represent(district, sigma_ddof=1, exclude=()):
    """ The representation r = base || cross of a reduced district.

    :param ReducedDistrict district: The district's reduced tile features.
    :rtype: DistrictRepresentation
    """
    base = base_features(district.matrix, sigma_ddof=sigma_ddof, exclude=exclude)
    return DistrictRepresentation(district_id=district.district_id, k=district.k, base=base,
                                  cross=cross_products(base))


def write_representations(path, representations, k, exclude=(), meta=None):
    """ Write `district_id,r_0..r_{s-1}` with k, the layout version and the excluded groups in the header. """
    exclude = _check_exclude(exclude)
    length = representation_length(k, exclude)
    columns = ['district_id'] + ['r_{}'.format(i) for i in range(length)]
    rows = []
    for representation in representations:
        vector = representation.vector
        if len(vector) != length:
            raise ShapeMismatch("Representation of {}".format(representation.district_id), length, len(vector))
        rows.append([representation.district_id] + vector.tolist())
    header = dict(meta or {})
    header.update({'k': k, 'layout': REPRESENTATION_LAYOUT_VERSION, 'exclude': ','.join(exclude) or '-'})
    write_csv(path, pd.DataFrame(rows, columns=columns), header)


def read_representations(path):
    """ Read representations back.

    :return: (district ids, s-column matrix, metadata with integer k and a tuple of excluded groups)
    :rtype: tuple
    """
    frame, meta = read_csv(path)
    if int(meta.get('layout', -1)) != REPRESENTATION_LAYOUT_VERSION:
        raise DataError("Representation file {} has layout {}, expected {}.".format(
            path, meta.get('layout'), REPRESENTATION_LAYOUT_VERSION))
    meta['k'] = int(meta['k'])
    meta['exclude'] = tuple(group for group in meta.get('exclude', '-').split(',') if group and group != '-')
    values = frame[[column for column in frame.columns if column != 'district_id']].to_numpy(dtype=float)
    return [str(district_id) for district_id in frame['district_id']], values, meta
