import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from read_pipeline.common.exceptions import InvalidConfiguration, NonFiniteInput, ShapeMismatch
from read_pipeline.stats.spatial import ReducedDistrict, base_features, base_length, base_names, cross_products, \
    feature_names, read_representations, represent, representation_length, write_representations


def unpack(base, k):
    return base[:k], base[k:2 * k], base[2 * k], base[2 * k + 1:]


class TestBaseFeatures:
    def test_single_tile(self):
        mu, sigma, n, rho = unpack(base_features(np.array([[1.5, -2.0, 4.0]])), 3)
        assert mu.tolist() == [1.5, -2.0, 4.0]
        assert sigma.tolist() == [0.0, 0.0, 0.0]
        assert n == 1.0
        assert rho.tolist() == [0.0, 0.0, 0.0]

    def test_perfect_linear_relation(self):
        a = np.array([0.3, 1.7])
        _, _, _, rho = unpack(base_features(np.column_stack([a, 3.0 * a + 1.0])), 2)
        assert rho[0] == pytest.approx(1.0)

    def test_direct_statistics(self):
        mu, sigma, n, rho = unpack(base_features(np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 0.0]])), 2)
        assert mu == pytest.approx([3.0, 2.0])
        assert sigma == pytest.approx([2.0, 2.0])
        assert n == 3.0
        assert rho[0] == pytest.approx(-0.5)

    def test_population_sigma(self):
        _, sigma, _, _ = unpack(base_features(np.array([[1.0], [3.0]]), sigma_ddof=0), 1)
        assert sigma[0] == pytest.approx(1.0)

    def test_constant_column_has_zero_correlation(self):
        _, _, _, rho = unpack(base_features(np.array([[1.0, 5.0], [2.0, 5.0], [4.0, 5.0]])), 2)
        assert rho[0] == 0.0

    def test_non_finite(self):
        with pytest.raises(NonFiniteInput):
            base_features(np.array([[1.0, np.inf]]))

    def test_empty_district(self):
        with pytest.raises(ShapeMismatch):
            ReducedDistrict('A', np.zeros((0, 3)))


class TestCrossProducts:
    def test_all_ones(self):
        assert cross_products(np.ones(4)).tolist() == [1.0] * 10

    def test_single_nonzero(self):
        base = np.zeros(4)
        base[2] = 3.0
        products = cross_products(base)
        rows, cols = np.triu_indices(4)
        assert np.nonzero(products)[0].tolist() == [int(np.nonzero((rows == 2) & (cols == 2))[0][0])]
        assert products[np.nonzero(products)[0][0]] == 9.0

    def test_enumeration(self):
        assert cross_products(np.array([1.0, 2.0, 3.0])).tolist() == [1.0, 2.0, 3.0, 4.0, 6.0, 9.0]


class TestRepresent:
    def test_length_for_ten_components(self):
        assert base_length(10) == 66
        assert representation_length(10) == 2277
        district = ReducedDistrict('A', np.random.default_rng(0).normal(size=(7, 10)))
        assert len(represent(district)) == 2277
        assert len(feature_names(10)) == 2277

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12), st.integers(1, 4))
    def test_row_permutation_invariance(self, seed, n, k):
        rng = np.random.default_rng(seed)
        matrix = rng.normal(size=(n, k))
        permuted = matrix[rng.permutation(n)]
        assert np.array_equal(represent(ReducedDistrict('A', matrix)).vector,
                              represent(ReducedDistrict('A', permuted)).vector)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(1, 12), st.integers(1, 4))
    def test_type_invariants(self, seed, n, k):
        matrix = np.random.default_rng(seed).normal(size=(n, k))
        mu, sigma, count, rho = unpack(base_features(matrix), k)
        assert np.all(sigma >= 0)
        assert np.all(np.abs(rho) <= 1.0)
        assert count == n

    def test_duplicated_rows(self):
        matrix = np.random.default_rng(1).normal(size=(6, 3))
        doubled = np.vstack([matrix, matrix])
        mu, sigma, n, rho = unpack(base_features(matrix), 3)
        mu2, sigma2, n2, rho2 = unpack(base_features(doubled), 3)
        assert np.allclose(mu2, mu)
        assert np.allclose(rho2, rho)
        assert n2 == 2 * n
        assert np.allclose(sigma2, doubled.std(axis=0, ddof=1))
        assert np.allclose(sigma2, sigma * np.sqrt((n - 1) * 2 / (2 * n - 1)))

    def test_scaling(self):
        matrix = np.random.default_rng(2).normal(size=(5, 3))
        mu, sigma, n, rho = unpack(base_features(matrix), 3)
        mu3, sigma3, n3, rho3 = unpack(base_features(2.5 * matrix), 3)
        assert np.allclose(mu3, 2.5 * mu)
        assert np.allclose(sigma3, 2.5 * sigma)
        assert n3 == n
        assert np.allclose(rho3, rho)

    @pytest.mark.parametrize('exclude, length', [(('rho',), 7), (('n',), 9), (('mu', 'sigma'), 4), ((), 10)])
    def test_ablation_layout(self, exclude, length):
        k = 3
        district = ReducedDistrict('A', np.random.default_rng(3).normal(size=(5, k)))
        representation = represent(district, exclude=exclude)
        assert len(representation.base) == length == base_length(k, exclude)
        assert len(base_names(k, exclude)) == length
        assert len(representation) == representation_length(k, exclude)

    def test_ablation_keeps_group_values(self):
        matrix = np.random.default_rng(4).normal(size=(5, 2))
        full = base_features(matrix)
        without_sigma = base_features(matrix, exclude=('sigma',))
        assert np.array_equal(without_sigma, np.concatenate([full[:2], full[4:]]))

    def test_unknown_group(self):
        with pytest.raises(InvalidConfiguration):
            base_features(np.ones((2, 2)), exclude=('kurtosis',))

    def test_names(self):
        assert base_names(2) == ['mu_1', 'mu_2', 'sigma_1', 'sigma_2', 'n', 'rho_1_2']
        assert feature_names(1)[-1] == 'n*n'


def test_representation_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    representations = [represent(ReducedDistrict(name, rng.normal(size=(4, 2)))) for name in ('A', 'B', '007')]
    path = str(tmp_path / 'representations.csv')
    write_representations(path, representations, 2, meta={'config_hash': 'h'})
    ids, matrix, meta = read_representations(path)
    assert ids == ['A', 'B', '007']
    assert meta['k'] == 2 and meta['exclude'] == ()
    assert np.array_equal(matrix, np.vstack([r.vector for r in representations]))


def test_representation_length_is_checked(tmp_path):
    representation = represent(ReducedDistrict('A', np.ones((2, 2))))
    with pytest.raises(ShapeMismatch):
        write_representations(str(tmp_path / 'r.csv'), [representation], 3)
