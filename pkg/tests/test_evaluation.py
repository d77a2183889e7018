import numpy as np
import pytest

from read_pipeline.common.exceptions import InvalidConfiguration, NonPositiveTarget, TooFewRows, UndefinedMetric
from read_pipeline.regression.evaluation import Dataset, EvalReport, EvalSettings, ablate, cross_validate, evaluate, \
    kfold, log_targets, mse, r2, render_reports, split_80_20, sweep
from read_pipeline.store.demographics import DemographicsRow


def planted_world(n_districts=60, tiles=15, dim=4, seed=0):
    """ Districts whose tiles are shifted along one axis by the log target. """
    rng = np.random.default_rng(seed)
    ids = ['d{:02d}'.format(i) for i in range(n_districts)]
    y = rng.uniform(1.0, 3.0, size=n_districts)
    embeddings = {}
    for district_id, target in zip(ids, y):
        matrix = 0.1 * rng.normal(size=(tiles, dim))
        matrix[:, 0] += target
        embeddings[district_id] = matrix
    return embeddings, Dataset(district_ids=tuple(ids), y=y, target_name='density')


def ridge_settings(**overrides):
    values = dict(seed=3, model='ridge', trials=4, folds=3, k_grid=(1, 2), lambda_grid=(0.01, 0.1, 1.0))
    values.update(overrides)
    return EvalSettings(**values)


class TestMetrics:
    def test_perfect_prediction(self):
        y = np.array([1.0, 2.0, 4.0])
        assert r2(y, y) == 1.0
        assert mse(y, y) == 0.0

    def test_mean_prediction(self):
        y = np.array([1.0, 2.0, 6.0])
        assert r2(y, np.full(3, 3.0)) == 0.0

    def test_known_residuals(self):
        y = np.array([0.0, 2.0])
        y_hat = y - np.array([1.0, -1.0])
        assert mse(y, y_hat) == 1.0
        assert r2(y, y_hat) == 0.0

    def test_constant_targets(self):
        with pytest.raises(UndefinedMetric):
            r2(np.ones(4), np.zeros(4))

    def test_bounds(self):
        rng = np.random.default_rng(0)
        y, y_hat = rng.normal(size=20), rng.normal(size=20)
        assert r2(y, y_hat) <= 1.0
        assert mse(y, y_hat) >= 0.0


class TestSplits:
    def test_split_sizes(self):
        train, test = split_80_20(10, np.random.default_rng(0))
        assert len(train) == 8 and len(test) == 2
        assert sorted(np.concatenate([train, test]).tolist()) == list(range(10))

    def test_split_is_seeded(self):
        first = split_80_20(25, np.random.default_rng(4))
        second = split_80_20(25, np.random.default_rng(4))
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_split_too_small(self):
        with pytest.raises(TooFewRows):
            split_80_20(4, np.random.default_rng(0))

    def test_kfold_partitions_positions(self):
        positions = np.arange(10) * 3
        folds = kfold(positions, 4)
        assert [len(validation) for _, validation in folds] == [3, 3, 2, 2]
        assert sorted(np.concatenate([v for _, v in folds]).tolist()) == positions.tolist()
        for fit, validation in folds:
            assert not set(fit) & set(validation)
            assert len(fit) + len(validation) == 10

    def test_kfold_too_few(self):
        with pytest.raises(TooFewRows):
            kfold(np.arange(3), 4)


class TestTargets:
    def test_log_targets(self):
        demographics = {'a': DemographicsRow('a', {'density': np.e}), 'b': DemographicsRow('b', {'density': 1.0})}
        dataset = log_targets(demographics, 'density')
        assert dataset.district_ids == ('a', 'b')
        assert np.allclose(dataset.y, [1.0, 0.0])

    def test_non_positive_target(self):
        demographics = {'a': DemographicsRow('a', {'density': 0.0})}
        with pytest.raises(NonPositiveTarget):
            log_targets(demographics, 'density')

    def test_subset_keeps_order(self):
        dataset = Dataset(district_ids=('a', 'b', 'c'), y=np.array([1.0, 2.0, 3.0]), target_name='density')
        subset = dataset.subset(['c', 'a'])
        assert subset.district_ids == ('c', 'a')
        assert subset.y.tolist() == [3.0, 1.0]


class TestCrossValidation:
    def test_prefers_small_penalty_on_exact_data(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(30, 2))
        y = x @ np.array([1.5, -0.5])
        settings = ridge_settings(lambda_grid=(0.001, 100.0))
        k, value, score = cross_validate({1: x}, y, np.arange(30), 'ridge', settings)
        assert (k, value) == (1, 0.001)
        assert score < 1e-3

    def test_ties_keep_the_first_candidate(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(20, 2))
        y = x[:, 0] + 0.1 * rng.normal(size=20)
        settings = ridge_settings(lambda_grid=(1.0,))
        k, _, _ = cross_validate({2: x, 1: x}, y, np.arange(20), 'ridge', settings)
        assert k == 1


class TestEvaluate:
    def test_planted_target_is_recovered(self):
        tiles, dataset = planted_world()
        report = evaluate(tiles, dataset, ridge_settings())
        assert len(report.r2) == 4
        assert report.r2_mean >= 0.9
        assert all(choice['k'] in (1, 2) for choice in report.choices)

    def test_permuted_targets_are_not_predictable(self):
        tiles, dataset = planted_world()
        shuffled = Dataset(district_ids=dataset.district_ids, target_name='density',
                           y=np.random.default_rng(9).permutation(dataset.y))
        report = evaluate(tiles, shuffled, ridge_settings(trials=8))
        assert report.r2_mean < 0.3

    def test_deterministic(self):
        tiles, dataset = planted_world(n_districts=20)
        first = evaluate(tiles, dataset, ridge_settings(trials=2))
        second = evaluate(tiles, dataset, ridge_settings(trials=2))
        assert first.r2 == second.r2
        assert first.choices == second.choices

    def test_transductive_pca(self):
        tiles, dataset = planted_world(n_districts=20)
        report = evaluate(tiles, dataset, ridge_settings(trials=2, transductive=True))
        assert len(report.mse) == 2

    def test_gbt(self):
        tiles, dataset = planted_world(n_districts=30)
        settings = ridge_settings(model='gbt', trials=2, trees=20, depth_grid=(2,))
        report = evaluate(tiles, dataset, settings)
        assert report.variant == 'gbt'
        assert all(choice['depth'] == 2 for choice in report.choices)

    def test_unknown_variant(self):
        tiles, dataset = planted_world(n_districts=10)
        with pytest.raises(InvalidConfiguration, match='regression.model'):
            evaluate(tiles, dataset, ridge_settings(), variant='forest')


class TestProtocols:
    def test_ablation_rows(self):
        tiles, dataset = planted_world(n_districts=20)
        reports = ablate(tiles, dataset, ridge_settings(trials=2))
        assert [report.label for report in reports] == ['READ w/o μ', 'READ w/o σ', 'READ w/o n', 'READ w/o ρ',
                                                       'READ']
        table = render_reports(reports)
        assert 'R-Squared' in table and 'READ w/o ρ' in table

    def test_sweep_covers_every_variant_and_dimension(self):
        tiles, dataset = planted_world(n_districts=20)
        settings = ridge_settings(trials=1, trees=10, depth_grid=(2,))
        reports = sweep(tiles, dataset, settings, variants=('ridge', 'gbt'))
        assert [report.label for report in reports] == ['ridge k=1', 'ridge k=2', 'gbt k=1', 'gbt k=2']
        assert all(choice['k'] == int(report.label[-1]) for report in reports for choice in report.choices)


class TestReport:
    def test_summary(self):
        report = EvalReport(label='READ', variable='density', variant='ridge', r2=[0.9, 0.7], mse=[0.1, 0.3])
        assert report.r2_mean == pytest.approx(0.8)
        assert report.r2_sd == pytest.approx(np.sqrt(0.02))
        summary = report.to_dict()
        assert summary['trials'] == 2
        assert summary['mse']['mean'] == pytest.approx(0.2)

    def test_single_trial_sd(self):
        report = EvalReport(label='READ', variable='density', variant='ridge', r2=[0.5], mse=[0.2])
        assert report.r2_sd == 0.0
        assert '0.5000±0.0000' in render_reports([report])
