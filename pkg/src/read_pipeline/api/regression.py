import logging
import os

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from read_pipeline.api.api import API, locked
from read_pipeline.common.exceptions import InvalidConfiguration, UndefinedMetric
from read_pipeline.common.utility import plot_scatter_district_map, write_csv, write_figure
from read_pipeline.geo.selection import read_selections
from read_pipeline.model.pruning import INHABITED, keep_all, prune
from read_pipeline.regression.evaluation import EvalSettings, ablate, cross_validate, evaluate, log_targets, mse, r2, \
    render_reports, render_variables, sweep
from read_pipeline.regression.models import load_regressor, predict, save_regressor
from read_pipeline.stats import pca
from read_pipeline.stats.spatial import ReducedDistrict, read_representations, represent
from read_pipeline.store.demographics import load_demographics, variable_names
from read_pipeline.store.districts import load_districts

ALL_VARIABLES = 'all'


class RegressionAPI(API):
    """ Regression API class: demographic regressors, their evaluation and prediction. """
    def __init__(self, **kwargs):
        super().__init__(**kwargs)

    def _demographics(self):
        return load_demographics(self.config.paths.demographics)

    def _variables(self, demographics, variable):
        names = variable_names(demographics)
        if variable == ALL_VARIABLES:
            return names
        if variable not in names:
            raise InvalidConfiguration('variable', "{} is not a demographic variable (have {})".format(
                variable, ', '.join(names)))
        return [variable]

    def _dataset(self, demographics, variable, district_ids):
        ids = [district_id for district_id in district_ids if district_id in demographics]
        dropped = len(district_ids) - len(ids)
        if dropped:
            logging.warning("{} districts have no demographics and are skipped".format(dropped))
        return log_targets(demographics, variable, ids)

    @locked
    def train_regressor(self, variable='density'):
        """ Fit the configured regressor on every represented district, tuning its hyperparameter by k-fold CV. """
        path = self.workdir.require('representations')
        ids, matrix, meta = read_representations(path)
        demographics = self._demographics()
        settings = EvalSettings.from_config(self.config)
        summaries = {}
        for name in self._variables(demographics, variable):
            dataset = self._dataset(demographics, name, ids)
            rows = np.array([ids.index(district_id) for district_id in dataset.district_ids], dtype=int)
            x = matrix[rows]
            positions = np.random.default_rng(settings.seed).permutation(len(dataset))
            k, value, cv_mse = cross_validate({meta['k']: x}, dataset.y, positions, settings.model, settings)
            model = settings.fit(settings.model, x, dataset.y, value)
            save_regressor(self.workdir.path('regressor', variable=name), model,
                           dict(self.meta, variable=name, k=k))
            self.workdir.record('regressor', inputs=[self.workdir.key('representations')], variable=name)
            summaries[name] = {'model': settings.model, 'k': k, 'hyperparameters': model.hyperparameters(),
                               'cv_mse': cv_mse, 'train_r2': r2(dataset.y, predict(model, x)),
                               'districts': len(dataset)}
            self.write_report('regressor_{}'.format(name), summaries[name])
        return summaries

    def _protocol(self, variable, name, run, render):
        """ Run an evaluation protocol per variable and write `<name>_<variable>` reports. """
        tiles = self.kept_embeddings()
        demographics = self._demographics()
        settings = EvalSettings.from_config(self.config)
        results = {}
        for target in self._variables(demographics, variable):
            dataset = self._dataset(demographics, target, list(tiles))
            reports = run(tiles, dataset, settings)
            results[target] = reports
            self.write_report('{}_{}'.format(name, target), {'reports': [report.to_dict() for report in reports]},
                              render(reports, title="{} ({})".format(name, target)))
        return results

    @locked
    def evaluate(self, variable='density'):
        """ Mean and standard deviation of test R-squared and MSE over seeded trials. """
        results = self._protocol(variable, 'evaluate', lambda tiles, dataset, settings: [
            evaluate(tiles, dataset, settings)], render_reports)
        if len(results) > 1:
            reports = [reports[0] for reports in results.values()]
            self.write_report('evaluate_all', {'reports': [report.to_dict() for report in reports]},
                              render_variables(reports, title='evaluate (all variables)'))
        return {target: reports[0].to_dict() for target, reports in results.items()}

    @locked
    def ablate(self, variable='density'):
        """ Re-evaluate with each statistic group removed in turn. """
        results = self._protocol(variable, 'ablation', ablate, render_reports)
        return {target: [report.to_dict() for report in reports] for target, reports in results.items()}

    @locked
    def sweep(self, variable='density'):
        """ Test performance of every regressor at every fixed PCA dimension. """
        results = self._protocol(variable, 'sweep', sweep, render_reports)
        return {target: [report.to_dict() for report in reports] for target, reports in results.items()}

    def _transferred_representations(self, source):
        """ Representations of this work directory's selected tiles under the models of another one. """
        selections, _ = read_selections(self.workdir.require('selection'), zoom=self.config.zoom)
        model, _ = pca.load_pca(source.require('pca'))
        factory = self.session.client_factory
        extractor = factory.get_extractor(workdir=source)
        if self.config.pruning.enabled and source.exists('pruner'):
            classifier = factory.get_pruner(workdir=source).probability(INHABITED)
            pruned = [prune(selection, classifier, self.config.pruning.threshold) for selection in selections.values()]
        else:
            pruned = [keep_all(selection) for selection in selections.values()]
        ids, vectors = [], []
        for selection in pruned:
            tiles = selection.sorted_kept()
            if not tiles:
                logging.warning("District {} has no kept tiles and is skipped".format(selection.district_id))
                continue
            reduced = ReducedDistrict(selection.district_id, pca.transform(model, extractor.embed(tiles)))
            ids.append(selection.district_id)
            vectors.append(represent(reduced, sigma_ddof=self.config.spatial_stats.sigma_ddof).vector)
        return ids, np.vstack(vectors) if vectors else np.zeros((0, 0))

    @locked
    def predict(self, variable='density'):
        """ Predict a variable for every district, optionally with the models of `paths.reference_workdir`.

        Writes `predictions_<variable>.csv` and a district map; when observed values exist the R-squared and MSE
        against them are reported too.
        """
        source = self.session.model_workdir
        if source is self.workdir:
            ids, matrix, _ = read_representations(self.workdir.require('representations'))
        else:
            ids, matrix = self._transferred_representations(source)
        demographics = self._demographics() if os.path.isfile(self.config.paths.demographics or '') else {}
        if demographics:
            names = self._variables(demographics, variable)
        elif variable == ALL_VARIABLES:
            raise InvalidConfiguration('variable', "predicting all variables needs a demographics file")
        else:
            names = [variable]
        centres = {district.district_id: district.bounds for district in
                   load_districts(self.workdir.require('districts'))}
        summaries = {}
        for name in names:
            model, _ = load_regressor(source.require('regressor', variable=name))
            log_prediction = predict(model, matrix) if len(ids) else np.zeros(0)
            observed = np.array([demographics[d].variables.get(name, np.nan) if d in demographics else np.nan
                                 for d in ids], dtype=float)
            frame = pd.DataFrame({'district_id': ids, 'log_prediction': log_prediction,
                                  'prediction': np.exp(log_prediction), 'observed': observed})
            write_csv(self.workdir.report_path('predictions_{}.csv'.format(name)), frame, self.meta)

            data = []
            for district_id, value in zip(ids, np.exp(log_prediction)):
                west, south, east, north = centres[district_id]
                data.append({'district_id': district_id, 'lon': (west + east) / 2.0, 'lat': (south + north) / 2.0,
                             'value': float(value)})
            fig = plot_scatter_district_map(go.Figure(), data, 'lat', 'lon', 'value', 'district_id')
            fig.update_layout(title="Predicted {}".format(name))
            write_figure(fig, self.workdir.report_path('predictions_{}.html'.format(name)))

            summary = {'districts': len(ids), 'transferred_from': None if source is self.workdir else source.root}
            known = np.isfinite(observed) & (observed > 0)
            if known.sum() >= 2:
                y = np.log(observed[known])
                try:
                    summary.update({'r2': r2(y, log_prediction[known]), 'mse': mse(y, log_prediction[known])})
                except UndefinedMetric as e:
                    logging.warning(e.message)
            summaries[name] = summary
            self.write_report('predictions_{}'.format(name), summary)
        return summaries
