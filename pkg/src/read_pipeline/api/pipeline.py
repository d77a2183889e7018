import logging
import os

from read_pipeline.api.api import API
from read_pipeline.api.data import DataAPI
from read_pipeline.api.model import ModelAPI
from read_pipeline.api.regression import RegressionAPI
from read_pipeline.api.representation import RepresentationAPI
from read_pipeline.common.exceptions import InvalidConfiguration, MissingPrerequisite
from read_pipeline.plan.plan import PipelinePlan

PLAN_DUMP = 'plan-dump.json'

# command -> (API class, method name, accepted arguments)
COMMANDS = {
    'synth-world': (DataAPI, 'synth_world', ()),
    'ingest': (DataAPI, 'ingest', ()),
    'select-tiles': (DataAPI, 'select_tiles', ()),
    'train-extractor': (ModelAPI, 'train_extractor', ()),
    'train-pruner': (ModelAPI, 'train_pruner', ()),
    'embed': (ModelAPI, 'embed', ()),
    'prune': (ModelAPI, 'prune', ()),
    'fit-pca': (RepresentationAPI, 'fit_pca', ()),
    'represent': (RepresentationAPI, 'represent', ()),
    'train-regressor': (RegressionAPI, 'train_regressor', ('variable',)),
    'evaluate': (RegressionAPI, 'evaluate', ('variable',)),
    'predict': (RegressionAPI, 'predict', ('variable',)),
    'ablate': (RegressionAPI, 'ablate', ('variable',)),
    'sweep': (RegressionAPI, 'sweep', ('variable',)),
    'heatmap': (ModelAPI, 'heatmap', ('district',)),
}


class PipelineAPI(API):
    """ Pipeline API class: command dispatch and the resumable end-to-end plan. """
    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self._apis = {}

    def _api(self, api_class):
        if api_class not in self._apis:
            self._apis[api_class] = api_class(session=self.session)
        return self._apis[api_class]

    def command(self, name):
        """ The bound API method behind a command name, and the arguments it accepts. """
        if name not in COMMANDS:
            raise InvalidConfiguration('command', "unknown command {}".format(name))
        api_class, method, accepted = COMMANDS[name]
        return getattr(self._api(api_class), method), accepted

    def run(self, name, **arguments):
        """ Run one pipeline command.

        :param str name: The command, e.g. select-tiles.
        :param arguments: Command arguments; those the command does not take are ignored.
        """
        method, accepted = self.command(name)
        logging.info("Running {}".format(name))
        return method(**{key: value for key, value in arguments.items() if key in accepted and value is not None})

    def build_plan(self, variable='density'):
        """ The stage commands in pipeline order. """
        names = ['ingest', 'select-tiles']
        if self.config.extractor.mode == 'builtin-convnet':
            names.append('train-extractor')
        if self.config.pruning.enabled:
            names.append('train-pruner')
        names += ['embed', 'prune', 'fit-pca', 'represent', 'train-regressor', 'evaluate']
        plan = PipelinePlan()
        for name in names:
            method, accepted = self.command(name)
            plan.append_step(name, method, arguments={'variable': variable} if 'variable' in accepted else {})
        return plan

    @property
    def plan_dump_path(self):
        return self.workdir.report_path(PLAN_DUMP)

    def run_all(self, variable='density', resume=False):
        """ Run every stage; a failed run leaves `reports/plan-dump.json` and resume continues from that step. """
        if resume:
            if not os.path.isfile(self.plan_dump_path):
                raise MissingPrerequisite(os.path.join('reports', PLAN_DUMP), 'run-all')
            plan = PipelinePlan.load(self.plan_dump_path, session=self.session)
        else:
            plan = self.build_plan(variable)
        logging.debug("Plan:\n{}".format(plan.describe()))
        returns = plan.run(dump_path=self.plan_dump_path)
        if os.path.isfile(self.plan_dump_path):
            os.remove(self.plan_dump_path)
        return dict(zip(plan.sections[-len(returns):], returns)) if returns else {}
