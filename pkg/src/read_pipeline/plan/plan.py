from importlib import import_module
import logging
import typing

from read_pipeline.common.utility import read_json, write_json
from read_pipeline.plan.step import Step


class Plan:
    """ An ordered list of steps that can be run, dumped on failure and resumed. """
    def __init__(self, **kwargs):
        self._current_step_number = 0
        self.steps = []

    @property
    def current_step_number(self):
        return self._current_step_number

    @current_step_number.setter
    def current_step_number(self, new_current_step_number):
        self._current_step_number = new_current_step_number

    @property
    def max_step_number(self):
        return self.number_of_steps-1

    @property
    def number_of_steps(self):
        return len(self.steps)

    @property
    def sections(self):
        return [step.section_name for step in self.steps]

    @property
    def is_finished(self):
        return self.current_step_number > self.max_step_number

    def append_step(self, section_name: str, fqn: typing.Callable,
                    arguments: typing.Optional[typing.Dict[str, typing.Any]] = None, is_done: bool = False) -> None:
        """ Append a step to the plan.

        :param str section_name: the pipeline command this step runs
        :param fqn: the function or bound API method to call
        :param dict arguments: keyword arguments to the function
        :param bool is_done: flag for whether step is done
        """
        self.steps.append(Step(section_name, fqn, dict(arguments or {}), is_done))

    def clear(self) -> None:
        """ Clear the current plan. """
        logging.debug("Clearing current plan")
        self.steps = []
        self.current_step_number = 0

    def describe(self) -> str:
        """ Describe the current plan, one line per step. """
        lines = []
        for idx, step in enumerate(self.steps):
            lines.append("{}: ({}) {} {} with parameters {}".format(
                idx, step.section_name, 'RAN' if step.is_done else 'RUN', step.qualified_name, step.arguments))
        return '\n'.join(lines)

    @classmethod
    def load(cls, path: str, session) -> 'Plan':
        """ Load plan from a hard copy.

        API classes named by bound-method steps are instantiated once, with the given session.

        :param str path: the path to load from
        :param Session session: the session handed to API classes
        """
        logging.info("Loading plan from file {}".format(path))
        inputs = read_json(path)
        plan = cls(**inputs)
        plan.current_step_number = inputs['current_step_number']
        function_classes_to_objects = {}        # avoid instantiating duplicate classes of same type
        for step in inputs['steps']:
            module = import_module(step['function_module_name'])
            if step['function_class_name']:     # bound method
                if step['function_class_name'] not in function_classes_to_objects:
                    function_classes_to_objects[step['function_class_name']] = \
                        getattr(module, step['function_class_name'])(session=session)
                fqn = getattr(function_classes_to_objects[step['function_class_name']], step['function_name'])
            else:
                fqn = getattr(module, step['function_name'])
            plan.append_step(step['section_name'], fqn, arguments=step['arguments'], is_done=step['is_done'])
        return plan

    def run(self, dump_path: str = None, dry_run: bool = False) -> typing.List[typing.Any]:
        """ Run the remaining steps.

        On failure the plan is saved to dump_path (when given), with the failed step still pending, and the
        exception is re-raised.

        :param str dump_path: where to save the plan if a step fails
        :param bool dry_run: don't actually do anything, just log
        """
        logging.info("Running plan from step {} of {}".format(self.current_step_number, self.number_of_steps))
        returns = []
        while not self.is_finished:
            try:
                returns.append(self.run_next_step(dry_run))
            except (Exception, KeyboardInterrupt) as e:
                logging.critical("Encountered exception running step {}: {}".format(self.current_step_number,
                                                                                    repr(e)))
                if dump_path:
                    self.save(dump_path)
                raise
        logging.info("Reached end of plan")
        return returns

    def run_next_step(self, dry_run: bool = False) -> typing.Any:
        """ Run the next step.

        :param bool dry_run: don't actually do anything, just log
        """
        current_step = self.steps[self.current_step_number]
        logging.info("{}: ({}) Running {} with parameters {}".format(
            self.current_step_number, current_step.section_name, current_step.qualified_name,
            current_step.arguments))
        rtn = None if dry_run else current_step.fqn(**current_step.arguments)

        current_step.is_done = True
        self.current_step_number += 1
        return rtn

    def save(self, path: str) -> None:
        """ Save a hard copy of the plan.

        :param path: the path to save to
        """
        logging.info("Saving plan to file {}".format(path))
        write_json(path, {
            'current_step_number': self.current_step_number,
            'steps': [step.to_dict() for step in self.steps]
        })


class PipelinePlan(Plan):
    def __init__(self, **kwargs):
        super().__init__(**kwargs)
