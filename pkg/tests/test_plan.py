import pytest

from read_pipeline.plan.plan import Plan

ATTEMPTS = {'flaky': 0}


def double(value):
    return 2 * value


def flaky():
    ATTEMPTS['flaky'] += 1
    if ATTEMPTS['flaky'] == 1:
        raise RuntimeError('first attempt fails')
    return 'recovered'


class Offset:
    instances = 0

    def __init__(self, session):
        self.session = session
        Offset.instances += 1

    def add(self, value):
        return value + self.session

    def subtract(self, value):
        return value - self.session


def test_run():
    plan = Plan()
    plan.append_step('one', double, {'value': 2})
    plan.append_step('two', double, {'value': 5})
    assert plan.run() == [4, 10]
    assert plan.is_finished
    assert all(step.is_done for step in plan.steps)
    assert plan.sections == ['one', 'two']


def test_dry_run():
    plan = Plan()
    plan.append_step('one', double, {'value': 2})
    assert plan.run(dry_run=True) == [None]
    assert 'RAN' in plan.describe()


def test_failure_dumps_and_resumes(tmp_path):
    ATTEMPTS['flaky'] = 0
    dump = str(tmp_path / 'plan-dump.json')
    plan = Plan()
    plan.append_step('first', double, {'value': 1})
    plan.append_step('second', flaky)
    plan.append_step('third', double, {'value': 3})
    with pytest.raises(RuntimeError):
        plan.run(dump_path=dump)

    resumed = Plan.load(dump, session=None)
    assert resumed.current_step_number == 1
    assert [step.is_done for step in resumed.steps] == [True, False, False]
    assert resumed.run() == ['recovered', 6]
    assert ATTEMPTS['flaky'] == 2


def test_bound_methods_share_one_instance(tmp_path):
    dump = str(tmp_path / 'plan.json')
    api = Offset(session=1)
    plan = Plan()
    plan.append_step('add', api.add, {'value': 5})
    plan.append_step('subtract', api.subtract, {'value': 5})
    assert plan.steps[0].qualified_name == 'test_plan.Offset.add'
    plan.save(dump)

    Offset.instances = 0
    loaded = Plan.load(dump, session=10)
    assert loaded.run() == [15, -5]
    assert Offset.instances == 1
