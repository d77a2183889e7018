import hashlib
import os

import pytest

from read_pipeline.common.exceptions import LineageConflict, MissingPrerequisite, WorkdirLocked
from read_pipeline.session.workdir import WorkdirSession


def write(workdir, name, text='payload', **fields):
    path = workdir.path(name, **fields)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, 'w') as f:
        f.write(text)
    return path


def test_keys_follow_the_layout(tmp_path):
    workdir = WorkdirSession(str(tmp_path), 'h1')
    assert workdir.key('regressor', variable='density') == os.path.join('models', 'regressor_density.npz')
    assert workdir.key('embeddings', extension='bin') == os.path.join('embeddings', 'embeddings.bin')
    workdir.ensure_layout()
    assert sorted(os.listdir(str(tmp_path))) == ['embeddings', 'models', 'pca', 'repr', 'reports', 'tiles']


def test_require_names_the_producing_command(tmp_path):
    workdir = WorkdirSession(str(tmp_path), 'h1')
    with pytest.raises(MissingPrerequisite, match='select-tiles'):
        workdir.require('selection')


def test_record(tmp_path):
    workdir = WorkdirSession(str(tmp_path), 'h1')
    path = write(workdir, 'districts')
    write(workdir, 'selection')
    workdir.record('districts')
    key = workdir.record('selection', inputs=[workdir.key('districts')])
    entry = workdir.manifest[key]
    assert entry['command'] == 'select-tiles'
    assert entry['config_hash'] == 'h1'
    assert entry['inputs'] == [workdir.key('districts')]
    with open(path, 'rb') as f:
        assert workdir.manifest[workdir.key('districts')]['sha256'] == hashlib.sha256(f.read()).hexdigest()
    assert workdir.require('selection') == workdir.path('selection')


def test_unrecorded_or_deleted_artifacts_are_missing(tmp_path):
    workdir = WorkdirSession(str(tmp_path), 'h1')
    path = write(workdir, 'pca')
    assert not workdir.exists('pca')
    workdir.record('pca')
    assert workdir.exists('pca')
    os.remove(path)
    assert not workdir.exists('pca')


def test_lineage(tmp_path):
    first = WorkdirSession(str(tmp_path), 'h1')
    second = WorkdirSession(str(tmp_path), 'h2')
    write(first, 'districts')
    first.record('districts')
    write(first, 'selection')
    first.record('selection', inputs=[first.key('districts')])
    assert first.check_lineage([first.key('selection')]) == {'h1'}

    write(second, 'pca')
    second.record('pca', inputs=[second.key('selection')])
    assert second.lineage([second.key('pca')]) == {'h1', 'h2'}
    with pytest.raises(LineageConflict):
        second.check_lineage([second.key('pca')])


def test_lock(tmp_path):
    workdir = WorkdirSession(str(tmp_path / 'work'), 'h1')
    with workdir.lock():
        assert os.path.isfile(workdir.lock_path)
        with pytest.raises(WorkdirLocked):
            with workdir.lock():
                pass
    assert not os.path.exists(workdir.lock_path)


def test_lock_released_on_failure(tmp_path):
    workdir = WorkdirSession(str(tmp_path), 'h1')
    with pytest.raises(RuntimeError):
        with workdir.lock():
            raise RuntimeError('stage failed')
    with workdir.lock():
        pass
