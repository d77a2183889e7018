import importlib.util
import json
import os
from importlib.machinery import SourceFileLoader

import pytest
import yaml

from read_pipeline.api.pipeline import COMMANDS

SCRIPT = os.path.join(os.path.dirname(__file__), '..', 'bin', 'read-pipeline')


@pytest.fixture(scope='module')
def cli():
    loader = SourceFileLoader('read_pipeline_cli', SCRIPT)
    spec = importlib.util.spec_from_loader('read_pipeline_cli', loader)
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def test_every_command_has_a_subparser(cli):
    parser = cli.make_parsers()
    for name in list(COMMANDS) + ['run-all']:
        args = parser.parse_args([name, '--config', 'c.yml'])
        assert args.command == name


def test_arguments(cli):
    parser = cli.make_parsers()
    args = parser.parse_args(['evaluate', '--config', 'c.yml', '--variable', 'all', '--seed', '3', '-v'])
    assert (args.variable, args.seed, args.verbose) == ('all', 3, True)
    assert parser.parse_args(['heatmap', '--config', 'c.yml']).district is None
    assert parser.parse_args(['run-all', '--config', 'c.yml', '--resume']).resume


def test_config_is_required(cli):
    with pytest.raises(SystemExit):
        cli.make_parsers().parse_args(['ingest'])


def test_configuration_error_exit_code(cli, monkeypatch, tmp_path):
    monkeypatch.setattr('sys.argv', ['read-pipeline', 'ingest', '--config', str(tmp_path / 'absent.yml')])
    with pytest.raises(SystemExit) as exit_info:
        cli.main()
    assert exit_info.value.code == 2


def test_data_error_exit_code(cli, monkeypatch, tmp_path, small_config):
    path = tmp_path / 'config.yml'
    path.write_text(yaml.safe_dump(small_config.to_dict()))
    monkeypatch.setattr('sys.argv', ['read-pipeline', 'select-tiles', '--config', str(path)])
    with pytest.raises(SystemExit) as exit_info:
        cli.main()
    assert exit_info.value.code == 3


def test_synth_world(cli, monkeypatch, capsys, tmp_path, small_config):
    path = tmp_path / 'config.yml'
    path.write_text(yaml.safe_dump(small_config.to_dict()))
    monkeypatch.setattr('sys.argv', ['read-pipeline', 'synth-world', '--config', str(path)])
    assert cli.main() == 0
    assert json.loads(capsys.readouterr().out)['districts'] == 12
