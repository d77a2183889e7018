import os

import pytest
import yaml
from box import BoxError

from read_pipeline.common.config import build_config, config_hash, load_config
from read_pipeline.common.exceptions import ConfigurationError, InvalidConfiguration
from read_pipeline.model.convnet import ConvNetSpec

ETC_CONFIG = os.path.join(os.path.dirname(__file__), '..', 'etc', 'read-pipeline-config.yml')


def test_seed_is_mandatory():
    with pytest.raises(InvalidConfiguration):
        build_config()
    assert build_config(seed=3).seed == 3
    assert build_config({'seed': 1}, seed=4).seed == 4


@pytest.mark.parametrize('overrides', [
    {'bogus': 1},
    {'pca': {'kk': 1}},
    {'pca': 3},
    {'pca': {'k_max': 11}},
    {'pca': {'k': 4, 'k_max': 3}},
    {'regression': {'model': 'svm'}},
    {'regression': {'folds': 1}},
    {'mean_teacher': {'ema_alpha': 1.5}},
    {'mean_teacher': {'rampup_shape': 'cosine'}},
    {'embeddings': {'format': 'parquet'}},
    {'extractor': {'mode': 'remote'}},
    {'convnet': {'input_size': 30}},
    {'zoom': 19},
    {'synth': {'uninhabited_fraction': 0.7, 'urban_fraction': 0.4}},
])
def test_invalid_overrides(overrides):
    with pytest.raises(InvalidConfiguration):
        build_config(dict(overrides, seed=0) if 'seed' not in overrides else overrides)


def test_partial_sections_keep_defaults():
    config = build_config({'seed': 0, 'regression': {'gbt': {'trees': 5}}})
    assert config.regression.gbt.trees == 5
    assert config.regression.gbt.learning_rate == 0.1
    assert config.regression.model == 'gbt'


def test_convnet_input_size_default():
    assert build_config(seed=0).convnet.input_size == 64
    assert ConvNetSpec().input_size == 64
    assert ConvNetSpec.from_config(build_config(seed=0)).input_size == 64


def test_frozen():
    config = build_config(seed=0)
    with pytest.raises(BoxError):
        config.seed = 1


def test_config_hash():
    assert config_hash(build_config(seed=0)) == config_hash(build_config(seed=0))
    assert config_hash(build_config(seed=0)) != config_hash(build_config(seed=1))
    assert len(config_hash(build_config(seed=0))) == 16


def test_documented_configuration_matches_defaults():
    assert load_config(ETC_CONFIG).to_dict() == build_config(seed=7).to_dict()


def test_load_config(tmp_path):
    path = tmp_path / 'config.yml'
    path.write_text(yaml.safe_dump({'seed': 5, 'pca': {'k': 2}}))
    config = load_config(str(path), seed=6)
    assert (config.seed, config.pca.k) == (6, 2)


@pytest.mark.parametrize('text', ['seed: [1, 2', '- 1\n- 2\n'])
def test_malformed_file(tmp_path, text):
    path = tmp_path / 'config.yml'
    path.write_text(text)
    with pytest.raises(ConfigurationError):
        load_config(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(str(tmp_path / 'absent.yml'))
