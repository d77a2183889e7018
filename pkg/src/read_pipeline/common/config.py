import copy
import hashlib
import json
import logging

import yaml
from box import Box

from read_pipeline.common.constants import DEFAULT_ZOOM, MAX_ZOOM
from read_pipeline.common.exceptions import InvalidConfiguration

DEFAULT_CONFIG = {
    'paths': {
        'districts': 'data/districts.geojson',
        'images': 'data/tiles',
        'labels': 'data/labels.csv',
        'binary_labels': 'data/labels_binary.csv',
        'demographics': 'data/demographics.csv',
        'embeddings': None,
        'workdir': 'work',
        'reference_workdir': None,
    },
    'seed': None,
    'zoom': DEFAULT_ZOOM,
    'extractor': {
        'mode': 'builtin-convnet',
        'batch_size': 64,
        'clients': {
            'builtin-convnet': {
                'package_name': 'read_pipeline.client',
                'module_name': 'extractor',
                'class_name': 'ConvNetExtractor',
            },
            'external-embeddings': {
                'package_name': 'read_pipeline.client',
                'module_name': 'extractor',
                'class_name': 'ExternalEmbeddingExtractor',
            },
        },
    },
    'embeddings': {
        'format': 'csv',
    },
    'convnet': {
        'input_size': 64,
        'channels': [8, 16, 32],
        'embedding_dim': 32,
    },
    'mean_teacher': {
        'epochs': 60,
        'rampup_epochs': 40,
        'rampup_target': 12.5,
        'rampup_shape': 'linear',
        'ema_alpha': 0.99,
        'labeled_batch': 32,
        'unlabeled_batch': 32,
        'lr': 0.01,
        'momentum': 0.9,
        'consistency_on_labeled': True,
        'test_fraction': 0.2,
        'unlabeled_limit': 2000,
    },
    'pruning': {
        'enabled': True,
        'threshold': 0.5,
        'epochs': 30,
        'batch_size': 32,
        'lr': 0.01,
        'momentum': 0.9,
        'test_fraction': 0.2,
    },
    'pca': {
        'k': 'auto',
        'k_max': 10,
        'variance_target': 0.8,
        'transductive': False,
    },
    'spatial_stats': {
        'sigma_ddof': 1,
    },
    'regression': {
        'model': 'gbt',
        'trials': 20,
        'folds': 4,
        'test_fraction': 0.2,
        'k_grid': [1, 2, 3, 4, 5, 6, 7, 8, 9, 10],
        'lambda_grid': [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3],
        'lasso_tol': 1e-8,
        'gbt': {
            'trees': 200,
            'depth_grid': [2, 3, 4],
            'learning_rate': 0.1,
        },
    },
    'synth': {
        'zoom': DEFAULT_ZOOM,
        'origin_x': 27900,
        'origin_y': 12700,
        'width': 80,
        'height': 60,
        'districts': 64,
        'tile_size': 16,
        'field_bumps': 12,
        'field_scale': 8.0,
        'uninhabited_fraction': 0.45,
        'urban_fraction': 0.2,
        'labeled_tiles': 1000,
        'annotator_noise': 0.1,
        'sigma_noise': 0.05,
        'variables': {
            'density': [4.0, 3.0],
            'count': [3.5, 1.0],
        },
    },
    'logging': {
        'progress': True,
    },
}


def _deep_merge(base, override, prefix=''):
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in merged:
            raise InvalidConfiguration("{}{}".format(prefix, key), "unknown key")
        if isinstance(merged[key], dict) and key != 'variables' and key != 'clients':
            if not isinstance(value, dict):
                raise InvalidConfiguration("{}{}".format(prefix, key), "expected a section")
            merged[key] = _deep_merge(merged[key], value, prefix="{}{}.".format(prefix, key))
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _require_range(config, key, low, high):
    value = config
    for part in key.split('.'):
        value = value[part]
    if not isinstance(value, (int, float)) or not (low <= value <= high):
        raise InvalidConfiguration(key, "{} is outside [{}, {}]".format(value, low, high))


def validate_config(config):
    """ Check the ranges the pipeline depends on.

    :param dict config: The merged configuration.
    """
    if config.get('seed') is None:
        raise InvalidConfiguration('seed', "a seed is mandatory")
    if not isinstance(config['seed'], int) or config['seed'] < 0:
        raise InvalidConfiguration('seed', "must be a non-negative integer")
    _require_range(config, 'zoom', 0, MAX_ZOOM)
    _require_range(config, 'mean_teacher.ema_alpha', 0.0, 1.0)
    _require_range(config, 'mean_teacher.rampup_target', 0.0, float('inf'))
    _require_range(config, 'mean_teacher.test_fraction', 0.0, 0.9)
    _require_range(config, 'pruning.threshold', 0.0, 1.0)
    _require_range(config, 'pca.k_max', 1, 10)
    _require_range(config, 'pca.variance_target', 0.0, 1.0)
    _require_range(config, 'spatial_stats.sigma_ddof', 0, 1)
    _require_range(config, 'regression.folds', 2, 20)
    _require_range(config, 'regression.trials', 1, 10000)
    _require_range(config, 'synth.uninhabited_fraction', 0.0, 1.0)
    _require_range(config, 'synth.urban_fraction', 0.0, 1.0)
    if config['synth']['uninhabited_fraction'] + config['synth']['urban_fraction'] > 1.0:
        raise InvalidConfiguration('synth.urban_fraction', "urban and uninhabited fractions exceed 1")
    if config['synth']['width'] * config['synth']['height'] < config['synth']['districts']:
        raise InvalidConfiguration('synth.districts', "the grid extent has fewer tiles than districts")
    if config['pca']['k'] != 'auto':
        _require_range(config, 'pca.k', 1, config['pca']['k_max'])
    if config['extractor']['mode'] not in config['extractor']['clients']:
        raise InvalidConfiguration('extractor.mode', "no client configured for {}".format(
            config['extractor']['mode']))
    if config['regression']['model'] not in ('ridge', 'lasso', 'gbt'):
        raise InvalidConfiguration('regression.model', "must be one of ridge, lasso, gbt")
    if config['mean_teacher']['rampup_shape'] not in ('linear', 'sigmoid'):
        raise InvalidConfiguration('mean_teacher.rampup_shape', "must be linear or sigmoid")
    if config['embeddings']['format'] not in ('csv', 'bin'):
        raise InvalidConfiguration('embeddings.format', "must be csv or bin")
    input_size = config['convnet']['input_size']
    if input_size % (2 ** len(config['convnet']['channels'])):
        raise InvalidConfiguration('convnet.input_size', "{} is not divisible by 2^{}".format(
            input_size, len(config['convnet']['channels'])))


def build_config(overrides=None, seed=None):
    """ Merge overrides over the defaults and freeze the result.

    :param dict overrides: User configuration (possibly partial).
    :param int seed: Optional seed overriding the configured one.
    :return: The frozen configuration.
    :rtype: Box
    """
    merged = _deep_merge(DEFAULT_CONFIG, overrides)
    if seed is not None:
        merged['seed'] = seed
    validate_config(merged)
    return Box(merged, frozen_box=True)


def load_config(path, seed=None):
    """ Load a YAML configuration file.

    :param str path: The path to the configuration file.
    :param int seed: Optional seed overriding the configured one.
    :return: The frozen configuration.
    :rtype: Box
    """
    logging.debug("Loading configuration from {}".format(path))
    try:
        with open(path, 'r') as f:
            overrides = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        raise InvalidConfiguration(path, repr(e))
    if not isinstance(overrides, dict):
        raise InvalidConfiguration(path, "top level must be a mapping")
    return build_config(overrides, seed=seed)


def config_hash(config):
    """ Hash of the canonical JSON form of a configuration. """
    canonical = json.dumps(config.to_dict() if isinstance(config, Box) else config, sort_keys=True)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]
