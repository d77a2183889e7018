import logging
import sys
import traceback
from functools import wraps

EXIT_SUCCESS = 0
EXIT_FAILURE = 1
EXIT_CONFIGURATION_ERROR = 2
EXIT_DATA_ERROR = 3


def handle_exceptions(func):
    """ Decorator to turn pipeline exceptions into logged messages and process exit codes. """
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            rtn = func(*args, **kwargs)
        except CustomException as e:
            logging.critical(e.message)
            sys.exit(e.exit_code)
        except KeyboardInterrupt:
            logging.critical("Interrupted.")
            sys.exit(EXIT_FAILURE)
        except Exception as e:
            logging.critical("General error occurred: {}, traceback: {}".format(
                repr(e), ''.join(traceback.format_tb(e.__traceback__))))
            sys.exit(EXIT_FAILURE)
        return rtn if rtn is not None else EXIT_SUCCESS
    return wrapper


class CustomException(Exception):
    """ Class that all custom exceptions must inherit in order for exception to be caught by the
    handle_exceptions decorator.
    """
    exit_code = EXIT_FAILURE

    def __init__(self, message):
        self.message = message
        super().__init__(self.message)


class ConfigurationError(CustomException):
    exit_code = EXIT_CONFIGURATION_ERROR


class DataError(CustomException):
    exit_code = EXIT_DATA_ERROR


class CheckpointFormatError(DataError):
    def __init__(self, path, reason):
        super().__init__("Checkpoint {} could not be read: {}".format(path, reason))


class CoordinateOutOfRange(DataError):
    def __init__(self, lon, lat):
        super().__init__("Point (lon={}, lat={}) is outside the Web-Mercator range.".format(lon, lat))


class DanglingDistrictReference(DataError):
    def __init__(self, district_id, row):
        super().__init__("Embedding row {} references unknown district {}.".format(row, district_id))


class DegenerateVariance(DataError):
    def __init__(self):
        super().__init__("Input has zero total variance; principal components are undefined.")


class DistrictParseError(DataError):
    def __init__(self, index, reason):
        super().__init__("Feature {} could not be parsed as a district: {}".format(index, reason))


class EmbeddingFormatError(DataError):
    def __init__(self, path, row, reason):
        super().__init__("Embedding store {} is malformed at row {}: {}".format(path, row, reason))


class EmptyLabeledSet(ConfigurationError):
    def __init__(self):
        super().__init__("Training requires at least one labeled image.")


class ImageFormatError(DataError):
    def __init__(self, reason):
        super().__init__("Tile image is not an 8-bit RGB raster: {}".format(reason))


class InvalidAugmentation(DataError):
    def __init__(self, transform_id):
        super().__init__("Augmentation id {} is not in 0..7.".format(transform_id))


class InvalidComponentCount(ConfigurationError):
    def __init__(self, k, upper):
        super().__init__("Number of principal components {} must lie in [1, {}].".format(k, upper))


class InvalidConfiguration(ConfigurationError):
    def __init__(self, key, reason):
        super().__init__("Configuration key {} is invalid: {}".format(key, reason))


class InvalidPolygon(DataError):
    def __init__(self, district_id, reason):
        super().__init__("Polygon of district {} is invalid: {}".format(district_id, reason))


class InvalidTile(DataError):
    def __init__(self, x, y, z):
        super().__init__("Tile (x={}, y={}, z={}) is not a valid Web-Mercator tile.".format(x, y, z))


class LabelParseError(DataError):
    def __init__(self, path, row, reason):
        super().__init__("Label file {} is malformed at row {}: {}".format(path, row, reason))


class LineageConflict(DataError):
    def __init__(self, hashes):
        super().__init__("Inputs were produced by different configurations ({}); rerun the pipeline with a "
                         "single configuration.".format(', '.join(sorted(hashes))))


class MissingPrerequisite(DataError):
    def __init__(self, artifact, producer):
        super().__init__("Artifact {} is missing from the work directory; run `read-pipeline {}` first.".format(
            artifact, producer))


class MissingTileImage(DataError):
    def __init__(self, tile):
        super().__init__("No image found for tile z={} x={} y={}.".format(tile.z, tile.x, tile.y))


class NonFiniteInput(DataError):
    def __init__(self, what):
        super().__init__("{} contains non-finite values.".format(what))


class NonPositiveTarget(DataError):
    def __init__(self, district_id, variable, value):
        super().__init__("Variable {} of district {} is {}; log-scaling requires positive values.".format(
            variable, district_id, value))


class ShapeMismatch(DataError):
    def __init__(self, what, expected, got):
        super().__init__("{} has shape {}, expected {}.".format(what, got, expected))


class SingleClassTrainingSet(ConfigurationError):
    def __init__(self):
        super().__init__("The binary training set contains a single class; both classes are required.")


class SingularSystem(DataError):
    def __init__(self, lam):
        super().__init__("Normal equations are singular with lambda={}; use lambda > 0.".format(lam))


class TooFewRows(DataError):
    def __init__(self, rows, minimum):
        super().__init__("Dataset has {} rows, at least {} are required.".format(rows, minimum))


class UndefinedMetric(DataError):
    def __init__(self, metric, reason):
        super().__init__("{} is undefined: {}".format(metric, reason))


class UntrainedModel(DataError):
    def __init__(self, name, producer):
        super().__init__("Model {} has not been trained; run `read-pipeline {}` first.".format(name, producer))


class WorkdirLocked(DataError):
    def __init__(self, path):
        super().__init__("Work directory is locked by another command ({}).".format(path))
