""" Tile images: decoding, dataset normalization and the on-disk image directory.

Images live under `<root>/<district_id>/z_x_y.png`; a tile shared by two districts may be stored under both.
"""
import io
import logging
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from read_pipeline.common.exceptions import ImageFormatError, MissingTileImage, ShapeMismatch
from read_pipeline.common.utility import read_json, write_json
from read_pipeline.geo.tiles import TileId

# standard deviations below this are replaced by 1 so constant channels stay finite
MIN_STD = 1e-8


@dataclass(frozen=True, eq=False)
class TileImage:
    """ One tile's pixels as an H x W x 3 float array.

    Unstandardized images hold intensities in [0, 1]; standardized ones are centred per channel.
    """
    tile: TileId
    pixels: np.ndarray
    standardized: bool = False

    def __post_init__(self):
        pixels = self.pixels
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ImageFormatError("expected H x W x 3 pixels, got shape {}".format(pixels.shape))
        if pixels.shape[0] != pixels.shape[1]:
            raise ShapeMismatch("Tile image", "square", pixels.shape[:2])
        if not self.standardized and (pixels.min(initial=0.0) < 0.0 or pixels.max(initial=0.0) > 1.0):
            raise ImageFormatError("intensities outside [0, 1]")

    @property
    def size(self):
        return self.pixels.shape[0]


@dataclass(frozen=True)
class NormalizationStats:
    mean: tuple
    std: tuple

    def to_dict(self):
        return {'mean': list(self.mean), 'std': list(self.std)}

    @classmethod
    def from_dict(cls, payload):
        return cls(mean=tuple(float(v) for v in payload['mean']), std=tuple(float(v) for v in payload['std']))

    def save(self, path):
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path):
        return cls.from_dict(read_json(path))


def decode_png(raw):
    """ Decode PNG bytes into an H x W x 3 uint8 array.

    :raises ImageFormatError: when the raster is not 8-bit RGB.
    """
    try:
        image = Image.open(io.BytesIO(raw))
        image.load()
    except (OSError, ValueError) as e:
        raise ImageFormatError("not a readable image ({})".format(e))
    if image.mode != 'RGB':
        raise ImageFormatError("mode {} has {} channels".format(image.mode, len(image.getbands())))
    return np.asarray(image, dtype=np.uint8)


def encode_png(pixels):
    """ Encode an H x W x 3 uint8 array as PNG bytes. """
    buffer = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8)).save(buffer, format='PNG', optimize=False)
    return buffer.getvalue()


def _as_uint8(raw):
    if isinstance(raw, (bytes, bytearray)):
        return decode_png(bytes(raw))
    array = np.asarray(raw)
    if array.dtype != np.uint8:
        raise ImageFormatError("raster dtype {} is not 8-bit".format(array.dtype))
    if array.ndim != 3 or array.shape[2] != 3:
        raise ImageFormatError("raster has shape {}, expected H x W x 3".format(array.shape))
    return array


def resize_raster(raster, size):
    """ Nearest-neighbour resize of a uint8 raster to size x size. """
    if raster.shape[0] == size and raster.shape[1] == size:
        return raster
    resized = Image.fromarray(np.ascontiguousarray(raster)).resize((size, size), Image.NEAREST)
    return np.asarray(resized, dtype=np.uint8)


def compute_normalization(rasters):
    """ Per-channel mean and standard deviation of intensities scaled to [0, 1], over every pixel of a corpus.

    :param rasters: Iterable of uint8 rasters (or PNG bytes).
    :rtype: NormalizationStats
    """
    total = np.zeros(3)
    total_sq = np.zeros(3)
    count = 0
    for raw in rasters:
        values = _as_uint8(raw).reshape(-1, 3).astype(float) / 255.0
        total += values.sum(axis=0)
        total_sq += (values ** 2).sum(axis=0)
        count += values.shape[0]
    if count == 0:
        raise ImageFormatError("no images to compute normalization statistics from")
    mean = total / count
    std = np.sqrt(np.maximum(total_sq / count - mean ** 2, 0.0))
    std = np.where(std < MIN_STD, 1.0, std)
    logging.info("Normalization statistics: mean {} std {}".format(np.round(mean, 4), np.round(std, 4)))
    return NormalizationStats(mean=tuple(float(v) for v in mean), std=tuple(float(v) for v in std))


def normalize_image(raw, stats=None, tile=None, size=None):
    """ Scale an 8-bit RGB raster to [0, 1] and standardize each channel with dataset statistics.

    :param raw: PNG bytes or an H x W x 3 uint8 array.
    :param NormalizationStats stats: Dataset statistics; when None the image is only scaled.
    :param TileId tile: The tile the raster belongs to.
    :param int size: Optional edge length to resize to before scaling.
    :rtype: TileImage
    """
    raster = _as_uint8(raw)
    if size is not None:
        raster = resize_raster(raster, size)
    pixels = raster.astype(float) / 255.0
    if stats is None:
        return TileImage(tile=tile, pixels=pixels, standardized=False)
    pixels = (pixels - np.asarray(stats.mean)) / np.asarray(stats.std)
    return TileImage(tile=tile, pixels=pixels, standardized=True)


class ImageDirectory:
    """ Index of the PNG tiles below a root directory. """
    def __init__(self, root):
        self.root = root
        self._paths = {}
        if not os.path.isdir(root):
            logging.warning("Image directory {} does not exist".format(root))
            return
        for directory, _, filenames in sorted(os.walk(root)):
            for filename in sorted(filenames):
                if not filename.endswith('.png'):
                    continue
                try:
                    tile = TileId.from_filename(filename)
                except (ValueError, TypeError):
                    logging.debug("Skipping {}".format(os.path.join(directory, filename)))
                    continue
                self._paths.setdefault(tile, os.path.join(directory, filename))
        logging.debug("Indexed {} tile images under {}".format(len(self._paths), root))

    def __contains__(self, tile):
        return tile in self._paths

    def __len__(self):
        return len(self._paths)

    @property
    def tiles(self):
        return sorted(self._paths)

    def path(self, tile):
        if tile not in self._paths:
            raise MissingTileImage(tile)
        return self._paths[tile]

    def read_raw(self, tile):
        """ Raw PNG bytes of a tile. """
        with open(self.path(tile), 'rb') as f:
            return f.read()

    def read_raster(self, tile, size=None):
        raster = decode_png(self.read_raw(tile))
        return resize_raster(raster, size) if size else raster

    def load(self, tile, stats=None, size=None):
        """ Load and normalize one tile. """
        return normalize_image(self.read_raw(tile), stats=stats, tile=tile, size=size)

    def load_batch(self, tiles, stats=None, size=None):
        """ Load tiles as an N x H x W x 3 array. """
        return np.stack([self.load(tile, stats=stats, size=size).pixels for tile in tiles])


def write_tile_png(root, district_id, tile, pixels):
    """ Write a tile raster to `<root>/<district_id>/z_x_y.png`. """
    directory = os.path.join(root, district_id)
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, tile.filename)
    with open(path, 'wb') as f:
        f.write(encode_png(pixels))
    return path
