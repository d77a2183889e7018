""" A seeded synthetic world: districts, tile images, annotator votes and demographics with a known cause.

A smooth urbanization field is planted over a rectangular block of tiles. Tiles are classed by field rank (the
lowest share uninhabited, the highest share urban) and drawn so the classes look different: water for
uninhabited tiles, green to grey land for inhabited ones, and a dark road grid on urban tiles. Districts
are axis-aligned blocks of whole tiles, so the three-vertex rule selects exactly the tiles a district was built
from. Every demographic variable follows y = exp(a * mean field + b + noise).
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import pandas as pd

from read_pipeline.common.constants import CLASS_NAMES, RURAL, UNINHABITED, URBAN
from read_pipeline.common.exceptions import InvalidConfiguration
from read_pipeline.common.utility import write_csv
from read_pipeline.geo.polygon import DistrictPolygon
from read_pipeline.geo.tiles import TileId, grid_lat, grid_lon
from read_pipeline.store.demographics import DemographicsRow, write_demographics
from read_pipeline.store.districts import write_districts
from read_pipeline.store.images import write_tile_png
from read_pipeline.store.labels import BINARY_TOKENS, write_votes

THREE_CLASS_ANNOTATORS = 4
BINARY_ANNOTATORS = 3
ROAD_PERIOD = 4

WATER = np.array([0.12, 0.32, 0.55])
VEGETATION = np.array([0.22, 0.52, 0.18])
CONCRETE = np.array([0.62, 0.60, 0.58])
FARMLAND = np.array([0.55, 0.42, 0.22])
ROAD = np.array([0.12, 0.12, 0.12])


@dataclass(frozen=True)
class SynthWorldSpec:
    zoom: int = 15
    origin_x: int = 27900
    origin_y: int = 12700
    width: int = 80
    height: int = 60
    districts: int = 64
    tile_size: int = 16
    field_bumps: int = 12
    field_scale: float = 8.0
    uninhabited_fraction: float = 0.45
    urban_fraction: float = 0.2
    labeled_tiles: int = 1000
    annotator_noise: float = 0.1
    sigma_noise: float = 0.05
    variables: Dict[str, tuple] = field(default_factory=lambda: {'density': (4.0, 3.0), 'count': (3.5, 1.0)})

    def __post_init__(self):
        for name in ('uninhabited_fraction', 'urban_fraction', 'annotator_noise'):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfiguration('synth.{}'.format(name), "must lie in [0, 1]")
        if self.uninhabited_fraction + self.urban_fraction > 1.0:
            raise InvalidConfiguration('synth.urban_fraction', "urban and uninhabited fractions exceed 1")
        if self.width < 1 or self.height < 1 or self.districts < 1:
            raise InvalidConfiguration('synth.districts', "extent and district count must be positive")
        if self.width * self.height < self.districts:
            raise InvalidConfiguration('synth.districts', "the grid extent has fewer tiles than districts")
        if self.sigma_noise < 0:
            raise InvalidConfiguration('synth.sigma_noise', "must be non-negative")
        last = 1 << self.zoom
        if self.origin_x + self.width > last or self.origin_y + self.height > last:
            raise InvalidConfiguration('synth.origin_x', "the extent leaves the tile grid at zoom {}".format(
                self.zoom))

    @classmethod
    def from_config(cls, config):
        synth = config.synth
        return cls(zoom=synth.zoom, origin_x=synth.origin_x, origin_y=synth.origin_y, width=synth.width,
                   height=synth.height, districts=synth.districts, tile_size=synth.tile_size,
                   field_bumps=synth.field_bumps, field_scale=synth.field_scale,
                   uninhabited_fraction=synth.uninhabited_fraction, urban_fraction=synth.urban_fraction,
                   labeled_tiles=synth.labeled_tiles, annotator_noise=synth.annotator_noise,
                   sigma_noise=synth.sigma_noise,
                   variables={name: tuple(coefficients) for name, coefficients in synth.variables.items()})


@dataclass(frozen=True, eq=False)
class SyntheticTile:
    tile: TileId
    district_id: str
    tile_class: int
    value: float


@dataclass(eq=False)
class SynthWorld:
    spec: SynthWorldSpec
    seed: int
    field: np.ndarray
    classes: np.ndarray
    districts: List[DistrictPolygon]
    tiles: List[SyntheticTile]
    demographics: List[DemographicsRow]
    votes: Dict[TileId, list]
    binary_votes: Dict[TileId, list]

    def district_tiles(self, district_id):
        return [tile for tile in self.tiles if tile.district_id == district_id]

    def field_mean(self, district_id):
        return float(np.mean([tile.value for tile in self.district_tiles(district_id)]))

    @property
    def uninhabited_share(self):
        return float(np.mean(self.classes == UNINHABITED))


def planted_field(spec, rng):
    """ Sum of random Gaussian bumps over the extent, rescaled to [0, 1].

    :return: height x width array indexed [row, column].
    """
    rows, cols = np.mgrid[0:spec.height, 0:spec.width].astype(float)
    values = np.zeros((spec.height, spec.width))
    for _ in range(spec.field_bumps):
        cx, cy = rng.uniform(0, spec.width), rng.uniform(0, spec.height)
        width = spec.field_scale * rng.uniform(0.5, 1.5)
        amplitude = rng.uniform(0.5, 1.0)
        values += amplitude * np.exp(-((cols - cx) ** 2 + (rows - cy) ** 2) / (2.0 * width ** 2))
    spread = values.max() - values.min()
    if spread <= 0:
        return np.zeros_like(values)
    return (values - values.min()) / spread


def classify_field(values, uninhabited_fraction, urban_fraction):
    """ Class per cell by field rank: the lowest share is uninhabited, the highest share urban. """
    flat = values.ravel()
    order = np.argsort(flat, kind='stable')
    n_uninhabited = int(round(uninhabited_fraction * len(flat)))
    n_urban = int(round(urban_fraction * len(flat)))
    classes = np.full(len(flat), RURAL, dtype=int)
    classes[order[:n_uninhabited]] = UNINHABITED
    if n_urban:
        classes[order[len(flat) - n_urban:]] = URBAN
    return classes.reshape(values.shape)


def _cuts(length, parts, rng):
    """ parts + 1 strictly increasing integer cut positions from 0 to length, jittered around an even split. """
    step = length / parts
    cuts = np.round(np.linspace(0, length, parts + 1) + np.r_[0, rng.uniform(-0.3, 0.3, parts - 1) * step, 0])
    cuts = cuts.astype(int)
    for i in range(1, parts):
        cuts[i] = min(max(cuts[i], cuts[i - 1] + 1), length - (parts - i))
    return cuts


def district_blocks(spec, rng):
    """ Split the extent into spec.districts rectangular blocks: jittered column strips, each cut into rows.

    :return: list of (x0, x1, y0, y1) in tile offsets, half-open.
    """
    columns = int(round(np.sqrt(spec.districts * spec.width / spec.height)))
    columns = max(columns, -(-spec.districts // spec.height))
    columns = min(max(columns, 1), spec.width, spec.districts)
    per_column = [spec.districts // columns + (1 if i < spec.districts % columns else 0) for i in range(columns)]
    column_cuts = _cuts(spec.width, columns, rng)
    blocks = []
    for column, count in enumerate(per_column):
        row_cuts = _cuts(spec.height, count, rng)
        for row in range(count):
            blocks.append((int(column_cuts[column]), int(column_cuts[column + 1]),
                           int(row_cuts[row]), int(row_cuts[row + 1])))
    return blocks


def block_polygon(district_id, block, spec):
    """ The block's outline as a counter-clockwise ring on tile edges. """
    x0, x1, y0, y1 = block
    west, east = grid_lon(spec.origin_x + x0, spec.zoom), grid_lon(spec.origin_x + x1, spec.zoom)
    north, south = grid_lat(spec.origin_y + y0, spec.zoom), grid_lat(spec.origin_y + y1, spec.zoom)
    ring = np.array([[west, south], [east, south], [east, north], [west, north], [west, south]])
    return DistrictPolygon(district_id=district_id, parts=((ring,),))


def render_tile(tile_class, value, size, rng):
    """ Procedural H x W x 3 uint8 raster for a tile of the given class and field value. """
    if tile_class == UNINHABITED:
        pixels = np.broadcast_to(WATER, (size, size, 3)).copy()
    else:
        pixels = np.broadcast_to((1.0 - value) * VEGETATION + value * CONCRETE, (size, size, 3)).copy()
        if tile_class == URBAN:
            phase = rng.integers(ROAD_PERIOD)
            pixels[phase::ROAD_PERIOD, :, :] = ROAD
            pixels[:, phase::ROAD_PERIOD, :] = ROAD
        else:
            half = max(size // 2, 1)
            top, left = rng.integers(0, size - half + 1, size=2)
            pixels[top:top + half, left:left + half, :] = FARMLAND
    pixels = pixels + rng.normal(0.0, 0.03, pixels.shape)
    return np.round(np.clip(pixels, 0.0, 1.0) * 255.0).astype(np.uint8)


def _vote(true_class, noise, n_classes, rng):
    if rng.uniform() >= noise:
        return true_class
    others = [c for c in range(n_classes) if c != true_class]
    return others[int(rng.integers(len(others)))]


def annotate(tiles, spec, rng):
    """ Votes from noisy annotators on a random subset of tiles.

    :return: (three-class votes, binary votes), each TileId -> list of tokens.
    """
    n = min(spec.labeled_tiles, len(tiles))
    chosen = sorted(rng.choice(len(tiles), size=n, replace=False)) if n else []
    votes, binary_votes = {}, {}
    for index in chosen:
        tile = tiles[index]
        votes[tile.tile] = [CLASS_NAMES[_vote(tile.tile_class, spec.annotator_noise, len(CLASS_NAMES), rng)]
                            for _ in range(THREE_CLASS_ANNOTATORS)]
        inhabited = int(tile.tile_class != UNINHABITED)
        binary_votes[tile.tile] = [BINARY_TOKENS[_vote(inhabited, spec.annotator_noise, 2, rng)]
                                   for _ in range(BINARY_ANNOTATORS)]
    return votes, binary_votes


def demographics(world_tiles, district_ids, spec, rng):
    """ y = exp(a * mean field + b + noise) for every configured variable. """
    values = {}
    for tile in world_tiles:
        values.setdefault(tile.district_id, []).append(tile.value)
    rows = []
    for district_id in district_ids:
        mean = float(np.mean(values[district_id]))
        variables = {}
        for name, (a, b) in spec.variables.items():
            noise = rng.normal(0.0, spec.sigma_noise) if spec.sigma_noise > 0 else 0.0
            variables[name] = float(np.exp(a * mean + b + noise))
        rows.append(DemographicsRow(district_id=district_id, variables=variables))
    return rows


def synth_world(spec, seed):
    """ Build a synthetic world in memory.

    :param SynthWorldSpec spec: The world's shape.
    :param int seed: Seed of every random choice.
    :rtype: SynthWorld
    """
    field_rng, district_rng, label_rng, demographic_rng = [np.random.default_rng(s) for s in
                                                           np.random.SeedSequence(seed).spawn(4)]
    values = planted_field(spec, field_rng)
    classes = classify_field(values, spec.uninhabited_fraction, spec.urban_fraction)
    districts, tiles = [], []
    width = len(str(spec.districts))
    for index, block in enumerate(district_blocks(spec, district_rng)):
        district_id = 'D{:0{w}d}'.format(index + 1, w=width)
        districts.append(block_polygon(district_id, block, spec))
        x0, x1, y0, y1 = block
        for row in range(y0, y1):
            for col in range(x0, x1):
                tiles.append(SyntheticTile(tile=TileId(x=spec.origin_x + col, y=spec.origin_y + row, z=spec.zoom),
                                           district_id=district_id, tile_class=int(classes[row, col]),
                                           value=float(values[row, col])))
    votes, binary_votes = annotate(tiles, spec, label_rng)
    rows = demographics(tiles, [district.district_id for district in districts], spec, demographic_rng)
    logging.info("Synthetic world: {} districts, {} tiles, {:.1%} uninhabited, {} labeled".format(
        len(districts), len(tiles), float(np.mean(classes == UNINHABITED)), len(votes)))
    return SynthWorld(spec=spec, seed=seed, field=values, classes=classes, districts=districts, tiles=tiles,
                      demographics=rows, votes=votes, binary_votes=binary_votes)


def tile_raster(world, tile):
    """ The raster of one SyntheticTile; each tile draws from its own seeded stream. """
    rng = np.random.default_rng([world.seed, tile.tile.x, tile.tile.y])
    return render_tile(tile.tile_class, tile.value, world.spec.tile_size, rng)


def truth_frame(world):
    return pd.DataFrame([(tile.district_id, tile.tile.z, tile.tile.x, tile.tile.y, CLASS_NAMES[tile.tile_class],
                          tile.value) for tile in world.tiles],
                        columns=['district_id', 'z', 'x', 'y', 'class', 'field'])


def write_world(world, paths, meta=None):
    """ Write the world to disk.

    :param SynthWorld world: The world.
    :param dict paths: Destinations keyed districts, images, labels, binary_labels, demographics and truth.
    :param dict meta: Metadata written to the CSV artifacts.
    """
    write_districts(paths['districts'], world.districts)
    for tile in world.tiles:
        write_tile_png(paths['images'], tile.district_id, tile.tile, tile_raster(world, tile))
    write_votes(paths['labels'], world.votes)
    write_votes(paths['binary_labels'], world.binary_votes)
    write_demographics(paths['demographics'], world.demographics, meta)
    write_csv(paths['truth'], truth_frame(world), meta)
    logging.info("Wrote synthetic world to {}".format(os.path.dirname(os.path.abspath(paths['districts']))))
