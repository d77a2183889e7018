import numpy as np
import pytest

from conftest import polygon, random_convex_vertices, ring, tile_block, tile_space_polygon
from read_pipeline.geo.polygon import DistrictPolygon, points_in_polygon
from read_pipeline.geo.selection import read_selections, select_tiles, write_selections
from read_pipeline.geo.tiles import TileId, tile_corners

Z = 15


def brute_force(district, z, x_range, y_range):
    selected = {}
    for x in x_range:
        for y in y_range:
            tile = TileId(x=x, y=y, z=z)
            corners = np.array(tile_corners(tile))
            hits = int(points_in_polygon(corners[:, 0], corners[:, 1], district).sum())
            if hits >= 3:
                selected[tile] = hits
    return selected


def shifted(vertices, dx=0.0, dy=0.0):
    return [(fx + dx, fy + dy) for fx, fy in vertices]


def test_whole_world_at_zoom_zero():
    nw, ne, se, sw = tile_corners(TileId(x=0, y=0, z=0))
    selection = select_tiles(polygon('world', ring([sw, se, ne, nw])), 0)
    assert selection.tiles == {TileId(x=0, y=0, z=0)}
    assert selection.vertex_hits[TileId(x=0, y=0, z=0)] == 4


def test_polygon_equal_to_one_tile():
    tile = TileId(x=27910, y=12710, z=Z)
    selection = select_tiles(tile_block('one', tile.x, tile.y, tile.x + 1, tile.y + 1, Z), Z)
    assert selection.tiles == {tile}
    assert selection.vertex_hits[tile] == 4


def test_tiny_polygon_is_flagged():
    selection = select_tiles(tile_space_polygon('tiny', [(27910.2, 12710.2), (27910.4, 12710.2),
                                                         (27910.4, 12710.4)], Z), Z)
    assert selection.flagged
    assert selection.n == 0


@pytest.mark.parametrize('seed', range(20))
def test_matches_brute_force_scan(seed):
    rng = np.random.default_rng(seed)
    vertices = random_convex_vertices(rng, np.array([27900.0, 12700.0]), 6.0)
    district = tile_space_polygon('convex', vertices, Z)
    selection = select_tiles(district, Z)
    expected = brute_force(district, Z, range(27897, 27910), range(12697, 12710))
    assert selection.tiles == set(expected)
    assert selection.vertex_hits == expected
    assert set(selection.vertex_hits.values()) <= {3, 4}


@pytest.mark.parametrize('seed', range(5))
def test_translation_by_one_tile(seed):
    rng = np.random.default_rng(100 + seed)
    vertices = random_convex_vertices(rng, np.array([27900.0, 12700.0]), 5.0)
    base = select_tiles(tile_space_polygon('a', vertices, Z), Z)
    moved = select_tiles(tile_space_polygon('a', shifted(vertices, dx=1.0), Z), Z)
    assert moved.tiles == {TileId(x=tile.x + 1, y=tile.y, z=Z) for tile in base.tiles}


@pytest.mark.parametrize('seed', range(5))
def test_independent_of_orientation_and_rotation(seed):
    rng = np.random.default_rng(200 + seed)
    vertices = random_convex_vertices(rng, np.array([27900.0, 12700.0]), 5.0)
    base = select_tiles(tile_space_polygon('a', vertices, Z), Z)
    reversed_ring = select_tiles(tile_space_polygon('a', vertices[::-1], Z), Z)
    rotated = select_tiles(tile_space_polygon('a', vertices[2:] + vertices[:2], Z), Z)
    assert base.tiles == reversed_ring.tiles == rotated.tiles


@pytest.mark.parametrize('seed', range(5))
def test_nested_polygons(seed):
    rng = np.random.default_rng(300 + seed)
    vertices = np.array(random_convex_vertices(rng, np.array([27902.0, 12702.0]), 4.0))
    inner = select_tiles(tile_space_polygon('inner', vertices.tolist(), Z), Z)
    x0, y0 = np.floor(vertices.min(axis=0)).astype(int) - 1
    x1, y1 = np.ceil(vertices.max(axis=0)).astype(int) + 1
    outer = select_tiles(tile_block('outer', x0, y0, x1, y1, Z), Z)
    assert inner.tiles <= outer.tiles


def test_polygon_with_hole_drops_inner_tiles():
    outer = tile_block('o', 27900, 12700, 27905, 12705, Z).parts[0][0]
    hole = tile_space_polygon('h', [(27901.5, 12701.5), (27903.5, 12701.5), (27903.5, 12703.5),
                                    (27901.5, 12703.5)], Z).parts[0][0]
    selection = select_tiles(DistrictPolygon(district_id='ring', parts=((outer, hole),)), Z)
    # the centre tile loses every corner, its four neighbours two each
    assert len(selection.tiles) == 20
    assert TileId(x=27902, y=12702, z=Z) not in selection.tiles
    assert selection.vertex_hits[TileId(x=27901, y=12701, z=Z)] == 3


def test_adjacent_blocks_partition_their_tiles():
    left = select_tiles(tile_block('l', 27900, 12700, 27903, 12702, Z), Z)
    right = select_tiles(tile_block('r', 27903, 12700, 27906, 12702, Z), Z)
    assert left.n == right.n == 6
    assert not left.tiles & right.tiles


def test_selection_csv_round_trip(tmp_path):
    selections = [select_tiles(tile_block('a', 27900, 12700, 27902, 12702, Z), Z),
                  select_tiles(tile_block('b', 27902, 12700, 27903, 12701, Z), Z)]
    path = str(tmp_path / 'selection.csv')
    write_selections(path, selections, meta={'config_hash': 'abc'})
    loaded, meta = read_selections(path, zoom=Z, district_ids=['a', 'b', 'empty'])
    assert meta == {'config_hash': 'abc'}
    assert loaded['a'] == selections[0]
    assert loaded['b'].vertex_hits == selections[1].vertex_hits
    assert loaded['empty'].flagged
