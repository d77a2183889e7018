import numpy as np
import pytest

from conftest import polygon, rectangle, ring
from read_pipeline.common.exceptions import InvalidPolygon
from read_pipeline.geo.polygon import DistrictPolygon, point_in_polygon, points_in_polygon
from read_pipeline.geo.tiles import GeoPoint


@pytest.fixture
def annulus():
    return polygon('annulus', rectangle(0.0, 0.0, 10.0, 10.0), rectangle(3.0, 3.0, 7.0, 7.0))


def winding_number(lon, lat, vertices):
    """ Independent winding-number test for a single closed ring. """
    winding = 0
    for (ax, ay), (bx, by) in zip(vertices[:-1], vertices[1:]):
        side = (bx - ax) * (lat - ay) - (lon - ax) * (by - ay)
        if ay <= lat < by and side > 0:
            winding += 1
        elif by <= lat < ay and side < 0:
            winding -= 1
    return winding != 0


def distance_to_ring(lon, lat, vertices):
    best = np.inf
    for a, b in zip(vertices[:-1], vertices[1:]):
        ab = b - a
        t = np.clip(np.dot([lon, lat] - a, ab) / np.dot(ab, ab), 0.0, 1.0)
        best = min(best, float(np.hypot(*([lon, lat] - (a + t * ab)))))
    return best


def star_ring(rng, count=12):
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, count))
    radii = rng.uniform(0.3, 1.0, count)
    return ring(np.column_stack([radii * np.cos(angles), radii * np.sin(angles)]))


def test_unit_square_center():
    assert point_in_polygon(GeoPoint(0.5, 0.5), polygon('square', rectangle(0.0, 0.0, 1.0, 1.0)))


def test_point_in_hole(annulus):
    assert not point_in_polygon(GeoPoint(5.0, 5.0), annulus)
    assert point_in_polygon(GeoPoint(1.0, 1.0), annulus)
    assert not point_in_polygon(GeoPoint(11.0, 5.0), annulus)


@pytest.mark.parametrize('point', [(0.0, 5.0), (10.0, 10.0), (5.0, 0.0), (3.0, 5.0), (7.0, 7.0)])
def test_edges_count_as_inside(annulus, point):
    assert point_in_polygon(GeoPoint(*point), annulus)


def test_multi_part_polygon():
    district = DistrictPolygon(district_id='islands', parts=((rectangle(0.0, 0.0, 1.0, 1.0),),
                                                             (rectangle(2.0, 0.0, 3.0, 1.0),)))
    verdicts = points_in_polygon(np.array([0.5, 1.5, 2.5]), np.array([0.5, 0.5, 0.5]), district)
    assert verdicts.tolist() == [True, False, True]


@pytest.mark.parametrize('seed', range(5))
def test_matches_winding_number_off_edge(seed):
    rng = np.random.default_rng(seed)
    shell = star_ring(rng)
    district = polygon('star', shell)
    lons, lats = rng.uniform(-1.1, 1.1, size=(2, 2000))
    verdicts = points_in_polygon(lons, lats, district)
    for lon, lat, verdict in zip(lons, lats, verdicts):
        if distance_to_ring(lon, lat, shell) < 1e-9:
            continue
        assert verdict == winding_number(lon, lat, shell)


def test_from_geojson_polygon():
    geometry = {'type': 'Polygon', 'coordinates': [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]]}
    district = DistrictPolygon.from_geojson('a', geometry)
    assert district.vertex_count == 5
    assert district.bounds == (0.0, 0.0, 1.0, 1.0)
    assert district.to_geojson()['type'] == 'Polygon'


@pytest.mark.parametrize('coordinates, reason', [
    ([[[0, 0], [1, 0], [1, 1], [0, 1]]], 'not closed'),
    ([[[0, 0], [1, 0], [0, 0]]], 'fewer than 4'),
    ([[[0, 0], [1, 1], [1, 0], [0, 1], [0, 0]]], 'self-intersects'),
])
def test_invalid_rings(coordinates, reason):
    with pytest.raises(InvalidPolygon, match=reason):
        DistrictPolygon.from_geojson('bad', {'type': 'Polygon', 'coordinates': coordinates})


def test_unsupported_geometry():
    with pytest.raises(InvalidPolygon):
        DistrictPolygon.from_geojson('point', {'type': 'Point', 'coordinates': [0, 0]})
