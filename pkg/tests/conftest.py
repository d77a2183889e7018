import numpy as np
import pytest

from read_pipeline.common.config import build_config
from read_pipeline.geo.polygon import DistrictPolygon
from read_pipeline.geo.tiles import grid_lat, grid_lon


def ring(points):
    """ A closed ring from an open list of (lon, lat) vertices. """
    points = [tuple(point) for point in points]
    return np.array(points + [points[0]], dtype=float)


def rectangle(west, south, east, north):
    return ring([(west, south), (east, south), (east, north), (west, north)])


def polygon(district_id, *rings):
    return DistrictPolygon(district_id=district_id, parts=(tuple(rings),))


def tile_block(district_id, x0, y0, x1, y1, z):
    """ Polygon on the edges of the tiles x0 <= x < x1, y0 <= y < y1. """
    return polygon(district_id, rectangle(grid_lon(x0, z), grid_lat(y1, z), grid_lon(x1, z), grid_lat(y0, z)))


def tile_space_polygon(district_id, vertices, z):
    """ Polygon from vertices given in fractional tile coordinates. """
    n = 1 << z
    points = []
    for fx, fy in vertices:
        lon = fx / n * 360.0 - 180.0
        lat = float(np.degrees(np.arctan(np.sinh(np.pi * (1.0 - 2.0 * fy / n)))))
        points.append((lon, lat))
    return polygon(district_id, ring(points))


def convex_hull(points):
    points = sorted(map(tuple, points))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in points:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(points):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def random_convex_vertices(rng, origin, span, count=8):
    """ Convex polygon vertices in fractional tile coordinates around an origin tile. """
    points = origin + rng.uniform(0.0, span, size=(count, 2))
    return convex_hull(points)


@pytest.fixture
def small_config(tmp_path):
    """ A configuration small enough for the whole pipeline to run in seconds. """
    data = tmp_path / 'data'
    return build_config({
        'paths': {
            'districts': str(data / 'districts.geojson'),
            'images': str(data / 'tiles'),
            'labels': str(data / 'labels.csv'),
            'binary_labels': str(data / 'labels_binary.csv'),
            'demographics': str(data / 'demographics.csv'),
            'workdir': str(tmp_path / 'work'),
        },
        'seed': 11,
        'extractor': {'batch_size': 16},
        'convnet': {'input_size': 8, 'channels': [4, 4], 'embedding_dim': 6},
        'mean_teacher': {'epochs': 3, 'rampup_epochs': 2, 'labeled_batch': 8, 'unlabeled_batch': 8,
                         'unlabeled_limit': 40},
        'pruning': {'epochs': 3, 'batch_size': 8},
        'pca': {'k': 'auto', 'k_max': 3},
        'regression': {'model': 'ridge', 'trials': 2, 'folds': 2, 'k_grid': [1, 2, 3],
                       'lambda_grid': [0.1, 1.0], 'gbt': {'trees': 10, 'depth_grid': [2]}},
        'synth': {'width': 12, 'height': 10, 'districts': 12, 'tile_size': 8, 'field_bumps': 3,
                  'field_scale': 3.0, 'labeled_tiles': 60},
        'logging': {'progress': False},
    })
