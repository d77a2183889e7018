import json
import logging
import os

from read_pipeline.common.exceptions import DistrictParseError, InvalidPolygon
from read_pipeline.geo.polygon import DistrictPolygon


def load_districts(path):
    """ Load district polygons from a GeoJSON FeatureCollection.

    :param str path: The GeoJSON path.
    :return: One validated polygon per feature, in file order.
    :rtype: list
    """
    logging.info("Loading districts from {}".format(path))
    with open(path, 'r') as f:
        try:
            collection = json.load(f)
        except json.decoder.JSONDecodeError as e:
            raise DistrictParseError('-', "not valid JSON ({})".format(e))
    if collection.get('type') != 'FeatureCollection':
        raise DistrictParseError('-', "top level is not a FeatureCollection")

    districts = []
    seen = set()
    for index, feature in enumerate(collection.get('features', [])):
        district_id = (feature.get('properties') or {}).get('district_id')
        if district_id is None or str(district_id) == '':
            raise DistrictParseError(index, "missing district_id property")
        district_id = str(district_id)
        if district_id in seen:
            raise DistrictParseError(index, "duplicate district_id {}".format(district_id))
        geometry = feature.get('geometry')
        if not geometry:
            raise DistrictParseError(index, "missing geometry")
        try:
            districts.append(DistrictPolygon.from_geojson(district_id, geometry))
        except InvalidPolygon as e:
            raise DistrictParseError(index, e.message)
        seen.add(district_id)
    logging.info("Loaded {} districts".format(len(districts)))
    return districts


def write_districts(path, districts):
    """ Write district polygons as a GeoJSON FeatureCollection. """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    collection = {
        'type': 'FeatureCollection',
        'features': [{
            'type': 'Feature',
            'properties': {'district_id': district.district_id},
            'geometry': district.to_geojson()
        } for district in districts]
    }
    with open(path, 'w') as f:
        json.dump(collection, f)
        f.write('\n')
