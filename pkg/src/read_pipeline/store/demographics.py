import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import pandas as pd

from read_pipeline.common.exceptions import DataError
from read_pipeline.common.utility import read_csv, write_csv


@dataclass(frozen=True)
class DemographicsRow:
    district_id: str
    variables: Dict[str, float] = field(default_factory=dict)


def load_demographics(path):
    """ Load a demographics table: `district_id` followed by one column per variable.

    :return: district id -> DemographicsRow, in file order.
    :rtype: dict
    """
    logging.info("Loading demographics from {}".format(path))
    frame, _ = read_csv(path)
    if 'district_id' not in frame.columns:
        raise DataError("Demographics table {} has no district_id column.".format(path))
    variables = [column for column in frame.columns if column != 'district_id']
    rows = {}
    for values in frame.to_dict('records'):
        district_id = str(values.pop('district_id'))
        if district_id in rows:
            raise DataError("Demographics table {} lists district {} twice.".format(path, district_id))
        rows[district_id] = DemographicsRow(district_id=district_id,
                                            variables={name: float(values[name]) for name in variables})
    return rows


def variable_names(rows):
    names = []
    for row in rows.values():
        for name in row.variables:
            if name not in names:
                names.append(name)
    return names


def write_demographics(path, rows, meta=None):
    """ Write DemographicsRows as `district_id,<variables...>`. """
    rows = list(rows)
    names = variable_names({row.district_id: row for row in rows})
    frame = pd.DataFrame([[row.district_id] + [row.variables.get(name, np.nan) for name in names] for row in rows],
                         columns=['district_id'] + names)
    write_csv(path, frame, meta)
