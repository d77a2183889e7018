""" Persistence of per-tile embedding vectors.

Two formats share one record type. The CSV format has the header `z,x,y,district_id,e0..e{E-1}`. The packed
format starts with the magic bytes `READEMB1` followed by a little-endian header

    uint32 E | uint32 record count | uint32 metadata length | metadata (utf-8)

and then, per record, `int32 z, x, y | uint16 district id length | district id (utf-8) | E float32`.
"""
import logging
import os
import struct
from dataclasses import dataclass

import numpy as np
import pandas as pd

from read_pipeline.common.constants import EMBEDDING_MAGIC
from read_pipeline.common.exceptions import DanglingDistrictReference, EmbeddingFormatError, NonFiniteInput
from read_pipeline.common.utility import format_metadata, parse_metadata, read_csv, write_csv
from read_pipeline.geo.tiles import TileId

HEADER = struct.Struct('<III')
RECORD_PREFIX = struct.Struct('<iiiH')


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    tile: TileId
    district_id: str
    vector: np.ndarray


def is_binary_store(path):
    return os.path.splitext(path)[1] == '.bin'


def _check_dimensions(records):
    dims = {record.vector.shape for record in records}
    if len(dims) > 1:
        raise EmbeddingFormatError('-', '-', "records have mixed dimensions {}".format(sorted(dims)))
    for record in records:
        if not np.all(np.isfinite(record.vector)):
            raise NonFiniteInput("Embedding of tile {}".format(record.tile))


def save_embeddings(path, records, meta=None):
    """ Write embedding records; the format follows the file extension (`.bin` packed, otherwise CSV).

    :param str path: Destination path.
    :param list records: EmbeddingRecord list.
    :param dict meta: Metadata stored with the records.
    """
    records = list(records)
    _check_dimensions(records)
    if is_binary_store(path):
        _save_binary(path, records, meta or {})
    else:
        _save_csv(path, records, meta)
    logging.info("Saved {} embeddings to {}".format(len(records), path))


def _save_csv(path, records, meta):
    dim = records[0].vector.shape[0] if records else 0
    columns = ['z', 'x', 'y', 'district_id'] + ['e{}'.format(i) for i in range(dim)]
    frame = pd.DataFrame([[r.tile.z, r.tile.x, r.tile.y, r.district_id] + r.vector.tolist() for r in records],
                         columns=columns)
    write_csv(path, frame, meta)


def _save_binary(path, records, meta):
    dim = records[0].vector.shape[0] if records else 0
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    meta_bytes = format_metadata(meta).encode('utf-8') if meta else b''
    with open(path, 'wb') as f:
        f.write(EMBEDDING_MAGIC)
        f.write(HEADER.pack(dim, len(records), len(meta_bytes)))
        f.write(meta_bytes)
        for record in records:
            name = record.district_id.encode('utf-8')
            f.write(RECORD_PREFIX.pack(record.tile.z, record.tile.x, record.tile.y, len(name)))
            f.write(name)
            f.write(np.asarray(record.vector, dtype='<f4').tobytes())


def read_embeddings(path):
    """ Read every record of an embedding store.

    :return: (records, metadata)
    :rtype: tuple
    """
    if is_binary_store(path):
        return _read_binary(path)
    return _read_csv(path)


def _read_csv(path):
    if os.path.getsize(path) == 0:
        return [], {}
    try:
        frame, meta = read_csv(path)
    except pd.errors.EmptyDataError:
        return [], {}
    except pd.errors.ParserError as e:
        raise EmbeddingFormatError(path, '-', str(e))
    fixed = ['z', 'x', 'y', 'district_id']
    if list(frame.columns[:4]) != fixed:
        raise EmbeddingFormatError(path, 0, "header must start with z,x,y,district_id")
    value_columns = list(frame.columns[4:])
    if value_columns != ['e{}'.format(i) for i in range(len(value_columns))]:
        raise EmbeddingFormatError(path, 0, "value columns must be e0..e{}".format(len(value_columns) - 1))
    values = frame[value_columns].to_numpy(dtype=float)
    short = np.nonzero(np.isnan(values).any(axis=1))[0] if len(value_columns) else []
    if len(short):
        row = int(short[0])
        raise EmbeddingFormatError(path, row + 1, "expected {} values, found {}".format(
            len(value_columns), int((~np.isnan(values[row])).sum())))
    records = []
    for index, (z, x, y, district_id) in enumerate(frame[fixed].itertuples(index=False)):
        records.append(EmbeddingRecord(tile=TileId(x=int(x), y=int(y), z=int(z)), district_id=str(district_id),
                                       vector=values[index]))
    return records, meta


def _read_binary(path):
    with open(path, 'rb') as f:
        payload = f.read()
    if payload[:len(EMBEDDING_MAGIC)] != EMBEDDING_MAGIC:
        raise EmbeddingFormatError(path, 0, "bad magic bytes")
    offset = len(EMBEDDING_MAGIC)
    try:
        dim, count, meta_length = HEADER.unpack_from(payload, offset)
        offset += HEADER.size
        meta = parse_metadata(payload[offset:offset + meta_length].decode('utf-8')) if meta_length else {}
        offset += meta_length
        records = []
        for row in range(1, count + 1):
            z, x, y, name_length = RECORD_PREFIX.unpack_from(payload, offset)
            offset += RECORD_PREFIX.size
            district_id = payload[offset:offset + name_length].decode('utf-8')
            offset += name_length
            if offset + 4 * dim > len(payload):
                raise EmbeddingFormatError(path, row, "truncated vector")
            vector = np.frombuffer(payload, dtype='<f4', count=dim, offset=offset).astype(np.float32)
            offset += 4 * dim
            records.append(EmbeddingRecord(tile=TileId(x=x, y=y, z=z), district_id=district_id, vector=vector))
    except struct.error as e:
        raise EmbeddingFormatError(path, '-', "truncated store ({})".format(e))
    if offset != len(payload):
        raise EmbeddingFormatError(path, count, "trailing bytes after the last record")
    return records, meta


def load_embeddings(path, district_ids=None):
    """ Load an embedding store, rejecting records that reference unknown districts.

    :param str path: The store path.
    :param district_ids: Known district identifiers (no check when None).
    :rtype: list
    """
    records, _ = read_embeddings(path)
    if district_ids is not None:
        known = set(district_ids)
        for row, record in enumerate(records, start=1):
            if record.district_id not in known:
                raise DanglingDistrictReference(record.district_id, row)
    logging.debug("Loaded {} embeddings from {}".format(len(records), path))
    return records


def group_by_district(records):
    """ Stack records per district.

    :return: district id -> (tiles, matrix of vectors), in first-seen order.
    :rtype: dict
    """
    grouped = {}
    for record in records:
        tiles, vectors = grouped.setdefault(record.district_id, ([], []))
        tiles.append(record.tile)
        vectors.append(np.asarray(record.vector, dtype=float))
    return {district_id: (tiles, np.vstack(vectors)) for district_id, (tiles, vectors) in grouped.items()}
