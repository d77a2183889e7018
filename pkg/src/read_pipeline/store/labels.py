""" Annotator votes turned into soft labels.

Label files are CSV with columns `z,x,y,votes`, votes separated by `;`. The three-class file uses the tokens
urban / rural / uninhabited; the binary file uses inhabited / uninhabited.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from read_pipeline.common.constants import CLASS_NAMES, UNINHABITED
from read_pipeline.common.exceptions import LabelParseError
from read_pipeline.common.utility import read_csv, write_csv
from read_pipeline.geo.tiles import TileId

BINARY_TOKENS = ('uninhabited', 'inhabited')
VOTE_SEPARATOR = ';'


@dataclass(frozen=True)
class SoftLabel:
    tile: TileId
    probs: tuple
    inhabited_majority: bool

    @property
    def majority_class(self):
        """ Majority-voted class index (first class wins a tie). """
        return int(np.argmax(self.probs))


def _parse_votes(path, row, cell, tokens):
    if not isinstance(cell, str) or not cell.strip():
        raise LabelParseError(path, row, "no votes")
    votes = [token.strip() for token in cell.split(VOTE_SEPARATOR) if token.strip()]
    for token in votes:
        if token not in tokens:
            raise LabelParseError(path, row, "unknown class token {}".format(token))
    return votes


def _read_votes(path, tokens):
    frame, _ = read_csv(path, dtype={'votes': str})
    missing = {'z', 'x', 'y', 'votes'} - set(frame.columns)
    if missing:
        raise LabelParseError(path, 0, "missing columns {}".format(sorted(missing)))
    for row, (z, x, y, cell) in enumerate(frame[['z', 'x', 'y', 'votes']].itertuples(index=False), start=1):
        yield TileId(x=int(x), y=int(y), z=int(z)), _parse_votes(path, row, cell, tokens)


def inhabited_majority(inhabited_votes, total_votes):
    """ Majority over binary votes; a tie counts as inhabited. """
    return 2 * inhabited_votes >= total_votes


def soft_label(tile, votes):
    """ Average one-hot votes into a probability vector. """
    counts = np.array([votes.count(name) for name in CLASS_NAMES], dtype=float)
    probs = counts / counts.sum()
    inhabited = len(votes) - votes.count(CLASS_NAMES[UNINHABITED])
    return SoftLabel(tile=tile, probs=tuple(float(p) for p in probs),
                     inhabited_majority=inhabited_majority(inhabited, len(votes)))


def load_binary_labels(path):
    """ Load inhabited/uninhabited votes.

    :return: Majority verdict per tile.
    :rtype: dict
    """
    logging.info("Loading binary labels from {}".format(path))
    verdicts = {}
    for tile, votes in _read_votes(path, BINARY_TOKENS):
        verdicts[tile] = inhabited_majority(votes.count('inhabited'), len(votes))
    return verdicts


def load_labels(path, binary_path=None):
    """ Load three-class votes as soft labels.

    When a binary label file is given its majority verdict replaces the one derived from the three-class votes.

    :param str path: Three-class label file.
    :param str binary_path: Optional binary label file over the same image list.
    :rtype: list
    """
    logging.info("Loading labels from {}".format(path))
    labels = [soft_label(tile, votes) for tile, votes in _read_votes(path, CLASS_NAMES)]
    if binary_path:
        verdicts = load_binary_labels(binary_path)
        labels = [SoftLabel(tile=label.tile, probs=label.probs,
                            inhabited_majority=verdicts.get(label.tile, label.inhabited_majority))
                  for label in labels]
    return labels


def write_votes(path, votes_by_tile):
    """ Write votes as `z,x,y,votes`.

    :param dict votes_by_tile: TileId -> list of tokens.
    """
    rows = [(tile.z, tile.x, tile.y, VOTE_SEPARATOR.join(votes)) for tile, votes in sorted(votes_by_tile.items())]
    write_csv(path, pd.DataFrame(rows, columns=['z', 'x', 'y', 'votes']))
