""" Work directory: the stage-by-stage artifact layout, its manifest and the command lock. """
import logging
import os
from contextlib import contextmanager

from read_pipeline.common.constants import ARTIFACTS, WORKDIR_AREAS
from read_pipeline.common.exceptions import LineageConflict, MissingPrerequisite, WorkdirLocked
from read_pipeline.common.utility import read_json, sha256_file, write_json

MANIFEST = 'manifest.json'
LOCK = '.lock'


class WorkdirSession:
    """ Artifacts of one pipeline run, tracked in `manifest.json`.

    Each manifest entry is keyed by the artifact's path relative to the work directory and records the producing
    command, the producing configuration's hash, the file's SHA-256 and the keys of the artifacts it was made from.
    """
    def __init__(self, root, config_hash):
        self.root = root
        self.config_hash = config_hash

    @property
    def manifest_path(self):
        return os.path.join(self.root, MANIFEST)

    @property
    def lock_path(self):
        return os.path.join(self.root, LOCK)

    def ensure_layout(self):
        for area in WORKDIR_AREAS:
            os.makedirs(os.path.join(self.root, area), exist_ok=True)

    def area(self, area):
        return os.path.join(self.root, area)

    def key(self, name, **fields):
        """ Manifest key (relative path) of a named artifact, e.g. key('regressor', variable='density'). """
        area, filename, _ = ARTIFACTS[name]
        return os.path.join(area, filename.format(**fields))

    def path(self, name, **fields):
        return os.path.join(self.root, self.key(name, **fields))

    def report_path(self, filename):
        return os.path.join(self.root, 'reports', filename)

    @property
    def manifest(self):
        if not os.path.isfile(self.manifest_path):
            return {}
        return read_json(self.manifest_path)

    def exists(self, name, **fields):
        return self.key(name, **fields) in self.manifest and os.path.isfile(self.path(name, **fields))

    def require(self, name, **fields):
        """ Path of an artifact that an earlier command must have produced.

        :raises MissingPrerequisite: naming the command to run.
        """
        if not self.exists(name, **fields):
            raise MissingPrerequisite(self.key(name, **fields), ARTIFACTS[name][2])
        return self.path(name, **fields)

    def record(self, name, inputs=(), **fields):
        """ Add (or replace) the manifest entry of an artifact that has just been written.

        :param str name: Artifact name.
        :param inputs: Manifest keys of the artifacts it was made from.
        """
        key = self.key(name, **fields)
        manifest = self.manifest
        manifest[key] = {
            'path': key,
            'command': ARTIFACTS[name][2],
            'config_hash': self.config_hash,
            'sha256': sha256_file(self.path(name, **fields)),
            'inputs': sorted(inputs),
        }
        write_json(self.manifest_path, manifest)
        logging.debug("Recorded {} in {}".format(key, self.manifest_path))
        return key

    def lineage(self, keys):
        """ Config hashes of the given artifacts and of everything they were made from. """
        manifest = self.manifest
        hashes = set()
        pending = list(keys)
        seen = set()
        while pending:
            key = pending.pop()
            if key in seen or key not in manifest:
                continue
            seen.add(key)
            hashes.add(manifest[key]['config_hash'])
            pending.extend(manifest[key]['inputs'])
        return hashes

    def check_lineage(self, keys):
        """ Refuse inputs produced under more than one configuration.

        :raises LineageConflict: when the input chains carry different config hashes.
        """
        hashes = self.lineage(keys)
        if len(hashes) > 1:
            raise LineageConflict(hashes)
        return hashes

    @contextmanager
    def lock(self):
        """ Hold `.lock` for the duration of a command. """
        os.makedirs(self.root, exist_ok=True)
        try:
            descriptor = os.open(self.lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkdirLocked(self.lock_path)
        try:
            os.write(descriptor, str(os.getpid()).encode('ascii'))
            os.close(descriptor)
            yield self
        finally:
            os.remove(self.lock_path)
