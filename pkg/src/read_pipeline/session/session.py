from read_pipeline.client.extractor import ExtractorClientFactory
from read_pipeline.common.config import config_hash
from read_pipeline.session.workdir import WorkdirSession


class Session:
    def __init__(self, config):
        self.config = config
        self.config_hash = config_hash(config)
        self.workdir = WorkdirSession(config.paths.workdir, self.config_hash)
        self.client_factory = ExtractorClientFactory(session=self)

    @property
    def meta(self):
        """ Metadata stamped into every artifact written under this session. """
        return {'config_hash': self.config_hash}

    @property
    def model_workdir(self):
        """ Work directory holding the trained models: the reference one when transferring, otherwise our own. """
        reference = self.config.paths.reference_workdir
        if reference:
            return WorkdirSession(reference, self.config_hash)
        return self.workdir
