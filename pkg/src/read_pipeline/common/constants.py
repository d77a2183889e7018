MAX_LATITUDE = 85.0511287798
MAX_ZOOM = 18
DEFAULT_ZOOM = 15

URBAN, RURAL, UNINHABITED = 0, 1, 2
CLASS_NAMES = ('urban', 'rural', 'uninhabited')
PRUNER_CLASS_NAMES = ('uninhabited', 'inhabited')

EMBEDDING_MAGIC = b'READEMB1'
CHECKPOINT_MAGIC = b'READNET1'
PCA_VERSION = 1
REPRESENTATION_LAYOUT_VERSION = 1
REGRESSOR_VERSION = 1

STATISTIC_GROUPS = ('mu', 'sigma', 'n', 'rho')

WORKDIR_AREAS = ('tiles', 'embeddings', 'models', 'pca', 'repr', 'reports')

# artifact name -> (work directory area, file name, producing command)
ARTIFACTS = {
    'districts': ('tiles', 'districts.json', 'ingest'),
    'normalization': ('models', 'normalization.json', 'ingest'),
    'selection': ('tiles', 'selection.csv', 'select-tiles'),
    'extractor': ('models', 'extractor.readnet', 'train-extractor'),
    'pruner': ('models', 'pruner.readnet', 'train-pruner'),
    'embeddings': ('embeddings', 'embeddings.{extension}', 'embed'),
    'pruned': ('tiles', 'pruned.csv', 'prune'),
    'pca': ('pca', 'pca.csv', 'fit-pca'),
    'representations': ('repr', 'representations.csv', 'represent'),
    'regressor': ('models', 'regressor_{variable}.npz', 'train-regressor'),
}
