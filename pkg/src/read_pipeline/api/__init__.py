from read_pipeline.api.data import DataAPI
from read_pipeline.api.model import ModelAPI
from read_pipeline.api.pipeline import PipelineAPI
from read_pipeline.api.regression import RegressionAPI
from read_pipeline.api.representation import RepresentationAPI
