from .clm import ClmModel, clm_predict, generate_clm_dataset, train_clm
from .render import MarkerLayout, oracle_decode, render

__all__ = ["ClmModel", "MarkerLayout", "clm_predict", "generate_clm_dataset", "oracle_decode", "render",
           "train_clm"]
