"""Base machines: a uniform train/predict interface over native regressors."""

from .exceptions import ConvergenceError, MachineError, SingularDesignError
from .external import ExternalPredictions, read_external_csv
from .knn import KNNRegressor
from .linear import LassoRegressor, RidgeRegressor, lasso_lambda_max
from .pool import (
    KINDS,
    MachinePool,
    MachineSpec,
    TrainedMachine,
    default_specs,
    fit_machine,
    predict_machine,
    predict_pool,
    train_pool,
)
from .tree import ForestRegressor, TreeRegressor

__all__ = [
    "ConvergenceError", "MachineError", "SingularDesignError",
    "ExternalPredictions", "read_external_csv", "KNNRegressor",
    "LassoRegressor", "RidgeRegressor", "lasso_lambda_max",
    "KINDS", "MachinePool", "MachineSpec", "TrainedMachine", "default_specs",
    "fit_machine", "predict_machine", "predict_pool", "train_pool",
    "ForestRegressor", "TreeRegressor",
]
