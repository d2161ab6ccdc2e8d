"""Concept-based minimal debiasing of pretrained tabular classifiers."""
from .basemodel import LogisticModel, train_logreg
from .debias import CommodConfig, TrainedCommod, explain, train_advdebias_baseline, train_commod
from .metrics import FairnessReport, p_rule
from .synthetic import make_synthetic
from .tabular import Dataset, Schema, SplitSpec, load_csv, preprocess, split

__all__ = ["CommodConfig", "Dataset", "FairnessReport", "LogisticModel", "Schema", "SplitSpec",
           "TrainedCommod", "explain", "load_csv", "make_synthetic", "p_rule", "preprocess",
           "split", "train_advdebias_baseline", "train_commod", "train_logreg"]
