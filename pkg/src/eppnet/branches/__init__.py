from .cnn import CnnConfig, CnnModel, images_to_input
from .gcn import AdjacencySpec, GcnConfig, GcnModel, build_adjacency
from .scores import ScoreMatrix, from_csv, read_scores, to_csv, write_scores
from .training import ArrayDataset, FeatureMapDataset, accuracy, evaluate_branch, train_branch

__all__ = [
    "AdjacencySpec", "ArrayDataset", "CnnConfig", "CnnModel", "FeatureMapDataset",
    "GcnConfig", "GcnModel", "ScoreMatrix", "accuracy", "build_adjacency",
    "evaluate_branch", "from_csv", "images_to_input", "read_scores", "to_csv",
    "train_branch", "write_scores",
]
