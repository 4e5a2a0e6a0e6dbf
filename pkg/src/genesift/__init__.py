"""Gene selection with firefly and elephant search, classified by a deep softmax network."""

from .data import Dataset, apply_mask, load_csv, minmax_normalize, stratified_split
from .fitness import Objective, cfs_merit, wrapper_accuracy
from .metaheuristics import ElephantParams, FireflyParams, SearchResult, run_search
from .neural import Network, NetworkConfig, build_network, evaluate, train
from .pipeline import EvalReport, PipelineConfig, bench, gen_synthetic, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "Dataset", "apply_mask", "load_csv", "minmax_normalize", "stratified_split",
    "Objective", "cfs_merit", "wrapper_accuracy",
    "ElephantParams", "FireflyParams", "SearchResult", "run_search",
    "Network", "NetworkConfig", "build_network", "evaluate", "train",
    "EvalReport", "PipelineConfig", "bench", "gen_synthetic", "run_pipeline",
]
