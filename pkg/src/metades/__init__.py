"""Dynamic ensemble selection driven by a meta-learned competence model."""

from .competence import MetaDataset, build_meta_dataset, extract_meta_features
from .data import Dataset, gen_banana, gen_lithuanian, load_csv, stratified_split
from .des import des_meta_classify, static_vote_classify
from .harness import ExperimentConfig, run_experiment
from .meta import MetaClassifier, MetaTrainConfig, train_meta
from .pool import LinearClassifier, PerceptronConfig, Pool, bagging_pool

__version__ = "0.1.0"
