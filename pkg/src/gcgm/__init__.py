"""Self-supervised graph matching with contrastive pre-training over an adaptively sampled augmentation pool."""

from .augment import AugKind, AugmentedView, AugSpec, apply, self_ground_truth
from .evaluation import EvalReport, evaluate, f1_score, random_assignment, spectral_match
from .graph import (Graph, GraphPair, SyntheticConfig, delaunay_triangulate, gen_synthetic_pair,
                    generate_dataset, load_dataset, save_dataset)
from .losses import LossConfig, matching_loss, node_contrastive_loss
from .matcher import MatchResult, Model, ModelConfig, Setting, hungarian, init_model, predict, sinkhorn
from .pool import AugPairEntry, BiasConfig, Sampler, build_pool, end_batch_update, sample_pair
from .training import TrainConfig, TrainLog, train

__version__ = "0.1.0"
