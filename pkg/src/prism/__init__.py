"""Task-specific latent domain estimation for sensor windows.

The pipeline trains a single model on all data, checks whether the data
looks identically distributed (NID test), and if not estimates latent
domains by alternating k-means over embeddings with contrastive plus
per-domain classification training. At prediction time each sample is
routed to the head of its nearest domain centroid.
"""
from .dataset import Dataset, Sample, SplitSpec, SynthDomainSpec, generate_synthetic, load_jsonl, save_jsonl, split
from .errors import (CapacityError, CompatibilityError, EvaluationError, InputError, NumericError,
                     ParseError, PrismError, SchemaError, ShapeError)
from .experiments import four_domain_fixture, single_domain_fixture, two_domain_fixture
from .metrics import EvalReport
from .nid import NidReport, build_schedule, nid
from .oup import evaluate, load_pack, predict, save_pack
from .tde import ModelPack, TdeConfig, mine, train_initial

__version__ = "0.1.0"
