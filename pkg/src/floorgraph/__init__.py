"""Graph-constrained house layout generation."""

from .config import RunConfig
from .discriminator import CriticConfig, LayoutCritic
from .estimators import HouseLayoutGAN, MaskedGraphPretraining, check_diagrams, check_samples
from .generator import GeneratorConfig, LayoutGenerator, fit_rectangle, generate
from .graph import BubbleDiagram, RoomType, shortest_path_matrix, validate
from .layout import Rect, extract_bubble_diagram, rasterize
from .metrics import EvalReport, RasterFeatureExtractor, compatibility, evaluate_suite, frechet_distance
from .pretraining import MaskedGraphPretrainer, PretrainConfig, export_encoder, pretrain_run
from .synth import LayoutSample, generate_corpus, read_dataset, write_dataset
from .training import GANTrainer, TrainConfig, run_training, train_step

__version__ = "0.1.0"
