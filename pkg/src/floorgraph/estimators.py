"""scikit-learn style wrappers around pre-training, adversarial training
and layout generation, plus input-validation helpers."""

import numpy as np
import torch
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .discriminator import CriticConfig
from .generator import GeneratorConfig, generate, masks_to_rects
from .graph import BubbleDiagram
from .metrics import compatibility
from .pretraining import PretrainConfig, export_encoder, node_branch_graph, pretrain_run
from .synth import LayoutSample
from .training import GANTrainer, TrainConfig


def check_diagrams(X):
    """List of :class:`BubbleDiagram` from diagrams or layout samples."""
    if isinstance(X, (BubbleDiagram, LayoutSample)):
        raise TypeError("expected a sequence of diagrams, got a single one")
    out = []
    for k, item in enumerate(X):
        if isinstance(item, LayoutSample):
            item = item.diagram
        if not isinstance(item, BubbleDiagram):
            raise TypeError(f"item {k} is {type(item).__name__}, not a BubbleDiagram")
        out.append(item)
    if not out:
        raise ValueError("need at least one diagram")
    return out


def check_samples(X):
    """List of :class:`LayoutSample`; training needs the real rectangles."""
    out = list(X)
    if not out:
        raise ValueError("need at least one layout sample")
    for k, item in enumerate(out):
        if not isinstance(item, LayoutSample):
            raise TypeError(f"item {k} is {type(item).__name__}, not a LayoutSample")
    return out


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(f"{type(estimator).__name__} is not fitted yet; call fit first")


class MaskedGraphPretraining(TransformerMixin, BaseEstimator):
    """Masked node/edge modeling on bubble diagrams.

    ``transform`` returns one row per diagram: the mean of its rooms'
    flattened encoder latents with nothing masked.
    """

    def __init__(self, encoder_blocks=8, decoder_blocks=2, mask_ratio=0.4, channels=16, volume_size=8,
                 branches=("node", "edge"), steps=3000, batch_size=32, lr=1e-3, seed=0):
        self.encoder_blocks = encoder_blocks
        self.decoder_blocks = decoder_blocks
        self.mask_ratio = mask_ratio
        self.channels = channels
        self.volume_size = volume_size
        self.branches = branches
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    def _config(self):
        return PretrainConfig(
            encoder_blocks=self.encoder_blocks, decoder_blocks=self.decoder_blocks, mask_ratio=self.mask_ratio,
            channels=self.channels, volume_size=self.volume_size, branches=tuple(self.branches),
            steps=self.steps, batch_size=self.batch_size, lr=self.lr, seed=self.seed,
        )

    def fit(self, X, y=None):
        self.model_, self.loss_curve_ = pretrain_run(check_diagrams(X), self._config())
        return self

    @torch.no_grad()
    def transform(self, X):
        check_is_fitted(self, "model_")
        branch = self.model_.node_branch
        if branch is None:
            raise ValueError("transform needs the node branch")
        rows = [branch.encode_visible([node_branch_graph(d)]).flatten(1).mean(0).numpy() for d in check_diagrams(X)]
        return np.stack(rows)

    def export_to(self, generator):
        check_is_fitted(self, "model_")
        return export_encoder(self.model_, generator)


class HouseLayoutGAN(BaseEstimator):
    """Graph-constrained layout generator trained adversarially.

    ``predict`` maps each diagram to one list of rectangles (``None`` for a
    room whose mask came out empty); ``score`` is minus the mean
    compatibility, so higher is better.
    """

    def __init__(self, channels=16, gte_blocks=8, attention_heads=1, update_variant="eq2", use_cna=True,
                 use_nna=True, use_gmb=True, head_channels=(256, 128), critic_channels=16, room_dim=128,
                 lr_g=1e-4, lr_d=1e-4, batch_size=32, lambda1=1.0, lambda2=0.1, lambda_gp=10.0,
                 max_steps=1000, seed=0, pretrained=None):
        self.channels = channels
        self.gte_blocks = gte_blocks
        self.attention_heads = attention_heads
        self.update_variant = update_variant
        self.use_cna = use_cna
        self.use_nna = use_nna
        self.use_gmb = use_gmb
        self.head_channels = head_channels
        self.critic_channels = critic_channels
        self.room_dim = room_dim
        self.lr_g = lr_g
        self.lr_d = lr_d
        self.batch_size = batch_size
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.lambda_gp = lambda_gp
        self.max_steps = max_steps
        self.seed = seed
        self.pretrained = pretrained

    def _trainer(self):
        gen = GeneratorConfig(
            channels=self.channels, gte_blocks=self.gte_blocks, attention_heads=self.attention_heads,
            update_variant=self.update_variant, use_cna=self.use_cna, use_nna=self.use_nna,
            use_gmb=self.use_gmb, head_channels=tuple(self.head_channels),
        )
        critic = CriticConfig(channels=self.critic_channels, room_dim=self.room_dim)
        train = TrainConfig(
            lr_g=self.lr_g, lr_d=self.lr_d, batch_size=self.batch_size, lambda1=self.lambda1,
            lambda2=self.lambda2, lambda_gp=self.lambda_gp, max_steps=self.max_steps, seed=self.seed,
        )
        return GANTrainer(gen, critic, train)

    def fit(self, X, y=None):
        samples = check_samples(X)
        trainer = self._trainer()
        if self.pretrained is not None:
            source = self.pretrained.model_ if isinstance(self.pretrained, MaskedGraphPretraining) else self.pretrained
            export_encoder(source, trainer.generator)
        self.history_ = [trainer.train_step(trainer.sample_batch(samples)) for _ in range(self.max_steps)]
        self.trainer_ = trainer
        return self

    @property
    def generator_(self):
        check_is_fitted(self, "trainer_")
        return self.trainer_.generator

    def predict(self, X, seed=None):
        gen = self.generator_
        gen.eval()
        base = self.seed if seed is None else seed
        return [masks_to_rects(generate(gen, d, base + k)) for k, d in enumerate(check_diagrams(X))]

    def score(self, X, y=None):
        diagrams = check_diagrams(X)
        return -float(np.mean([compatibility(d, r) for d, r in zip(diagrams, self.predict(diagrams))]))
