"""Adversarial training: critic step, estimator step, generator step."""

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .discriminator import CriticConfig, LayoutCritic, gradient_penalty
from .exceptions import NonFiniteLoss
from .generator import GeneratorConfig, LayoutGenerator, rects_to_masks, sample_node_inputs
from .graph import shortest_path_matrix
from .layers import GraphBatch
from .losses import LayoutToGraph, adversarial_losses, classification_loss, gcyc_loss
from .synth import exclude

LOG_KEYS = ("step", "l_gan_d", "l_gan_g", "l_gp", "l_class", "l_gcyc", "total")


@dataclass
class TrainConfig:
    lr_g: float = 1e-4
    lr_d: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 32
    lambda1: float = 1.0
    lambda2: float = 0.1
    lambda_gp: float = 10.0
    critic_steps_per_gen: int = 1
    max_steps: int = 1000
    seed: int = 0
    checkpoint_every: int = 0
    estimator_dim: int = 64

    def __post_init__(self):
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if min(self.lambda1, self.lambda2, self.lambda_gp) < 0:
            raise ValueError("loss weights must be nonnegative")

    def to_dict(self):
        return asdict(self)


@dataclass
class LossBreakdown:
    """Per-term values of one step; ``total`` is the generator objective.

    ``critic_total`` is the critic objective (Wasserstein estimate + penalty +
    weighted real-sample classification); ``l_class_real`` and ``l_estimator``
    are reported for diagnostics only.
    """

    l_gan_d: float
    l_gan_g: float
    l_gp: float
    l_class: float
    l_gcyc: float
    total: float
    critic_total: float = 0.0
    l_class_real: float = 0.0
    l_estimator: float = 0.0

    def record(self, step):
        values = asdict(self)
        return {"step": int(step), **{k: values[k] for k in LOG_KEYS[1:]}}

    def is_finite(self):
        return all(math.isfinite(getattr(self, f.name)) for f in fields(self))


def _adam(params, lr, cfg):
    return torch.optim.Adam(params, lr=lr, betas=(cfg.beta1, cfg.beta2))


class GANTrainer:
    """Owns the three networks, their optimisers and all random state."""

    def __init__(self, gen_cfg=None, critic_cfg=None, train_cfg=None, dtype=torch.float32):
        self.gen_cfg = gen_cfg or GeneratorConfig()
        self.critic_cfg = critic_cfg or CriticConfig()
        self.cfg = train_cfg or TrainConfig()
        self.dtype = dtype
        torch.manual_seed(self.cfg.seed)
        self.generator = LayoutGenerator(self.gen_cfg).to(dtype)
        self.critic = LayoutCritic(self.critic_cfg).to(dtype)
        self.estimator = LayoutToGraph(self.cfg.estimator_dim).to(dtype)
        self.opt_g = _adam(self.generator.parameters(), self.cfg.lr_g, self.cfg)
        self.opt_d = _adam(self.critic.parameters(), self.cfg.lr_d, self.cfg)
        self.opt_e = _adam(self.estimator.parameters(), self.cfg.lr_d, self.cfg)
        self.rng = np.random.default_rng(self.cfg.seed)
        self.torch_gen = torch.Generator().manual_seed(self.cfg.seed)
        self.step_count = 0

    def models(self):
        return {"generator": self.generator, "critic": self.critic, "estimator": self.estimator}

    def _gcyc(self, masks, batch, estimator):
        losses = [
            gcyc_loss(torch.tensor(shortest_path_matrix(d), dtype=masks.dtype), g)
            for d, g in zip(batch.diagrams, estimator.per_graph(masks, batch))
        ]
        return torch.stack(losses).mean()

    def _check(self, **terms):
        values = {k: v.item() for k, v in terms.items()}
        if not all(math.isfinite(v) for v in values.values()):
            raise NonFiniteLoss(self.step_count, values)

    def critic_update(self, diagrams, batch, real):
        cfg = self.cfg
        z = sample_node_inputs(diagrams, self.rng, self.gen_cfg.noise_dim, self.dtype)
        with torch.no_grad():
            fake = self.generator(z, batch)
        real_score, real_logits = self.critic(real, batch)
        fake_score, _ = self.critic(fake, batch)
        l_gan_d, _ = adversarial_losses(real_score, fake_score)
        l_gp = gradient_penalty(self.critic, real, fake, batch, self.torch_gen, cfg.lambda_gp)
        l_class_real = real_score.new_zeros(())
        if cfg.lambda1 > 0:
            l_class_real = classification_loss(real_logits, diagrams, self.critic_cfg.per_room_classification)
        loss = l_gan_d + l_gp + cfg.lambda1 * l_class_real
        self._check(l_gan_d=l_gan_d, l_gp=l_gp, l_class_real=l_class_real)
        self.opt_d.zero_grad(set_to_none=True)
        loss.backward()
        self.opt_d.step()
        return l_gan_d, l_gp, l_class_real, loss

    def estimator_update(self, batch, real):
        loss = self._gcyc(real, batch, self.estimator)
        self._check(l_estimator=loss)
        self.opt_e.zero_grad(set_to_none=True)
        loss.backward()
        self.opt_e.step()
        return loss

    def generator_update(self, diagrams, batch):
        cfg = self.cfg
        z = sample_node_inputs(diagrams, self.rng, self.gen_cfg.noise_dim, self.dtype)
        fake = self.generator(z, batch)
        fake_score, fake_logits = self.critic(fake, batch)
        l_gan_g = -fake_score.mean()
        l_class = fake_score.new_zeros(())
        l_gcyc = fake_score.new_zeros(())
        if cfg.lambda1 > 0:
            l_class = classification_loss(fake_logits, diagrams, self.critic_cfg.per_room_classification)
        if cfg.lambda2 > 0:
            l_gcyc = self._gcyc(fake, batch, self.estimator)
        total = l_gan_g + cfg.lambda1 * l_class + cfg.lambda2 * l_gcyc
        self._check(l_gan_g=l_gan_g, l_class=l_class, l_gcyc=l_gcyc)
        self.opt_g.zero_grad(set_to_none=True)
        total.backward()
        self.opt_g.step()
        # critic/estimator grads from this pass are discarded
        self.critic.zero_grad(set_to_none=True)
        self.estimator.zero_grad(set_to_none=True)
        return l_gan_g, l_class, l_gcyc, total

    def train_step(self, samples):
        if not samples:
            raise ValueError("empty batch")
        diagrams = [s.diagram for s in samples]
        batch = GraphBatch(diagrams, dtype=self.dtype)
        real = rects_to_masks([r for s in samples for r in s.rects], self.dtype)
        for _ in range(self.cfg.critic_steps_per_gen):
            l_gan_d, l_gp, l_class_real, critic_total = self.critic_update(diagrams, batch, real)
        l_est = self.estimator_update(batch, real) if self.cfg.lambda2 > 0 else real.new_zeros(())
        l_gan_g, l_class, l_gcyc, total = self.generator_update(diagrams, batch)
        self.step_count += 1
        values = dict(
            l_gan_d=l_gan_d, l_gan_g=l_gan_g, l_gp=l_gp, l_class=l_class, l_gcyc=l_gcyc, total=total,
            critic_total=critic_total, l_class_real=l_class_real, l_estimator=l_est,
        )
        return LossBreakdown(**{k: v.item() for k, v in values.items()})

    def sample_batch(self, samples):
        k = min(self.cfg.batch_size, len(samples))
        idx = self.rng.choice(len(samples), size=k, replace=False)
        return [samples[i] for i in sorted(idx)]

    def config_dict(self):
        return {"generator": self.gen_cfg.to_dict(), "critic": self.critic_cfg.to_dict(), "train": self.cfg.to_dict()}

    def save(self, path):
        states = {name: m.state_dict() for name, m in self.models().items()}
        return save_checkpoint(path, states, "gan", self.step_count, self.config_dict())

    @classmethod
    def load(cls, path, dtype=torch.float32):
        manifest, states = load_checkpoint(path)
        cfg = manifest["config"]
        trainer = cls(GeneratorConfig(**cfg["generator"]), CriticConfig(**cfg["critic"]), TrainConfig(**cfg["train"]), dtype)
        for name, model in trainer.models().items():
            model.load_state_dict(states[name])
        trainer.step_count = manifest["step"]
        return trainer


def train_step(samples, trainer):
    return trainer.train_step(samples)


def run_training(samples, bucket, trainer, out_dir, callback=None):
    """Train on every sample outside ``bucket`` (``None`` keeps them all).

    Writes ``metrics.jsonl`` (one record per step) and checkpoints under
    ``out_dir``; returns the list of :class:`LossBreakdown`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pool = list(samples) if bucket is None else exclude(samples, bucket)
    if not pool:
        raise ValueError(f"no training samples outside bucket {bucket!r}")
    history = []
    every = trainer.cfg.checkpoint_every
    with open(out_dir / "metrics.jsonl", "w", encoding="utf-8") as log:
        for _ in range(trainer.cfg.max_steps):
            losses = trainer.train_step(trainer.sample_batch(pool))
            history.append(losses)
            log.write(json.dumps(losses.record(trainer.step_count)) + "\n")
            if every and trainer.step_count % every == 0:
                trainer.save(out_dir / f"checkpoint-{trainer.step_count:06d}")
            if callback is not None:
                callback(trainer, losses)
    trainer.save(out_dir / "checkpoint")
    return history
