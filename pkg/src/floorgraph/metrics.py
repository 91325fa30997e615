"""Evaluation: compatibility (edge edit distance) and Frechet distance."""

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .exceptions import LengthMismatch, NonSymmetricCovariance
from .layout import PALETTE, extract_bubble_diagram, rasterize

__all__ = [
    "EvalReport",
    "RasterFeatureExtractor",
    "compatibility",
    "evaluate_suite",
    "extract_bubble_diagram",
    "frechet_distance",
    "gaussian_stats",
    "rasterize",
]


def compatibility(input_diagram, generated_rects):
    """Edit distance between the input diagram and the generated layout's
    diagram, with room i matched to room i: one unit per missing or extra edge.
    """
    if len(generated_rects) != input_diagram.num_rooms:
        raise LengthMismatch(f"{len(generated_rects)} rects for {input_diagram.num_rooms} rooms")
    extracted = extract_bubble_diagram(generated_rects, input_diagram.room_types)
    return len(input_diagram.edge_set ^ extracted.edge_set)


def _psd_sqrt(mat):
    w, v = np.linalg.eigh(mat)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def _check_symmetric(cov, name):
    cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
    if cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, rtol=1e-8, atol=1e-10):
        raise NonSymmetricCovariance(f"{name} is not a symmetric square matrix")
    return (cov + cov.T) / 2


def frechet_distance(mu1, cov1, mu2, cov2):
    """Frechet distance between two Gaussians.

    The trace of sqrt(cov1 cov2) is taken as the trace of
    sqrt(sqrt(cov1) cov2 sqrt(cov1)), which is symmetric PSD, so both square
    roots come from ``eigh`` with negative eigenvalues clipped to zero.
    """
    mu1, mu2 = np.atleast_1d(mu1).astype(np.float64), np.atleast_1d(mu2).astype(np.float64)
    cov1, cov2 = _check_symmetric(cov1, "cov1"), _check_symmetric(cov2, "cov2")
    root1 = _psd_sqrt(cov1)
    inner = root1 @ cov2 @ root1
    tr_sqrt = np.sqrt(np.clip(np.linalg.eigvalsh((inner + inner.T) / 2), 0, None)).sum()
    diff = mu1 - mu2
    return max(float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2 * tr_sqrt), 0.0)


def gaussian_stats(features):
    features = np.asarray(features, dtype=np.float64)
    return features.mean(axis=0), np.atleast_2d(np.cov(features, rowvar=False))


class RasterFeatureExtractor(nn.Module):
    """Fixed, randomly initialised CNN mapping palette rasters to vectors.

    Stands in for a pretrained image network: values are only comparable
    between runs that share the same persisted parameters.
    """

    def __init__(self, feature_dim=32, seed=0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(len(PALETTE), 16, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(16, 32, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(32, feature_dim, 3, stride=2, padding=1), nn.ReLU(),
            nn.AdaptiveAvgPool2d(2), nn.Flatten(), nn.Linear(4 * feature_dim, feature_dim),
        ).double()
        with torch.no_grad():
            for p in self.net.parameters():
                p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) / np.sqrt(max(p[0].numel(), 1)))
        self.requires_grad_(False)

    @torch.no_grad()
    def forward(self, rasters):
        idx = torch.as_tensor(np.asarray(rasters), dtype=torch.long)
        if idx.dim() == 2:
            idx = idx[None]
        x = nn.functional.one_hot(idx, len(PALETTE)).permute(0, 3, 1, 2).double()
        return self.net(x).numpy()

    def save(self, path):
        np.savez(path, **{k: v.numpy() for k, v in self.state_dict().items()})

    @classmethod
    def load(cls, path):
        with np.load(path) as data:
            state = {k: torch.from_numpy(data[k]) for k in data.files}
        feature_dim = state["net.4.weight"].shape[0]
        out = cls(feature_dim)
        out.load_state_dict(state)
        return out


@dataclass
class EvalReport:
    compatibility_mean: float
    fid: float
    sample_count: int
    bucket: str

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def layout_features(extractor, layouts):
    """``layouts``: iterable of ``(rects, types)``."""
    rasters = np.stack([rasterize(rects, types) for rects, types in layouts])
    return extractor(rasters)


def evaluate_suite(layout_fn, held_out, feature_extractor, n_samples, bucket="all"):
    """Generate ``n_samples`` layouts from held-out diagrams and score them.

    ``layout_fn(diagram, k)`` returns the k-th generated rect list (``None``
    entries for empty rooms). Diagrams are cycled when ``n_samples`` exceeds
    the held-out set.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples for a covariance")
    held_out = list(held_out)
    chosen = [held_out[k % len(held_out)] for k in range(n_samples)]
    generated = [layout_fn(s.diagram, k) for k, s in enumerate(chosen)]
    compat = [compatibility(s.diagram, rects) for s, rects in zip(chosen, generated)]
    fake = layout_features(feature_extractor, [(r, s.room_types) for s, r in zip(chosen, generated)])
    real = layout_features(feature_extractor, [(s.rects, s.room_types) for s in chosen])
    fid = frechet_distance(*gaussian_stats(fake), *gaussian_stats(real))
    return EvalReport(float(np.mean(compat)), fid, len(generated), bucket)
