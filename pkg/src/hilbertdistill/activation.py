"""Gradient-weighted activation mappings over feature maps.

The per-channel weight is the mean of the channel's class-score gradients
over all spatial positions and all classes; the activation mapping is the
weighted sum of the channels.  Cells whose sigmoid-squashed mapping value
exceeds a threshold count as activated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .curve import Region
from .vh import ActivationMask


@dataclass(frozen=True)
class FeatureStack:
    """Channel-indexed spatial feature maps, shape (channels, *extents)."""

    maps: np.ndarray

    def __post_init__(self):
        if self.maps.ndim not in (3, 4):
            raise ValueError("feature stack must be (channels, *spatial) with 2 or 3 spatial axes")
        if not np.all(np.isfinite(self.maps)):
            raise ValueError("feature maps must be finite")

    @property
    def channels(self) -> int:
        return self.maps.shape[0]

    @property
    def extents(self) -> tuple[int, ...]:
        return tuple(self.maps.shape[1:])


@dataclass(frozen=True)
class GradientStack:
    """Class-score gradients w.r.t. features, shape (classes, channels, *extents)."""

    grads: np.ndarray

    def __post_init__(self):
        if self.grads.ndim not in (4, 5):
            raise ValueError(
                "gradient stack must be (classes, channels, *spatial) with 2 or 3 spatial axes"
            )
        if self.grads.size == 0:
            raise ValueError("gradient stack is empty")
        if not np.all(np.isfinite(self.grads)):
            raise ValueError("gradients must be finite")

    @property
    def classes(self) -> int:
        return self.grads.shape[0]

    @property
    def positions(self) -> int:
        return int(np.prod(self.grads.shape[2:]))


def channel_weights(grads: GradientStack) -> np.ndarray:
    """Per-channel weights: 1/(z*c) double sum of the gradients."""
    g = grads.grads
    return g.sum(axis=(0,) + tuple(range(2, g.ndim))) / (grads.positions * grads.classes)


def activation_map(features: FeatureStack, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of the feature channels; same extents as one channel."""
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (features.channels,):
        raise ValueError(
            f"got {weights.shape[0] if weights.ndim else 0} weights for "
            f"{features.channels} channels"
        )
    return np.tensordot(weights, features.maps, axes=(0, 0))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def activation_mask(am: np.ndarray, theta: float = 0.5) -> ActivationMask:
    """Cells whose sigmoid(AM) strictly exceeds theta are active."""
    if not 0.0 < theta < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {theta}")
    am = np.asarray(am, dtype=float)
    return ActivationMask(Region(tuple(am.shape)), sigmoid(am) > theta)
