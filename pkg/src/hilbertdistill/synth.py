"""Synthetic volumetric classification task for the desk-scale experiments.

Each sample is a noisy 16x16x16 volume containing one bright bar; the class
encodes the bar's orientation and position (horizontal top / horizontal
bottom / vertical left / vertical right).  The bar always spans the middle
depth slices, so the 2D student input (a slice of the volume) sees the same
structure the 3D teacher does.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_CLASSES = 4
SIDE = 16
_BAR_THICKNESS = 3
_BAR_LO, _BAR_HI = 2, 14  # long-axis span
_DEPTH_LO, _DEPTH_HI = 5, 11  # always covers the middle slice


@dataclass
class SynthDataset:
    volumes: np.ndarray  # (N, SIDE, SIDE, SIDE) float
    labels: np.ndarray  # (N,) int
    slices: np.ndarray  # (N, SIDE, SIDE) float, per-volume 2D student input
    train_idx: np.ndarray
    test_idx: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.volumes.shape[0]


def _bar_offsets(rng, cls):
    # classes 0/1: horizontal bar (band of rows i); 2/3: vertical (band of cols j)
    if cls in (0, 2):
        lo = rng.integers(SIDE // 2 + 1, SIDE - _BAR_THICKNESS - 1)
    else:
        lo = rng.integers(1, SIDE // 2 - _BAR_THICKNESS)
    return int(lo)


def recover_label(volume: np.ndarray) -> int:
    """Re-derive the class from the generative rule (band-energy argmax)."""
    proj = volume[_DEPTH_LO:_DEPTH_HI].mean(axis=0)
    row_band = np.array(
        [proj[i : i + _BAR_THICKNESS, :].sum() for i in range(SIDE - _BAR_THICKNESS)]
    )
    col_band = np.array(
        [proj[:, j : j + _BAR_THICKNESS].sum() for j in range(SIDE - _BAR_THICKNESS)]
    )
    if row_band.max() >= col_band.max():
        center = row_band.argmax() + _BAR_THICKNESS / 2
        return 0 if center >= SIDE / 2 else 1
    center = col_band.argmax() + _BAR_THICKNESS / 2
    return 2 if center >= SIDE / 2 else 3


def make_synthetic(
    n_samples: int = 240,
    seed: int = 0,
    noise: float = 0.3,
    train_fraction: float = 0.75,
) -> SynthDataset:
    """Deterministic, class-balanced dataset for a given seed."""
    rng = np.random.default_rng([int(seed), 9151])
    labels = np.arange(n_samples) % N_CLASSES  # balanced to within one sample
    volumes = rng.normal(0.0, noise, size=(n_samples, SIDE, SIDE, SIDE))
    for t in range(n_samples):
        cls = int(labels[t])
        lo = _bar_offsets(rng, cls)
        amp = 1.0 + 0.5 * rng.random()
        d = slice(_DEPTH_LO, _DEPTH_HI)
        span = slice(_BAR_LO, _BAR_HI)
        band = slice(lo, lo + _BAR_THICKNESS)
        if cls in (0, 1):
            volumes[t, d, band, span] += amp
        else:
            volumes[t, d, span, band] += amp
    order = rng.permutation(n_samples)
    train, test = [], []
    per_class_train = int(round(train_fraction * n_samples / N_CLASSES))
    counts = {c: 0 for c in range(N_CLASSES)}
    for t in order:
        cls = int(labels[t])
        if counts[cls] < per_class_train:
            train.append(t)
            counts[cls] += 1
        else:
            test.append(t)
    slices = volumes[:, SIDE // 2].copy()
    return SynthDataset(
        volumes=volumes,
        labels=labels.astype(np.int64),
        slices=slices,
        train_idx=np.array(sorted(train), dtype=np.int64),
        test_idx=np.array(sorted(test), dtype=np.int64),
        seed=int(seed),
    )
