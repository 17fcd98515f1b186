"""Tiny convolutional classifiers for the distillation experiments.

Same layout in 2D and 3D: two same-padded conv blocks with factor-2 average
pools, then a linear head over the flattened coarse features (the head must
keep coarse position, the classes differ by bar position).  The distillation
tap is the post-activation feature stack of block 1 (full spatial extent) or
block 2 (halved extent).
"""

from __future__ import annotations

import numpy as np

from . import tape
from .tape import Var


class TinyConvNet:
    """Two conv blocks + pool + linear head over (B, 1, *spatial) inputs."""

    def __init__(self, ndim: int, side: int = 16, widths=(4, 8), classes: int = 4, rng=None):
        if ndim not in (2, 3):
            raise ValueError("ndim must be 2 or 3")
        rng = rng or np.random.default_rng()
        k = (3,) * ndim
        c1, c2 = widths
        head_in = c2 * (side // 4) ** ndim
        self.ndim = ndim
        self.widths = widths
        self.classes = classes
        self.params = {
            "w1": rng.normal(0, np.sqrt(2.0 / np.prod(k)), size=(c1, 1) + k),
            "b1": np.zeros(c1),
            "w2": rng.normal(0, np.sqrt(2.0 / (c1 * np.prod(k))), size=(c2, c1) + k),
            "b2": np.zeros(c2),
            "wl": rng.normal(0, np.sqrt(1.0 / head_in), size=(head_in, classes)),
            "bl": np.zeros(classes),
        }

    def forward(self, x: np.ndarray, tap: int = 2):
        """Build the graph; returns (logits, tapped features, param Vars)."""
        pv = {name: Var(value) for name, value in self.params.items()}
        h = tape.relu(tape.conv(Var(x), pv["w1"], pv["b1"]))
        feats = h if tap == 1 else None
        h = tape.avg_pool(h, 2)
        h = tape.relu(tape.conv(h, pv["w2"], pv["b2"]))
        if tap == 2:
            feats = h
        h = tape.avg_pool(h, 2)
        logits = tape.linear(tape.flatten(h), pv["wl"], pv["bl"])
        return logits, feats, pv

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits, _, _ = self.forward(x)
        return logits.value.argmax(axis=1)

    def accuracy(self, x: np.ndarray, labels: np.ndarray, batch: int = 64) -> float:
        hits = 0
        for start in range(0, len(labels), batch):
            hits += int(
                (self.predict(x[start : start + batch]) == labels[start : start + batch]).sum()
            )
        return 100.0 * hits / len(labels)

    def feature_values(self, x: np.ndarray, tap: int = 2) -> np.ndarray:
        _, feats, _ = self.forward(x, tap=tap)
        return feats.value

    def class_feature_grads(self, x: np.ndarray, tap: int = 2):
        """Gradients of each class-score sum w.r.t. the tapped features.

        Returns (grads, features) with grads shaped (classes, B, C, *spatial).
        """
        logits, feats, _ = self.forward(x, tap=tap)
        grads = np.empty((self.classes,) + feats.value.shape)
        for cls in range(self.classes):
            tape.backward(tape.class_score(logits, cls))
            grads[cls] = feats.grad
        return grads, feats.value

    def sgd_step(self, param_vars: dict[str, Var], lr: float) -> None:
        for name, var in param_vars.items():
            self.params[name] -= lr * var.grad

    def state_bytes(self) -> bytes:
        """Deterministic snapshot used to assert the teacher stays frozen."""
        return b"".join(self.params[k].tobytes() for k in sorted(self.params))
