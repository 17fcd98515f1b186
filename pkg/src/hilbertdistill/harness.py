"""Desk-scale distillation experiments: config, training loops, metrics.

A tiny 3D teacher is trained on synthetic volumes, then a 2D student is
trained on slices with cross entropy plus an optional distillation term:
curve-based (hd / vhd) or one of the depth-reduction baselines (avg / max /
conv).  Everything is deterministic in (config, seed).

Multi-channel distillation computes the loss per aligned channel pair and
averages; pairs whose code norm vanishes (dead ReLU channels) are skipped by
the norm guard rather than silently regularized.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .curve import CurveSpec, Region, build_mapping, select_order
from .errors import ConfigError, TrainingDivergedError
from .losses import AlignLayer, _rescale_picks
from .models import TinyConvNet
from .synth import SIDE, SynthDataset, make_synthetic
from . import tape

LOSS_KINDS = ("none", "hd", "vhd", "avg", "max", "conv")


@dataclass
class HarnessConfig:
    alpha: float = 4.0
    theta: float = 0.5
    distill_layer: int = 2
    channels: int = 4
    lr: float = 0.05
    epochs: int = 5
    batch: int = 16
    seed: int = 0
    loss_kind: str = "none"
    n_samples: int = 240
    noise: float = 1.4
    teacher_lr: float = 0.2
    teacher_epochs: int = 8
    teacher_widths: tuple[int, int] = (4, 8)
    student_widths: tuple[int, int] = (4, 8)
    layout: str = "compacted"
    rescale: str = "left"
    student_slice: str = "middle"
    align_fc: str = "none"  # length-preserving FC on codes: none/student/teacher/both

    def __post_init__(self):
        checks = [
            ("alpha", self.alpha >= 0, ">= 0"),
            ("theta", 0.0 < self.theta < 1.0, "in (0, 1)"),
            ("distill_layer", self.distill_layer in (1, 2), "1 or 2"),
            ("channels", self.channels >= 1, ">= 1"),
            (
                "channels",
                self.channels <= min(self.teacher_widths[1], self.student_widths[1]),
                "<= network channel width",
            ),
            ("lr", self.lr > 0, "> 0"),
            ("teacher_lr", self.teacher_lr > 0, "> 0"),
            ("epochs", self.epochs >= 0, ">= 0"),
            ("batch", self.batch >= 1, ">= 1"),
            ("loss_kind", self.loss_kind in LOSS_KINDS, f"one of {LOSS_KINDS}"),
            ("n_samples", self.n_samples >= 8, ">= 8"),
            ("layout", self.layout in ("padded", "compacted"), "padded or compacted"),
            ("rescale", self.rescale in ("left", "center"), "left or center"),
            (
                "student_slice",
                self.student_slice in ("middle", "random"),
                "middle or random",
            ),
            (
                "align_fc",
                self.align_fc in ("none", "student", "teacher", "both"),
                "none, student, teacher or both",
            ),
        ]
        for key, ok, requirement in checks:
            if not ok:
                raise ConfigError(key, f"must be {requirement}")

    @classmethod
    def from_dict(cls, data: dict) -> "HarnessConfig":
        known = {f for f in cls.__dataclass_fields__}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
        data = dict(data)
        for key in ("teacher_widths", "student_widths"):
            if key in data:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from exc


@dataclass
class RunReport:
    role: str
    seed: int
    loss_kind: str
    epoch_losses: list[float]
    final_accuracy: float
    config: dict = field(default_factory=dict)

    def to_json_obj(self) -> dict:
        return {
            "role": self.role,
            "seed": self.seed,
            "loss_kind": self.loss_kind,
            "epoch_losses": self.epoch_losses,
            "final_accuracy": self.final_accuracy,
            "config": self.config,
        }

    def to_text(self) -> str:
        lines = [
            f"{'role':<16}{self.role}",
            f"{'seed':<16}{self.seed}",
            f"{'loss_kind':<16}{self.loss_kind}",
            f"{'accuracy %':<16}{self.final_accuracy:.2f}",
        ]
        for e, loss in enumerate(self.epoch_losses):
            lines.append(f"{'epoch ' + str(e):<16}{loss:.6f}")
        return "\n".join(lines)


def _config_echo(config: HarnessConfig) -> dict:
    echo = asdict(config)
    echo["teacher_widths"] = list(config.teacher_widths)
    echo["student_widths"] = list(config.student_widths)
    return echo


def reduce3d(features: np.ndarray, mode: str, conv_weights: np.ndarray | None = None):
    """Collapse the leading depth axis of a (D, W, H) map to (W, H)."""
    features = np.asarray(features, dtype=float)
    if features.ndim != 3 or features.shape[0] < 1:
        raise ValueError("reduce3d expects a (D, W, H) tensor with D >= 1")
    if mode == "avg":
        return features.mean(axis=0)
    if mode == "max":
        return features.max(axis=0)
    if mode == "conv":
        if conv_weights is None:
            conv_weights = np.full(features.shape[0], 1.0 / features.shape[0])
        conv_weights = np.asarray(conv_weights, dtype=float)
        if conv_weights.shape != (features.shape[0],):
            raise ValueError("conv reducer needs one weight per depth slice")
        return np.tensordot(conv_weights, features, axes=(0, 0))
    raise ValueError(f"unknown reduction mode {mode!r}")


# ---------------------------------------------------------------------------
# Batched normalized-L1 over rows of (teacher, student) code matrices.
# Vectorized form of losses.hd_loss applied per aligned channel pair;
# tests pin it against the per-pair reference composition.
# ---------------------------------------------------------------------------


def _paired_norml1(teacher_rows: np.ndarray, student_rows: np.ndarray, picks):
    """Mean normalized-L1 over row pairs plus gradients for both sides.

    Rows whose norm vanishes (dead features) are skipped and contribute
    nothing; the teacher gradient is with respect to the pre-rescale rows.
    """
    rt = teacher_rows[:, picks] if picks is not None else teacher_rows
    nt = np.linalg.norm(rt, axis=1)
    ns = np.linalg.norm(student_rows, axis=1)
    keep = (nt > 0) & (ns > 0)
    gs = np.zeros_like(student_rows)
    gt = np.zeros_like(teacher_rows)
    if not np.any(keep):
        return 0.0, gs, gt
    ut = rt[keep] / nt[keep, None]
    us = student_rows[keep] / ns[keep, None]
    diff = ut - us
    sign = np.sign(diff)
    m = int(keep.sum())
    value = float(np.abs(diff).sum() / m)
    dot_s = np.einsum("ml,ml->m", sign, us)
    gs[keep] = (-sign + dot_s[:, None] * us) / ns[keep, None] / m
    dot_t = np.einsum("ml,ml->m", sign, ut)
    gt_picked = (sign - dot_t[:, None] * ut) / nt[keep, None] / m
    if picks is None:
        gt[keep] = gt_picked
    else:
        rows = np.flatnonzero(keep)
        gt[rows[:, None], picks[None, :]] = gt_picked
    return value, gs, gt


class _DistillPlan:
    """Precomputed teacher-side quantities plus the per-batch student hook."""

    def __init__(self, config: HarnessConfig, teacher: TinyConvNet, dataset: SynthDataset):
        self.config = config
        self.kind = config.loss_kind
        self.teacher = teacher
        tap = config.distill_layer
        vols = dataset.volumes[:, None]
        feats = []
        ams = []
        for start in range(0, dataset.n, 32):
            xb = vols[start : start + 32]
            if self.kind == "vhd":
                grads, fv = teacher.class_feature_grads(xb, tap=tap)
                sp_axes = tuple(range(3, grads.ndim))
                gamma = grads.mean(axis=(0,) + sp_axes)
                ams.append(np.einsum("bc,bc...->b...", gamma, fv))
            else:
                fv = teacher.feature_values(xb, tap=tap)
            feats.append(fv)
        self.t_feats = np.concatenate(feats)[:, : config.channels]
        self.t_am = np.concatenate(ams) if ams else None
        t_extents = self.t_feats.shape[2:]
        self.s_extents = tuple(SIDE // (2 ** (tap - 1)) for _ in range(2))
        if self.kind in ("hd", "vhd"):
            t_region = Region(t_extents)
            s_region = Region(self.s_extents)
            t_spec = CurveSpec(3, select_order(t_region, 3))
            s_spec = CurveSpec(2, select_order(s_region, 2))
            self.t_table = build_mapping(t_spec, t_region, config.layout)
            self.s_table = build_mapping(s_spec, s_region, config.layout)
            if self.t_table.code_length % self.s_table.code_length:
                raise ConfigError(
                    "distill_layer",
                    "teacher code length must be a multiple of the student's",
                )
            self.picks = _rescale_picks(
                self.t_table.code_length, self.s_table.code_length, config.rescale
            )
            self.t_codes = self._gather_codes(self.t_feats, self.t_table, self.t_am)
            self.align_s = (
                AlignLayer.identity(self.s_table.code_length)
                if config.align_fc in ("student", "both")
                else None
            )
            self.align_t = (
                AlignLayer.identity(self.t_table.code_length)
                if config.align_fc in ("teacher", "both")
                else None
            )
        else:
            self.reducer = np.full(t_extents[0], 1.0 / t_extents[0])
            if self.kind == "avg":
                reduced = self.t_feats.mean(axis=2)
                self.t_codes = reduced.reshape(*reduced.shape[:2], -1)
            elif self.kind == "max":
                reduced = self.t_feats.max(axis=2)
                self.t_codes = reduced.reshape(*reduced.shape[:2], -1)
            self.picks = None

    def _gather_codes(self, feats, table, am):
        n, c = feats.shape[:2]
        vals = feats if am is None else feats * am[:, None]
        gathered = vals[(slice(None), slice(None)) + tuple(table.entry_axes)]
        codes = np.zeros((n, c, table.code_length))
        codes[:, :, table.entry_indices] = gathered
        return codes

    def batch_term(self, idx, student_feats_value, student_am):
        """Distillation value and gradient w.r.t. the student features."""
        cfg = self.config
        b, c = student_feats_value.shape[:2]
        c = min(c, cfg.channels)
        s_feats = student_feats_value[:, :c]
        if self.kind == "conv":
            t_rows = np.einsum("d,bcdij->bcij", self.reducer, self.t_feats[idx])
            t_rows = t_rows.reshape(b, c, -1)
        elif self.kind in ("avg", "max"):
            t_rows = self.t_codes[idx][:, :c]
        else:
            t_rows = self.t_codes[idx][:, :c]
        if self.kind in ("hd", "vhd"):
            weights = None
            if self.kind == "vhd":
                weights = student_am[:, None]
                s_vals = s_feats * weights
            else:
                s_vals = s_feats
            gathered = s_vals[(slice(None), slice(None)) + tuple(self.s_table.entry_axes)]
            s_rows = np.zeros((b, c, self.s_table.code_length))
            s_rows[:, :, self.s_table.entry_indices] = gathered
            flat_t = t_rows.reshape(b * c, -1)
            flat_s = s_rows.reshape(b * c, -1)
            rt = self._apply_align(self.align_t, flat_t)
            rs = self._apply_align(self.align_s, flat_s)
            value, g_rows, gt_rows = _paired_norml1(rt, rs, self.picks)
            g_rows = self._chain_align(self.align_s, flat_s, g_rows)
            self._chain_align(self.align_t, flat_t, gt_rows)
            g_codes = g_rows.reshape(b, c, -1)
            g_gathered = g_codes[:, :, self.s_table.entry_indices]
            g_feats = np.zeros_like(student_feats_value)
            view = np.zeros((b, c) + self.s_extents)
            view[(slice(None), slice(None)) + tuple(self.s_table.entry_axes)] = g_gathered
            if self.kind == "vhd":
                view = view * weights
            g_feats[:, :c] = view
            return value, g_feats
        # depth-reduction baselines on row-major flattened maps
        flat_s = s_feats.reshape(b * c, -1)
        flat_t = t_rows.reshape(b * c, -1)
        value, g_rows, gt_rows = _paired_norml1(flat_t, flat_s, None)
        if self.kind == "conv":
            # reducer trained jointly: chain the teacher-side gradient into it
            gt = gt_rows.reshape(b, c, *self.s_extents)
            g_reducer = np.einsum("bcij,bcdij->d", gt, self.t_feats[idx][:, :c])
            self.reducer -= cfg.lr * g_reducer
        g_feats = np.zeros_like(student_feats_value)
        g_feats[:, :c] = g_rows.reshape(b, c, *self.s_extents)
        return value, g_feats

    @staticmethod
    def _apply_align(layer: AlignLayer | None, rows: np.ndarray) -> np.ndarray:
        if layer is None:
            return rows
        return rows @ layer.weights.T + layer.bias

    def _chain_align(self, layer, rows_in, g_rows):
        """SGD step on an align layer; returns the gradient w.r.t. its input.

        Vectorized over rows; per-row it matches losses.fc_align_backward.
        """
        if layer is None:
            return g_rows
        gw = np.einsum("mo,mi->oi", g_rows, rows_in)
        gb = g_rows.sum(axis=0)
        g_in = g_rows @ layer.weights
        layer.weights -= self.config.lr * gw
        layer.bias -= self.config.lr * gb
        return g_in


def _student_am(model: TinyConvNet, x: np.ndarray, tap: int) -> np.ndarray:
    grads, fv = model.class_feature_grads(x, tap=tap)
    sp_axes = tuple(range(3, grads.ndim))
    gamma = grads.mean(axis=(0,) + sp_axes)
    return np.einsum("bc,bc...->b...", gamma, fv)


def train_teacher(dataset: SynthDataset, config: HarnessConfig):
    """Train the 3D teacher; returns (model, RunReport)."""
    rng = np.random.default_rng([config.seed, 0])
    model = TinyConvNet(3, widths=config.teacher_widths, rng=rng)
    x_all = dataset.volumes[:, None]
    losses = _fit(
        model, x_all, dataset.labels, dataset.train_idx, rng, config.teacher_lr,
        config.teacher_epochs, config.batch,
    )
    acc = model.accuracy(x_all[dataset.test_idx], dataset.labels[dataset.test_idx])
    report = RunReport(
        role="teacher",
        seed=config.seed,
        loss_kind="none",
        epoch_losses=losses,
        final_accuracy=acc,
        config=_config_echo(config),
    )
    return model, report


def _fit(model, x_all, labels, train_idx, rng, lr, epochs, batch, step_hook=None, tap=2):
    losses = []
    for _ in range(epochs):
        order = rng.permutation(train_idx)
        epoch_loss = 0.0
        steps = 0
        for start in range(0, len(order), batch):
            idx = order[start : start + batch]
            logits, feats, pv = model.forward(x_all[idx], tap=tap)
            loss = tape.softmax_cross_entropy(logits, labels[idx])
            if step_hook is not None:
                loss = step_hook(idx, loss, feats)
            if not np.isfinite(loss.value):
                raise TrainingDivergedError("non-finite training loss")
            tape.backward(loss)
            model.sgd_step(pv, lr)
            epoch_loss += float(loss.value)
            steps += 1
        losses.append(epoch_loss / max(steps, 1))
    return losses


def train_student(dataset: SynthDataset, teacher: TinyConvNet | None, config: HarnessConfig):
    """Train the 2D student, optionally with a distillation term."""
    if config.loss_kind != "none" and teacher is None:
        raise ValueError(f"loss_kind {config.loss_kind!r} requires a trained teacher")
    rng = np.random.default_rng([config.seed, 1])
    model = TinyConvNet(2, widths=config.student_widths, rng=rng)
    if config.student_slice == "middle":
        slices = dataset.slices
    else:
        picks = np.random.default_rng([config.seed, 2]).integers(
            5, 11, size=dataset.n
        )
        slices = dataset.volumes[np.arange(dataset.n), picks]
    x_all = slices[:, None]
    plan = (
        _DistillPlan(config, teacher, dataset) if config.loss_kind != "none" else None
    )
    tap = config.distill_layer

    def hook(idx, ce, feats):
        if plan is None:
            return ce
        s_am = None
        if config.loss_kind == "vhd":
            s_am = _student_am(model, x_all[idx], tap)
        value, grad = plan.batch_term(idx, feats.value, s_am)
        penalty = tape.external_penalty(feats, value, grad)
        return tape.add(ce, tape.scale(penalty, config.alpha))

    losses = _fit(
        model, x_all, dataset.labels, dataset.train_idx, rng, config.lr,
        config.epochs, config.batch, step_hook=hook, tap=tap,
    )
    test_x = dataset.slices[dataset.test_idx][:, None]
    acc = model.accuracy(test_x, dataset.labels[dataset.test_idx])
    return RunReport(
        role="student",
        seed=config.seed,
        loss_kind=config.loss_kind,
        epoch_losses=losses,
        final_accuracy=acc,
        config=_config_echo(config),
    )


def run_experiment(config: HarnessConfig) -> list[RunReport]:
    """Dataset + teacher (when needed) + student, all from one config."""
    dataset = make_synthetic(config.n_samples, config.seed, config.noise)
    reports = []
    teacher = None
    if config.loss_kind != "none":
        teacher, t_report = train_teacher(dataset, config)
        reports.append(t_report)
    reports.append(train_student(dataset, teacher, config))
    return reports


def ari(student_accs, baseline_accs, vhd_accs) -> float:
    """Average relative improvement of the vhd accuracies over a baseline."""
    stu = np.asarray(student_accs, dtype=float)
    bkd = np.asarray(baseline_accs, dtype=float)
    vhd = np.asarray(vhd_accs, dtype=float)
    if not (stu.shape == bkd.shape == vhd.shape) or stu.ndim != 1 or stu.size == 0:
        raise ValueError("ari needs three equal-length accuracy sequences")
    denom = bkd - stu
    if np.any(denom == 0):
        raise ZeroDivisionError("baseline accuracy equals student accuracy")
    return float(np.mean((vhd - bkd) / denom) * 100.0)


def bench_curve(specs, reps: int = 5, impl: str | None = None) -> list[dict]:
    """Median wall-clock of full-region mapping construction per curve."""
    if reps < 5:
        raise ValueError("benchmark needs at least 5 repetitions")
    rows = []
    for spec in specs:
        region = Region((spec.side,) * spec.n)
        build_mapping(spec, region, "compacted", impl=impl)  # warm up
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            build_mapping(spec, region, "compacted", impl=impl)
            times.append((time.perf_counter() - t0) * 1000.0)
        rows.append(
            {
                "n": spec.n,
                "side": spec.side,
                "p": spec.p,
                "points": spec.length,
                "ms": float(np.median(times)),
            }
        )
    return rows
