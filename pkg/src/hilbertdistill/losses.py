"""1D feature codes along mapping tables and the distillation losses.

The distillation loss is the L1 distance between L2-normalized teacher and
student codes, with the teacher code first shrunk to the student length by a
nearest-sample rescaler.  The L1 is the plain sum of absolute differences
(not mean-reduced).  All gradients are analytic and are checked against
central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .curve import MappingTable
from .errors import DegenerateCodeError

RESCALE_MODES = ("left", "center")


@dataclass
class LinearCode:
    """1D feature code: values plus per-slot validity (padded layouts).

    Invalid slots carry value zero, so norms are unaffected by them.  When a
    code was produced by a mapping table, the table rides along so gradients
    can be scattered back to feature-map shape.
    """

    values: np.ndarray
    valid: np.ndarray
    table: MappingTable | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 1 or self.values.shape != self.valid.shape:
            raise ValueError("code values and validity must be equal-length vectors")

    def __len__(self) -> int:
        return self.values.shape[0]

    @classmethod
    def dense(cls, values) -> "LinearCode":
        values = np.asarray(values, dtype=float)
        return cls(values, np.ones(len(values), dtype=bool))


@dataclass
class LossReport:
    """Scalar loss plus gradients for each differentiable input."""

    value: float
    grad_student: np.ndarray
    grad_teacher: np.ndarray | None = None
    grad_student_am: np.ndarray | None = None
    grad_teacher_am: np.ndarray | None = None


@dataclass
class AlignLayer:
    """Length-preserving fully connected layer over a 1D code."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        k = self.bias.shape[0]
        if self.weights.shape != (k, k):
            raise ValueError(
                f"align layer must be square, got {self.weights.shape} with bias {k}"
            )

    @classmethod
    def identity(cls, length: int) -> "AlignLayer":
        return cls(np.eye(length), np.zeros(length))


def map_features(eta: np.ndarray, table: MappingTable) -> LinearCode:
    """Scatter a feature map into its 1D code: code[v] = eta[cell]."""
    eta = np.asarray(eta, dtype=float)
    if tuple(eta.shape) != table.region.extents:
        raise ValueError(
            f"feature extents {eta.shape} != table region {table.region.extents}"
        )
    gathered = eta[tuple(table.entry_axes)]
    if table.identity_slots:
        return LinearCode(gathered, np.ones(table.code_length, dtype=bool), table)
    values = np.zeros(table.code_length)
    valid = np.zeros(table.code_length, dtype=bool)
    values[table.entry_indices] = gathered
    valid[table.entry_indices] = True
    return LinearCode(values, valid, table)


def map_features_weighted(
    eta: np.ndarray, am: np.ndarray, table: MappingTable
) -> LinearCode:
    """Code of the elementwise product of features and activation mapping."""
    eta = np.asarray(eta, dtype=float)
    am = np.asarray(am, dtype=float)
    if eta.shape != am.shape:
        raise ValueError(f"feature extents {eta.shape} != mapping extents {am.shape}")
    return map_features(eta * am, table)


def scatter_code_grad(grad: np.ndarray, table: MappingTable) -> np.ndarray:
    """Adjoint of map_features: gather code-slot gradients back to the map."""
    out = np.zeros(table.region.extents)
    slot_grads = grad if table.identity_slots else grad[table.entry_indices]
    out[tuple(table.entry_axes)] = slot_grads
    return out


def nearest_rescale(
    code: LinearCode, target_length: int, mode: str = "left"
) -> LinearCode:
    """Shrink a code by integer factor, sampling one slot per output slot."""
    if mode not in RESCALE_MODES:
        raise ValueError(f"rescale mode must be one of {RESCALE_MODES}, got {mode!r}")
    length = len(code)
    if target_length < 1 or length % target_length:
        raise ValueError(
            f"code length {length} is not an integer multiple of {target_length}"
        )
    factor = length // target_length
    offset = factor // 2 if mode == "center" else 0
    picks = np.arange(target_length) * factor + offset
    return LinearCode(code.values[picks], code.valid[picks])


def _rescale_picks(length: int, target_length: int, mode: str) -> np.ndarray:
    factor = length // target_length
    offset = factor // 2 if mode == "center" else 0
    return np.arange(target_length) * factor + offset


def _unit(values: np.ndarray, side: str):
    norm = float(np.linalg.norm(values))
    if norm == 0.0:
        raise DegenerateCodeError(f"{side} code has zero norm")
    return values / norm, norm


def hd_loss(
    code_teacher: LinearCode, code_student: LinearCode, mode: str = "left"
) -> LossReport:
    """L1 distance of the L2-normalized codes, teacher rescaled to match.

    Gradients are with respect to the raw code values; when a code carries
    its mapping table they are scattered back to feature-map shape.
    """
    ls = len(code_student)
    lt = len(code_teacher)
    if lt % ls:
        raise ValueError(f"teacher length {lt} does not rescale to student {ls}")
    picks = _rescale_picks(lt, ls, mode)
    rt = code_teacher.values[picks]
    ut, nt = _unit(rt, "teacher")
    us, ns = _unit(code_student.values, "student")
    diff = ut - us
    value = float(np.abs(diff).sum())
    sign = np.sign(diff)
    # d|u|/dx for u = x/||x||: (g - (g.u) u)/||x||
    gt_r = (sign - np.dot(sign, ut) * ut) / nt
    gs = (-sign - np.dot(-sign, us) * us) / ns
    gt = np.zeros(lt)
    gt[picks] = gt_r
    grad_student = (
        scatter_code_grad(gs, code_student.table) if code_student.table else gs
    )
    grad_teacher = (
        scatter_code_grad(gt, code_teacher.table) if code_teacher.table else gt
    )
    return LossReport(value=value, grad_student=grad_student, grad_teacher=grad_teacher)


def vhd_loss(
    eta_t: np.ndarray,
    am_t: np.ndarray,
    table_t: MappingTable,
    eta_s: np.ndarray,
    am_s: np.ndarray,
    table_s: MappingTable,
    mode: str = "left",
) -> LossReport:
    """Distillation loss of the activation-weighted codes.

    Equivalent to hd_loss on map_features_weighted outputs; gradients are
    returned for the feature maps and for both activation mappings.
    """
    code_t = map_features_weighted(eta_t, am_t, table_t)
    code_s = map_features_weighted(eta_s, am_s, table_s)
    code_t.table = None
    code_s.table = None
    rep = hd_loss(code_t, code_s, mode=mode)
    gs_cells = rep.grad_student[table_s.entry_indices]
    gt_cells = rep.grad_teacher[table_t.entry_indices]
    gs = np.zeros(table_s.region.extents)
    gt = np.zeros(table_t.region.extents)
    gs_am = np.zeros(table_s.region.extents)
    gt_am = np.zeros(table_t.region.extents)
    s_cells = tuple(table_s.entry_axes)
    t_cells = tuple(table_t.entry_axes)
    gs[s_cells] = gs_cells * np.asarray(am_s, dtype=float)[s_cells]
    gs_am[s_cells] = gs_cells * np.asarray(eta_s, dtype=float)[s_cells]
    gt[t_cells] = gt_cells * np.asarray(am_t, dtype=float)[t_cells]
    gt_am[t_cells] = gt_cells * np.asarray(eta_t, dtype=float)[t_cells]
    return LossReport(
        value=rep.value,
        grad_student=gs,
        grad_teacher=gt,
        grad_student_am=gs_am,
        grad_teacher_am=gt_am,
    )


def total_loss(ce: float, distill: float, alpha: float) -> float:
    """Task loss plus alpha-weighted distillation term."""
    if alpha < 0:
        raise ValueError(f"distillation weight must be >= 0, got {alpha}")
    return float(ce) + alpha * float(distill)


def fc_align(code: LinearCode, layer: AlignLayer) -> LinearCode:
    """Affine, length-preserving transform of a code."""
    k = layer.bias.shape[0]
    if len(code) != k:
        raise ValueError(f"align layer size {k} != code length {len(code)}")
    return LinearCode(layer.weights @ code.values + layer.bias, np.ones(k, dtype=bool))


def fc_align_backward(code: LinearCode, layer: AlignLayer, grad_out: np.ndarray):
    """Gradients of fc_align output w.r.t. (code values, weights, bias)."""
    grad_out = np.asarray(grad_out, dtype=float)
    grad_code = layer.weights.T @ grad_out
    grad_w = np.outer(grad_out, code.values)
    return grad_code, grad_w, grad_out.copy()
