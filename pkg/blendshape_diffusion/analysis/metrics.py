"""
Facial blendshape error (FBE), emotional eyebrow error (EBE) and facial dynamics deviation (FDD).
Raw values are returned; the ×10⁻² / ×10⁻⁴ presentation scales live in the report.
"""
import numpy as np
from blendshape_diffusion.sequences.blendshapes import FacePartition
from blendshape_diffusion.shared.constants import MIN_SEQUENCE_FRAMES
from blendshape_diffusion.shared.exceptions import LengthError, ShapeError


def _pair(pred, gt):
    pred = np.asarray(getattr(pred, "frames", pred), dtype=np.float64)
    gt = np.asarray(getattr(gt, "frames", gt), dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ShapeError(f"Prediction {pred.shape} and ground truth {gt.shape} must be equal L×C matrices")
    return pred, gt


def fbe(pred, gt):
    """Mean over frames of the L2 norm of the per-frame coefficient error"""
    pred, gt = _pair(pred, gt)
    return float(np.linalg.norm(pred - gt, axis=1).mean())


def fbe_mouth(pred, gt, part=None):
    """FBE restricted to the mouth coefficients"""
    part = part or FacePartition.default()
    pred, gt = _pair(pred, gt)
    columns = list(part.mouth_idx)
    return float(np.linalg.norm(pred[:, columns] - gt[:, columns], axis=1).mean())


def ebe(pred, gt, part=None):
    """Maximum over frames of the L2 norm of the eyebrow coefficient error"""
    part = part or FacePartition.default()
    pred, gt = _pair(pred, gt)
    columns = list(part.brow_idx)
    return float(np.linalg.norm(pred[:, columns] - gt[:, columns], axis=1).max())


def fdd(pred, gt, part=None):
    """
    Mean over upper-face coefficients of |σ(pred) - σ(gt)|, with σ the population standard
    deviation over frames.
    """
    part = part or FacePartition.default()
    pred, gt = _pair(pred, gt)
    if pred.shape[0] < MIN_SEQUENCE_FRAMES:
        raise LengthError(f"FDD needs at least {MIN_SEQUENCE_FRAMES} frames, got {pred.shape[0]}")
    columns = list(part.upper_idx)
    return float(np.abs(pred[:, columns].std(axis=0) - gt[:, columns].std(axis=0)).mean())


def sequence_metrics(pred, gt, part=None):
    """All metrics for one pair, keyed by report column"""
    part = part or FacePartition.default()
    return {
        "fbe": fbe(pred, gt),
        "ebe": ebe(pred, gt, part),
        "fdd": fdd(pred, gt, part),
        "fbe_mouth": fbe_mouth(pred, gt, part),
    }
