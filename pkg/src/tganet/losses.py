"""Joint training objective.

Four equally weighted terms: cross-entropy on the count head, cross-entropy
on the size head, binary cross-entropy on the predicted mask, and dice loss
on the predicted mask.
"""

from __future__ import annotations

import dataclasses

import torch
import torch.nn.functional as F

from .errors import ShapeMismatch

DICE_SMOOTH = 1.0
PROB_CLAMP = 1e-7


@dataclasses.dataclass
class LossBreakdown:
    ce_count: torch.Tensor
    ce_size: torch.Tensor
    bce_seg: torch.Tensor
    dice_seg: torch.Tensor
    total: torch.Tensor

    def detached(self) -> dict:
        """Plain-float view for logging."""
        return {
            "ce_count": float(self.ce_count.detach()),
            "ce_size": float(self.ce_size.detach()),
            "bce_seg": float(self.bce_seg.detach()),
            "dice_seg": float(self.dice_seg.detach()),
            "total": float(self.total.detach()),
        }


def _check_same_shape(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"prediction {tuple(pred.shape)} vs target {tuple(gt.shape)}")


def _per_sample_flat(x: torch.Tensor) -> torch.Tensor:
    # Leading dim is the batch for stacked inputs; plain 1-D/2-D arrays are one sample.
    if x.dim() >= 3:
        return x.reshape(x.shape[0], -1)
    return x.reshape(1, -1)


def dice_loss(pred_prob: torch.Tensor, gt: torch.Tensor, eps: float = DICE_SMOOTH) -> torch.Tensor:
    """1 - (2*overlap + eps) / (pred area + gt area + eps), averaged over the batch.

    The smoothing term makes the empty-prediction/empty-mask case come out
    as a loss of exactly zero.
    """
    _check_same_shape(pred_prob, gt)
    p = _per_sample_flat(pred_prob)
    g = _per_sample_flat(gt).to(p.dtype)
    intersection = (p * g).sum(dim=1)
    denom = p.sum(dim=1) + g.sum(dim=1)
    dice = 1.0 - (2.0 * intersection + eps) / (denom + eps)
    return dice.mean()


def segmentation_loss(pred_prob: torch.Tensor, gt: torch.Tensor):
    """(binary cross-entropy, dice loss) on mask probabilities vs binary targets."""
    _check_same_shape(pred_prob, gt)
    g = gt.to(pred_prob.dtype)
    p = pred_prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    bce = -(g * torch.log(p) + (1.0 - g) * torch.log(1.0 - p)).mean()
    return bce, dice_loss(pred_prob, gt)


def classification_loss(count_logits, size_logits, count_targets, size_targets):
    """(ce_count, ce_size): softmax cross-entropy per head, batch-averaged."""
    count_targets = torch.as_tensor(count_targets, dtype=torch.long, device=count_logits.device)
    size_targets = torch.as_tensor(size_targets, dtype=torch.long, device=size_logits.device)
    ce_count = F.cross_entropy(count_logits, count_targets)
    ce_size = F.cross_entropy(size_logits, size_targets)
    return ce_count, ce_size


def joint_loss(output, gt_mask, count_targets=None, size_targets=None) -> LossBreakdown:
    """Sum of the four loss terms with equal weights.

    `output` is a NetworkOutput. When the network ran without its
    classification heads, both cross-entropy terms are reported as zero
    constants and contribute nothing to the gradients.
    """
    bce, dice = segmentation_loss(output.mask_prob, gt_mask)
    if output.logits is None:
        zero = torch.zeros((), dtype=bce.dtype, device=bce.device)
        ce_count, ce_size = zero, zero
    else:
        if count_targets is None or size_targets is None:
            raise ValueError("classification targets required when logits are present")
        ce_count, ce_size = classification_loss(
            output.logits.count_logits, output.logits.size_logits, count_targets, size_targets
        )
    total = ce_count + ce_size + bce + dice
    return LossBreakdown(ce_count=ce_count, ce_size=ce_size, bce_seg=bce, dice_seg=dice, total=total)
