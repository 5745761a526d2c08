"""Training losses for the detection and matting-and-fitting stages.

Both are plain numpy functions with hand-written subgradients so they can be
checked against finite differences without an autodiff framework.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .trajectory import Curve, curve_loss

BCE_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    alpha_a: float = 15.0
    alpha_b: float = 0.4
    alpha_c: float = 4.0 / 256.0

    def __post_init__(self):
        if min(self.alpha_a, self.alpha_b, self.alpha_c) < 0:
            raise ValueError("loss weights must be non-negative")

    def scaled(self, lam: float) -> "LossWeights":
        return LossWeights(self.alpha_a * lam, self.alpha_b * lam, self.alpha_c * lam)


def _same_shape(a, b, what):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"{what}: shapes {a.shape} and {b.shape} differ")
    return a, b


def detection_loss(D, D_hat) -> float:
    """Mean |D - D_hat| over pixels with D > 0 plus mean |D_hat| over pixels with D == 0.

    Either term is dropped when its pixel set is empty.
    """
    D, D_hat = _same_shape(D, D_hat, "detection loss")
    pos = D > 0
    n1 = int(pos.sum())
    n0 = D.size - n1
    loss = 0.0
    if n1:
        loss += float(np.abs(D - D_hat)[pos].sum()) / n1
    if n0:
        loss += float(np.abs(D_hat)[~pos].sum()) / n0
    return loss


def detection_loss_grad(D, D_hat) -> np.ndarray:
    """Subgradient of :func:`detection_loss` with respect to ``D_hat`` (sign(0) = 0)."""
    D, D_hat = _same_shape(D, D_hat, "detection loss")
    pos = D > 0
    n1 = int(pos.sum())
    n0 = D.size - n1
    g = np.zeros_like(D_hat)
    if n1:
        g[pos] = np.sign(D_hat - D)[pos] / n1
    if n0:
        g[~pos] = np.sign(D_hat)[~pos] / n0
    return g


def bce(b: float, b_hat: float) -> float:
    if not 0.0 <= b_hat <= 1.0:
        raise ValueError(f"predicted presence {b_hat} outside [0, 1]")
    return float(-b * np.log(max(b_hat, BCE_FLOOR)) - (1 - b) * np.log(max(1 - b_hat, BCE_FLOOR)))


def bce_grad(b: float, b_hat: float) -> float:
    p = min(max(b_hat, BCE_FLOOR), 1 - BCE_FLOOR)
    return float(-b / p + (1 - b) / (1 - p))


def matting_fitting_loss(gt: dict, pred: dict, w: LossWeights | None = None) -> dict:
    """Weighted appearance, curve and presence losses.

    ``gt`` and ``pred`` carry ``hf``, ``hm``, ``curve`` and ``b`` (the
    prediction's ``b`` is a probability). L1 norms are sums over all pixels
    and channels; the appearance and curve terms are multiplied by the GT
    presence bit. Returns the weighted terms and their total.
    """
    w = w or LossWeights()
    b = float(gt["b"])
    b_hat = float(pred["b"])
    breakdown = {"appearance": 0.0, "curve": 0.0}
    if b:
        hf, hf_hat = _same_shape(gt["hf"], pred["hf"], "hf")
        hm, hm_hat = _same_shape(gt["hm"], pred["hm"], "hm")
        l1 = float(np.abs(hf - hf_hat).sum() + np.abs(hm - hm_hat).sum())
        breakdown["appearance"] = w.alpha_a * b * l1
        breakdown["curve"] = w.alpha_c * b * curve_loss(_curve(gt["curve"]), _curve(pred["curve"]))
    breakdown["bce"] = w.alpha_b * bce(b, b_hat)
    breakdown["total"] = breakdown["appearance"] + breakdown["curve"] + breakdown["bce"]
    return breakdown


def matting_fitting_grads(gt: dict, pred: dict, w: LossWeights | None = None) -> dict:
    """Subgradients of the appearance and presence terms with respect to the predictions."""
    w = w or LossWeights()
    b = float(gt["b"])
    hf, hf_hat = _same_shape(gt["hf"], pred["hf"], "hf")
    hm, hm_hat = _same_shape(gt["hm"], pred["hm"], "hm")
    return {
        "hf": w.alpha_a * b * np.sign(hf_hat - hf),
        "hm": w.alpha_a * b * np.sign(hm_hat - hm),
        "b": w.alpha_b * bce_grad(b, float(pred["b"])),
    }


def _curve(c) -> Curve:
    return c if isinstance(c, Curve) else Curve.from_dict(c)


def weights_dict(w: LossWeights) -> dict:
    return asdict(w)
