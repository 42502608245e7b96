"""Quantile Huber loss with a fused analytic gradient."""
from __future__ import annotations

import numpy as np
import torch
from numba import njit


def quantile_midpoints(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


@njit(cache=True)
def _qh_forward_backward(current, target, tau, kappa, grad):
    """Mean over (batch, critic, quantile, target atom) of the weighted Huber loss.

    ``current`` is (B, E, M), ``target`` is (B, K); the gradient w.r.t.
    ``current`` is written to ``grad``.
    """
    B, E, M = current.shape
    K = target.shape[1]
    scale = 1.0 / (B * E * M * K)
    total = 0.0
    for b in range(B):
        for e in range(E):
            for m in range(M):
                c = current[b, e, m]
                t = tau[m]
                g = 0.0
                for k in range(K):
                    d = target[b, k] - c
                    ad = abs(d)
                    w = t - 1.0 if d < 0.0 else t
                    w = abs(w)
                    if ad <= kappa:
                        total += w * 0.5 * d * d / kappa
                        g -= w * d / kappa
                    else:
                        total += w * (ad - 0.5 * kappa)
                        g -= w * (1.0 if d > 0.0 else -1.0)
                grad[b, e, m] = g * scale
    return total * scale


class _QuantileHuber(torch.autograd.Function):
    @staticmethod
    def forward(ctx, current, target, tau, kappa):
        cur = current.detach().cpu().numpy()
        tgt = target.detach().cpu().numpy().astype(cur.dtype, copy=False)
        grad = np.empty_like(cur)
        loss = _qh_forward_backward(cur, tgt, tau.astype(cur.dtype), cur.dtype.type(kappa), grad)
        ctx.save_for_backward(torch.from_numpy(grad))
        return current.new_tensor(loss)

    @staticmethod
    def backward(ctx, grad_out):
        (grad,) = ctx.saved_tensors
        return grad_out * grad, None, None, None


def quantile_huber_loss(current: torch.Tensor, target: torch.Tensor, kappa: float = 1.0) -> torch.Tensor:
    """Quantile regression loss of ``current`` (B, E, M) quantiles towards ``target`` atoms (B, K).

    Only ``current`` receives a gradient; targets are treated as constants.
    """
    if current.dim() != 3 or target.dim() != 2 or current.shape[0] != target.shape[0]:
        raise ValueError(f"bad shapes {tuple(current.shape)} and {tuple(target.shape)}")
    tau = quantile_midpoints(current.shape[2])
    return _QuantileHuber.apply(current, target.detach(), tau, float(kappa))


def quantile_huber_loss_reference(current: torch.Tensor, target: torch.Tensor, kappa: float = 1.0):
    """Plain torch version (used to cross-check the fused kernel)."""
    tau = torch.as_tensor(quantile_midpoints(current.shape[2]), dtype=current.dtype)
    d = target[:, None, None, :] - current[:, :, :, None]
    ad = d.abs()
    huber = torch.where(ad <= kappa, 0.5 * d ** 2 / kappa, ad - 0.5 * kappa)
    w = (tau[None, None, :, None] - (d < 0).to(current.dtype)).abs()
    return (w * huber).mean()
