"""Feature-reconstruction losses between student and teacher matrices.

Given student features ``f_s`` and teacher features ``f_t`` (both N x D),
three complementary objectives supervise, respectively, the absolute
values, the per-token directions, and the inter-token relations:

  amplitude  mean over all N*D elements of |f_s - f_t|
  direction  1 - mean over tokens of cos(f_s[i], f_t[i])
  relation   mean over all N*N elements of |G(f_s) - G(f_t)|, with
             G(F) = F F^T / ||F||_F^2 (Frobenius-normalized Gram)

All three are minimized losses, zero when the features coincide. Each
returns its value together with the analytic gradient with respect to
``f_s``; ``grad_check`` verifies gradients against central finite
differences.

Conventions: every reduction is a full element mean so the three values
share a scale; the cosine is guarded by max(norm, eps) so identical
inputs give exactly zero; the subgradient of |.| at 0 is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .encoder import validate_features

_EPS = 1e-12


@dataclass(frozen=True)
class LossValue:
    value: float
    gradient: Optional[np.ndarray] = None


LossFn = Callable[[np.ndarray, np.ndarray], LossValue]


def _check_pair(f_s: np.ndarray, f_t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    f_s = validate_features(f_s, "f_s")
    f_t = validate_features(f_t, "f_t")
    if f_s.shape != f_t.shape:
        raise ValueError(f"shape mismatch: f_s {f_s.shape} vs f_t {f_t.shape}")
    return f_s, f_t


def amplitude_loss(f_s: np.ndarray, f_t: np.ndarray) -> LossValue:
    """Element-mean absolute difference between the two feature matrices."""
    f_s, f_t = _check_pair(f_s, f_t)
    diff = f_s - f_t
    value = float(np.mean(np.abs(diff)))
    grad = np.sign(diff) / diff.size
    return LossValue(value, grad)


def direction_loss(f_s: np.ndarray, f_t: np.ndarray) -> LossValue:
    """One minus the mean per-token cosine similarity; range [0, 2]."""
    f_s, f_t = _check_pair(f_s, f_t)
    n = f_s.shape[0]
    ns = np.linalg.norm(f_s, axis=1)
    nt = np.linalg.norm(f_t, axis=1)
    denom = np.maximum(ns * nt, _EPS)
    dots = np.einsum("ij,ij->i", f_s, f_t)
    cos = dots / denom
    value = float(1.0 - np.mean(cos))
    # d cos_i / d s_i = t_i/(|s||t|) - cos_i * s_i/|s|^2
    grad = -(f_t / denom[:, None] - cos[:, None] * f_s / np.maximum(ns * ns, _EPS)[:, None]) / n
    return LossValue(value, grad)


def _gram(f: np.ndarray) -> tuple[np.ndarray, float]:
    c = max(float(np.sum(f * f)), _EPS)
    return (f @ f.T) / c, c


def relation_loss(f_s: np.ndarray, f_t: np.ndarray) -> LossValue:
    """Element-mean absolute difference of the normalized Gram matrices.

    The Frobenius normalization makes the loss invariant to global
    scaling of either argument, and Grams are invariant to any
    right-orthogonal transform of their argument.
    """
    f_s, f_t = _check_pair(f_s, f_t)
    n = f_s.shape[0]
    g_s, c = _gram(f_s)
    g_t, _ = _gram(f_t)
    diff = g_s - g_t
    value = float(np.mean(np.abs(diff)))
    sign = np.sign(diff)
    # d/dF of sum(S*G): (S + S^T) F / c - 2 <S, G> F / c, all over N^2.
    grad = ((sign + sign.T) @ f_s - 2.0 * float(np.sum(sign * g_s)) * f_s) / (c * n * n)
    return LossValue(value, grad)


def combined_loss(
    f_s: np.ndarray,
    f_t: np.ndarray,
    w_amplitude: float = 1.0,
    w_direction: float = 1.0,
    w_relation: float = 1.0,
) -> LossValue:
    """Weighted sum of the three objectives (weights default to 1 each)."""
    a = amplitude_loss(f_s, f_t)
    d = direction_loss(f_s, f_t)
    r = relation_loss(f_s, f_t)
    value = w_amplitude * a.value + w_direction * d.value + w_relation * r.value
    grad = w_amplitude * a.gradient + w_direction * d.gradient + w_relation * r.gradient
    return LossValue(value, grad)


def grad_check(
    loss: LossFn,
    f_s: np.ndarray,
    f_t: np.ndarray,
    step: float = 1e-5,
    exclude: Optional[np.ndarray] = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Every element of ``f_s`` is perturbed by +-step; the relative error
    uses an absolute floor of 1e-8 in the denominator. ``exclude`` masks
    elements to skip (non-smooth points of |.| sit a finite-difference
    step away from sign changes and have no meaningful derivative).
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    f_s, f_t = _check_pair(f_s, f_t)
    analytic = loss(f_s, f_t).gradient
    if analytic is None:
        raise ValueError("loss did not produce a gradient")

    max_rel = 0.0
    it = np.nditer(f_s, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        if exclude is None or not exclude[idx]:
            bumped = f_s.copy()
            bumped[idx] = f_s[idx] + step
            plus = loss(bumped, f_t).value
            bumped[idx] = f_s[idx] - step
            minus = loss(bumped, f_t).value
            fd = (plus - minus) / (2.0 * step)
            rel = abs(analytic[idx] - fd) / max(abs(analytic[idx]), abs(fd), 1e-8)
            max_rel = max(max_rel, rel)
        it.iternext()
    return max_rel
