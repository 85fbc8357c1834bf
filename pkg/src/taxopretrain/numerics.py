"""Dense float64 numerics: activations, losses, the Adam update, and a
finite-difference gradient oracle used by the test suite."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

# Floor applied inside log() so a zero probability never produces -inf.
LOG_CLIP = 1e-12


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Softmax with max-subtraction; rows sum to 1 and the result is
    invariant to adding a constant to every logit.

    Raises ValueError on non-finite input.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.size == 0:
        raise ValueError("softmax: empty input")
    if not np.all(np.isfinite(logits)):
        raise ValueError("softmax: non-finite input")
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def cross_entropy(probs: np.ndarray, target: int, weight: float = 1.0) -> float:
    """Weighted negative log-likelihood of one sample:
    -weight * log(max(probs[target], 1e-12)).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= target < probs.shape[-1]:
        raise IndexError(f"cross_entropy: target {target} out of range for {probs.shape[-1]} classes")
    if weight <= 0:
        raise ValueError("cross_entropy: weight must be positive")
    return float(-weight * np.log(max(float(probs[target]), LOG_CLIP)))


def batch_cross_entropy(
    probs: np.ndarray, targets: np.ndarray, sample_weights: np.ndarray | None = None
) -> float:
    """Mean weighted cross-entropy of a batch. probs is (B, C), targets (B,)."""
    targets = np.asarray(targets)
    if targets.size and (targets.min() < 0 or targets.max() >= probs.shape[1]):
        raise IndexError("batch_cross_entropy: target out of range")
    picked = probs[np.arange(len(targets)), targets]
    losses = -np.log(np.maximum(picked, LOG_CLIP))
    if sample_weights is not None:
        losses = losses * sample_weights
    return float(np.mean(losses))


@dataclass
class AdamState:
    """Per-tensor Adam accumulators plus the (fixed) hyperparameters."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def initial(cls, shape: tuple[int, ...], learning_rate: float, **kwargs) -> "AdamState":
        return cls(
            first_moment=np.zeros(shape),
            second_moment=np.zeros(shape),
            step_count=0,
            learning_rate=learning_rate,
            **kwargs,
        )


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Pure: returns new arrays and state."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise ValueError(
            f"adam_step: shape mismatch params {params.shape}, grads {grads.shape}, "
            f"state {state.first_moment.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


def finite_difference_gradient(
    loss_fn: Callable[[np.ndarray], float], params: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient estimate, one coordinate at a time.

    Slow by construction; intended as an independent oracle for gradient tests.
    """
    params = np.array(params, dtype=np.float64)
    grad = np.zeros_like(params)
    flat = params.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn(params)
        flat[i] = orig - eps
        down = loss_fn(params)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad
