"""Central finite-difference verification of analytic gradients.

The numerical side never touches the backward pass: each input element is
perturbed by +-h, the scalar loss is re-evaluated forward-only, and the
centered quotient is compared against the recorded gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, backward

# Relative error denominators never drop below this, so near-zero gradients
# are judged on an absolute scale of the same magnitude.
_REL_FLOOR = 1e-6


@dataclass
class GradCheckReport:
    max_rel_error: float
    mean_rel_error: float
    tol: float
    n_elements: int
    per_input: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def _rel_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _REL_FLOOR)
    return np.abs(analytic - numeric) / denom


def grad_check(build_loss, inputs, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic and central-difference gradients of a scalar graph.

    ``build_loss`` maps a list of Tensors to a scalar Tensor and is invoked
    afresh for every perturbed evaluation, so stateful ops must be wrapped
    to reset their state (see the callers in the CLI and tests).  Inputs
    are expected to sit >= 10h away from any non-differentiable kink.
    """
    inputs = [np.array(v, dtype=np.float64) for v in inputs]
    tensors = [Tensor(v, requires_grad=True) for v in inputs]
    loss = build_loss(tensors)
    backward(loss)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data)
                for t in tensors]

    errors = []
    per_input = []
    for idx, base in enumerate(inputs):
        numeric = np.zeros_like(base)
        flat = base.reshape(-1)
        num_flat = numeric.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lo_plus = float(build_loss([Tensor(v) for v in inputs]).data)
            flat[j] = orig - h
            lo_minus = float(build_loss([Tensor(v) for v in inputs]).data)
            flat[j] = orig
            num_flat[j] = (lo_plus - lo_minus) / (2.0 * h)
        err = _rel_error(analytic[idx], numeric)
        errors.append(err.reshape(-1))
        per_input.append({
            "index": idx,
            "max_rel_error": float(err.max()),
            "mean_rel_error": float(err.mean()),
        })

    all_err = np.concatenate(errors)
    return GradCheckReport(
        max_rel_error=float(all_err.max()),
        mean_rel_error=float(all_err.mean()),
        tol=tol,
        n_elements=int(all_err.size),
        per_input=per_input,
    )


def sample_away_from_kinks(rng: np.random.Generator, shape, h: float = 1e-5,
                           margin_steps: float = 10.0) -> np.ndarray:
    """Standard-normal samples nudged at least ``margin_steps * h`` from zero."""
    x = rng.standard_normal(shape)
    margin = margin_steps * h
    close = np.abs(x) < margin
    x[close] = np.sign(x[close] + (x[close] == 0)) * (margin + np.abs(x[close]))
    return x
