"""Central finite-difference verification of analytic input gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import CompGraph, Tensor, backward, forward_eval, no_grad


@dataclass
class GradCheckReport:
    tolerance: float
    errors: list[float] = field(default_factory=list)

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| scaled by the larger of the two gradients' max magnitude."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    diff = np.abs(analytic - numeric).max(initial=0.0)
    if scale == 0.0:
        return float(diff)
    return float(diff / scale)


def numeric_gradient(graph: CompGraph, inputs: Sequence[np.ndarray], k: int, step: float) -> np.ndarray:
    base = [np.array(x, dtype=np.float64) for x in inputs]
    out = np.zeros_like(base[k])
    flat = base[k].reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = graph.fn(*[Tensor(x) for x in base]).item()
            flat[i] = orig - step
            lo = graph.fn(*[Tensor(x) for x in base]).item()
            flat[i] = orig
            out.reshape(-1)[i] = (hi - lo) / (2 * step)
    return out


def grad_check(graph: CompGraph, inputs: Sequence, tolerance: float = 1e-4, step: float = 1e-5) -> GradCheckReport:
    """Compare backward() against central differences for every input leaf.

    Failures are flagged in the report, never raised.
    """
    arrays = graph.check_inputs(inputs)
    out, leaves = forward_eval(graph, arrays)
    grads = backward(out, leaves)
    report = GradCheckReport(tolerance)
    for k, leaf in enumerate(leaves):
        numeric = numeric_gradient(graph, arrays, k, step)
        report.errors.append(relative_error(grads[leaf._id], numeric))
    return report
