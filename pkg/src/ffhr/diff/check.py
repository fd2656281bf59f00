"""Central finite-difference checks of tape gradients.

The finite-difference side evaluates the function in extended precision
(``np.longdouble``).  In float64 the rounding noise of f(x +/- h) is about
eps |f| / h ~ 1e-11, which alone exceeds the 1e-4 relative tolerance on
gradient entries below ~1e-7.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tape as ad

FD_STEP = 1e-5
PASS_THRESHOLD = 1e-4


def relative_error(g_a, g_fd):
    return np.abs(g_a - g_fd) / np.maximum(1e-8, np.abs(g_a) + np.abs(g_fd))


def numerical_grad(f, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (restored after)."""
    grad = np.zeros(x.shape)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    step = np.asarray(h, dtype=x.dtype)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = np.asarray(f()).reshape(())
        flat[i] = orig - step
        fm = np.asarray(f()).reshape(())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return grad


@dataclass
class GradReport:
    errors: dict = field(default_factory=dict)
    step: float = FD_STEP
    threshold: float = PASS_THRESHOLD

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.threshold

    def format(self) -> str:
        width = max((len(k) for k in self.errors), default=4)
        lines = [f"{name:<{width}s}  {err:.3e}" for name, err in self.errors.items()]
        verdict = "PASS" if self.passed else "FAIL"
        lines.append(f"max relative error {self.max_error:.3e} (h={self.step:g}, threshold {self.threshold:g}): {verdict}")
        return "\n".join(lines)


def check_function(f, arrays: dict, h: float = FD_STEP, corrupt=None) -> GradReport:
    """Compare tape gradients of ``f(vars) -> scalar`` with finite differences.

    ``arrays`` maps names to float64 arrays; they are not modified.
    ``corrupt`` (test hook) may rewrite the analytic gradients before comparison.
    """
    tape = ad.Tape()
    leaves = {k: tape.leaf(v, name=k) for k, v in arrays.items()}
    out = f(leaves)
    grads = ad.backward(tape, out, leaves=list(leaves.values()))
    analytic = {k: grads[v] for k, v in leaves.items()}
    if corrupt is not None:
        analytic = corrupt(analytic)
    report = GradReport(step=h)
    wide = {k: np.array(v, dtype=np.longdouble) for k, v in arrays.items()}
    for name, x in wide.items():
        fd = numerical_grad(lambda: f(wide), x, h)
        report.errors[name] = float(np.max(relative_error(analytic[name], fd), initial=0.0))
    return report


def gradcheck(model, batch, graph=None, h: float = FD_STEP, corrupt=None) -> GradReport:
    """Check every parameter array of ``model`` on the loss of ``batch``.

    Intended for toy sizes (dim <= 16, entities <= 32): the cost is two loss
    evaluations per parameter entry.
    """
    from ..model import batch_loss

    arrays = model.arrays
    return check_function(lambda p: batch_loss(p, model.config, graph, batch), arrays, h, corrupt)
