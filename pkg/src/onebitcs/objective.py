"""Penalized log-likelihood of the sign-quantized measurements.

The estimate lives in C^B but is handled through its real form
x_R = [Re(x); Im(x)].  With s = sqrt(2*rho) * y_R elementwise over the sign
pattern y_R = [Re(y_hat); Im(y_hat)], the data term and its gradient are

    f(x)      = sum_i log Phi(s_i * (A_R x_R)_i)
    grad f    = A_R^T (inv_mills(s .* A_R x_R) .* s)

and the Gaussian prior contributes g(x) = -||x_R||^2, grad -2 x_R.  All of
it reduces to one operator application (and one adjoint for the gradient)
because A_R x_R and A_R^T w are the real forms of A x and A^H w.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .model import QuantizedMeasurement
from .operator import SensingOperator, complex_form, real_form

__all__ = [
    "ObjectiveContext",
    "log_ndtr",
    "inv_mills",
    "f_loglik",
    "g_logprior",
    "grad_h",
    "h_objective",
]

_SQRT_2 = np.sqrt(2.0)
_SQRT_2_OVER_PI = np.sqrt(2.0 / np.pi)


def log_ndtr(x):
    """log of the standard normal CDF, stable over the whole real line."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("log_ndtr requires finite input")
    out = special.log_ndtr(x)
    return float(out) if out.ndim == 0 else out

def inv_mills(x):
    """Inverse Mills ratio phi(x) / Phi(x).

    Strictly positive and strictly decreasing.  The direct ratio underflows
    once Phi(x) drops past the smallest normal float (x near -38), so the
    negative branch goes through the scaled complementary error function:
    lambda(x) = sqrt(2/pi) / erfcx(-x / sqrt(2)).
    """
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("inv_mills requires finite input")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    neg = x < 0.0
    out[neg] = _SQRT_2_OVER_PI / special.erfcx(-x[neg] / _SQRT_2)
    pos = ~neg
    phi = np.exp(-0.5 * x[pos] ** 2) / np.sqrt(2.0 * np.pi)
    out[pos] = phi / special.ndtr(x[pos])
    return float(out[0]) if scalar else out


@dataclass(frozen=True, eq=False)
class ObjectiveContext:
    """Fixed data of one estimation problem: operator, signs, SNR.

    rho defaults to the SNR stored with the measurement.
    """

    op: SensingOperator
    y_hat: QuantizedMeasurement
    rho: float | None = None
    _signs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rho = self.y_hat.rho if self.rho is None else float(self.rho)
        if rho < 0:
            raise ValueError(f"rho must be >= 0, got {rho}")
        object.__setattr__(self, "rho", rho)
        y = np.asarray(self.y_hat.y_hat)
        if y.shape != (self.op.M * self.op.T,):
            raise ValueError(
                f"measurement length {y.shape} does not match operator "
                f"output length {self.op.M * self.op.T}"
            )
        # sqrt(2*rho)-scaled sign pattern in real form, fixed for the run.
        signs = np.sqrt(2.0 * rho) * real_form(y)
        signs.flags.writeable = False
        object.__setattr__(self, "_signs", signs)

    @property
    def num_terms(self) -> int:
        """Number of scalar likelihood terms, 2*M*T."""
        return self._signs.shape[0]


def _scaled_inner(ctx: ObjectiveContext, x: np.ndarray) -> np.ndarray:
    """The 2MT likelihood arguments s .* A_R x_R via one operator apply."""
    u = ctx.op.apply(x)
    return ctx._signs * real_form(u)


def f_loglik(ctx: ObjectiveContext, x: np.ndarray) -> float:
    """Log-likelihood of the sign pattern at estimate x; always <= 0."""
    x = np.asarray(x, dtype=complex)
    return float(np.sum(special.log_ndtr(_scaled_inner(ctx, x))))


def g_logprior(x: np.ndarray) -> float:
    """Gaussian log-prior -||x||^2 (constant factor dropped)."""
    x = np.asarray(x)
    return float(-np.vdot(x, x).real)


def h_objective(ctx: ObjectiveContext, x: np.ndarray) -> float:
    """Penalized objective f + g; concave in the real form of x."""
    return f_loglik(ctx, x) + g_logprior(x)


def grad_h(ctx: ObjectiveContext, x: np.ndarray) -> np.ndarray:
    """Gradient of f + g in complex storage.

    The returned vector's real and imaginary parts are the two halves of
    the real-form gradient A_R^T (inv_mills(v) .* s) - 2 x_R; solvers use
    this convention throughout.  Costs one apply and one adjoint.
    """
    x = np.asarray(x, dtype=complex)
    v = _scaled_inner(ctx, x)
    w = complex_form(inv_mills(v) * ctx._signs)
    return ctx.op.apply_adjoint(w) - 2.0 * x
