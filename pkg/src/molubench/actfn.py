"""Scalar activation kernels: forward values and analytic first derivatives.

All kernels are elementwise, accept a float or a numpy array, and do all
arithmetic in 64-bit floats. Every function here is pure and thread-safe.

Numerical hardening choices, applied consistently to value and derivative:

* MoLU saturates its tanh argument at U_SAT = 20. tanh(20) is closer to 1
  than half a double ulp, so beyond that point the function IS the
  identity at this precision; we return x (and slope 1) exactly instead
  of overflowing exp for moderate inputs.
* GeLU uses the tanh approximation
  0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))), evaluated naively in
  float64. The bundled reference outputs were produced by exactly this
  form, so do not "improve" the evaluation order.
* Mish computes softplus as max(x, 0) + log1p(exp(-|x|)), which neither
  overflows nor loses the tail for large |x|.
* ReLU and LeakyReLU report their right derivative at the kink (slope 1
  for ReLU at x = 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

KINDS = ("molu", "gelu", "mish", "silu", "elu", "tanh", "relu", "leaky_relu")

U_SAT = 20.0
_LOG_U_SAT = math.log(U_SAT)
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


@dataclass(frozen=True)
class ActivationSpec:
    """Which activation to use, plus its parameters.

    alpha doubles as the MoLU alpha (default 2) and the ELU alpha
    (default 1); leave it None to get the per-kind default. Parameters
    irrelevant to the selected kind are ignored.
    """

    kind: str
    alpha: float | None = None
    beta: float = 2.0
    leaky_slope: float = 0.01

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}; expected one of {KINDS}")
        if self.alpha is None:
            object.__setattr__(self, "alpha", 2.0 if self.kind == "molu" else 1.0)
        if self.kind == "molu" and (self.alpha <= 0 or self.beta <= 0):
            raise ValueError(f"molu requires alpha > 0 and beta > 0, got alpha={self.alpha}, beta={self.beta}")
        if self.kind == "elu" and self.alpha <= 0:
            raise ValueError(f"elu requires alpha > 0, got {self.alpha}")


def _check_finite(x):
    if not np.all(np.isfinite(x)):
        raise ValueError("activation input must be finite")


def _as_float64(x):
    return np.asarray(x, dtype=np.float64)


def _maybe_scalar(out, x):
    return float(out) if np.ndim(x) == 0 else out


def _sigmoid(x):
    # exp of a non-positive argument only: stable for any finite x
    t = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + t), t / (1.0 + t))


def _molu_value(x, spec):
    a, b = spec.alpha, spec.beta
    t = b * x + math.log(a)
    u = np.exp(np.minimum(t, _LOG_U_SAT))
    return np.where(t > _LOG_U_SAT, x, x * np.tanh(u))


def _molu_deriv(x, spec):
    # with u = alpha*exp(beta*x):  tanh(u) + x*beta*u*sech^2(u)
    a, b = spec.alpha, spec.beta
    t = b * x + math.log(a)
    u = np.exp(np.minimum(t, _LOG_U_SAT))
    th = np.tanh(u)
    return np.where(t > _LOG_U_SAT, 1.0, th + x * b * u * (1.0 - th * th))


def _gelu_value(x, spec):
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + _GELU_K * x * x * x)))


def _gelu_deriv(x, spec):
    th = np.tanh(_GELU_C * (x + _GELU_K * x * x * x))
    return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * _GELU_C * (1.0 + 3.0 * _GELU_K * x * x)


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def _mish_value(x, spec):
    return x * np.tanh(_softplus(x))


def _mish_deriv(x, spec):
    th = np.tanh(_softplus(x))
    return th + x * (1.0 - th * th) * _sigmoid(x)


def _silu_value(x, spec):
    return x * _sigmoid(x)


def _silu_deriv(x, spec):
    s = _sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def _elu_value(x, spec):
    # clamp before expm1 so the discarded branch cannot overflow
    return np.where(x >= 0, x, spec.alpha * np.expm1(np.minimum(x, 0.0)))


def _elu_deriv(x, spec):
    return np.where(x >= 0, 1.0, spec.alpha * np.exp(np.minimum(x, 0.0)))


def _tanh_value(x, spec):
    return np.tanh(x)


def _tanh_deriv(x, spec):
    th = np.tanh(x)
    return 1.0 - th * th


def _relu_value(x, spec):
    return np.maximum(x, 0.0)


def _relu_deriv(x, spec):
    return np.where(x >= 0, 1.0, 0.0)


def _leaky_value(x, spec):
    return np.where(x >= 0, x, spec.leaky_slope * x)


def _leaky_deriv(x, spec):
    return np.where(x >= 0, 1.0, spec.leaky_slope)


_KERNELS = {
    "molu": (_molu_value, _molu_deriv),
    "gelu": (_gelu_value, _gelu_deriv),
    "mish": (_mish_value, _mish_deriv),
    "silu": (_silu_value, _silu_deriv),
    "elu": (_elu_value, _elu_deriv),
    "tanh": (_tanh_value, _tanh_deriv),
    "relu": (_relu_value, _relu_deriv),
    "leaky_relu": (_leaky_value, _leaky_deriv),
}


def _validate_molu_params(alpha, beta):
    if not (alpha > 0 and beta > 0):
        raise ValueError(f"molu requires alpha > 0 and beta > 0, got alpha={alpha}, beta={beta}")


def molu(x, alpha: float = 2.0, beta: float = 2.0):
    """x * tanh(alpha * exp(beta * x)).

    Exactly 0 at x = 0 and exactly x once alpha*exp(beta*x) exceeds
    U_SAT; never NaN or Inf for finite input.
    """
    _validate_molu_params(alpha, beta)
    xv = _as_float64(x)
    _check_finite(xv)
    out = _molu_value(xv, ActivationSpec("molu", alpha, beta))
    return _maybe_scalar(out, x)


def molu_prime(x, alpha: float = 2.0, beta: float = 2.0):
    """Analytic derivative of molu; exactly 1 in the saturated region."""
    _validate_molu_params(alpha, beta)
    xv = _as_float64(x)
    _check_finite(xv)
    out = _molu_deriv(xv, ActivationSpec("molu", alpha, beta))
    return _maybe_scalar(out, x)


def activation_value(spec: ActivationSpec, x):
    """Evaluate the activation named by spec, elementwise."""
    xv = _as_float64(x)
    _check_finite(xv)
    out = _KERNELS[spec.kind][0](xv, spec)
    return _maybe_scalar(out, x)


def activation_derivative(spec: ActivationSpec, x):
    """Analytic first derivative of activation_value, elementwise."""
    xv = _as_float64(x)
    _check_finite(xv)
    out = _KERNELS[spec.kind][1](xv, spec)
    return _maybe_scalar(out, x)


def comparison_table(inputs, specs) -> np.ndarray:
    """Evaluate every spec at every input: rows = inputs, cols = specs."""
    xv = _as_float64(inputs)
    if xv.size == 0:
        raise ValueError("comparison_table needs at least one input")
    _check_finite(xv)
    cols = [_KERNELS[s.kind][0](xv, s) for s in specs]
    return np.column_stack(cols) if cols else np.empty((xv.size, 0))
