"""Golden reference grid for the activation comparison check.

REFERENCE_VALUES holds the known-good outputs (9 significant digits) of
five activations on the integer grid -7..8: GeLU (tanh form), SiLU,
Mish, ELU with alpha 1, and MoLU with alpha 2, beta 2. The `table1` CLI
command regenerates this grid and, with --check, verifies every cell to
1e-6 relative.
"""

from __future__ import annotations

import numpy as np

from .actfn import ActivationSpec

REFERENCE_INPUTS = np.arange(-7.0, 9.0)

REFERENCE_COLUMNS = ("gelu", "silu", "mish", "elu", "molu")


def reference_specs(molu_alpha: float = 2.0, molu_beta: float = 2.0) -> tuple[ActivationSpec, ...]:
    """Column specs for the comparison grid; MoLU parameters are adjustable."""
    return (
        ActivationSpec("gelu"),
        ActivationSpec("silu"),
        ActivationSpec("mish"),
        ActivationSpec("elu", alpha=1.0),
        ActivationSpec("molu", alpha=molu_alpha, beta=molu_beta),
    )


# Rows follow REFERENCE_INPUTS, columns REFERENCE_COLUMNS.
REFERENCE_VALUES = np.array([
    [-2.33146835e-15, -6.37735836e-03, -6.38026341e-03, -9.99088118e-01, -1.16414021e-05],
    [-8.43964898e-11, -1.48357389e-02, -1.48540805e-02, -9.97521248e-01, -7.37305482e-05],
    [-2.29179620e-07, -3.34642546e-02, -3.35762377e-02, -9.93262053e-01, -4.53999296e-04],
    [-7.02459482e-05, -7.19448398e-02, -7.25917408e-02, -9.81684361e-01, -2.68370062e-03],
    [-3.63739208e-03, -1.42277620e-01, -1.45647461e-01, -9.50212932e-01, -1.48723912e-02],
    [-4.54023059e-02, -2.38405844e-01, -2.52501483e-01, -8.64664717e-01, -7.32298040e-02],
    [-1.58808009e-01, -2.68941421e-01, -3.03401461e-01, -6.32120559e-01, -2.64248689e-01],
    [0.00000000e+00, 0.00000000e+00, 0.00000000e+00, 0.00000000e+00, 0.00000000e+00],
    [8.41191991e-01, 7.31058579e-01, 8.65098388e-01, 1.00000000e+00, 1.00000000e+00],
    [1.95459769e+00, 1.76159416e+00, 1.94395896e+00, 2.00000000e+00, 2.00000000e+00],
    [2.99636261e+00, 2.85772238e+00, 2.98653500e+00, 3.00000000e+00, 3.00000000e+00],
    [3.99992975e+00, 3.92805516e+00, 3.99741281e+00, 4.00000000e+00, 4.00000000e+00],
    [4.99999977e+00, 4.96653575e+00, 4.99955208e+00, 5.00000000e+00, 5.00000000e+00],
    [6.00000000e+00, 5.98516426e+00, 5.99992663e+00, 6.00000000e+00, 6.00000000e+00],
    [7.00000000e+00, 6.99362264e+00, 6.99998838e+00, 7.00000000e+00, 7.00000000e+00],
    [8.00000000e+00, 7.99731720e+00, 7.99999820e+00, 8.00000000e+00, 8.00000000e+00],
])
