"""MoLU activation workbench.

Activation kernels with analytic derivatives, a small dense-network
engine with hand-written backprop, a Lotka-Volterra NeuralODE benchmark,
an MNIST classifier benchmark, and a CLI that reproduces the bundled
reference numbers. See README.md for usage.
"""

from .actfn import (
    KINDS,
    ActivationSpec,
    activation_derivative,
    activation_value,
    comparison_table,
    molu,
    molu_prime,
)
from .datasets import (
    IdxTensor,
    SeededPrng,
    load_idx,
    normalize_images,
    parse_idx,
    serialize_idx,
    shuffled_batches,
)
from .ndcore import (
    DenseLayer,
    Matrix,
    Mlp,
    OptimizerState,
    adam_step,
    dense_backward,
    dense_forward,
    init_mlp,
    matmul,
    mlp_backward,
    mlp_forward,
    mse_loss,
    sgd_momentum_step,
    softmax_cross_entropy,
    topk_accuracy,
)
from .node import (
    EpochRecord,
    IntegrationError,
    LvParams,
    NodeTrainConfig,
    RunSummary,
    SeedRun,
    Trajectory,
    TrainingData,
    aggregate_runs,
    extrapolate,
    field_init,
    generate_training_data,
    integrate,
    lv_rhs,
    node_forward,
    node_loss_and_grad,
    rk4_step,
    train_node,
)

__version__ = "0.1.0"
