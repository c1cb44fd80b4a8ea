"""NeuralODE benchmark on the Lotka-Volterra system.

Ground-truth trajectories come from fixed-step classical RK4; training
data adds per-channel Gaussian noise. The model is an Mlp vector field
integrated with the same RK4 scheme, and gradients are obtained by
reverse-mode differentiation through the unrolled solver steps
(discretize-then-optimize), which keeps them exactly checkable against
finite differences.

train_node uses a compiled kernel (node_fast) by default; pass
use_fast=False to run the pure-numpy reference path. Independent seeds
share no state, so runs are reproducible run-by-run and could be
dispatched in parallel by a caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .actfn import ActivationSpec
from .datasets import SeededPrng
from .ndcore import Mlp, OptimizerState, adam_step, init_mlp, mlp_backward, mlp_forward

# substeps per sample interval used when integrating the exact system
# for ground truth / reference curves (well past visual convergence)
TRUTH_SUBSTEPS = 100


class IntegrationError(RuntimeError):
    """Integration produced a non-finite or out-of-bounds state."""

    def __init__(self, message: str, t: float | None = None):
        super().__init__(message)
        self.t = t


@dataclass(frozen=True)
class LvParams:
    """Lotka-Volterra coefficients, initial state, and sample grid.

    du1/dt = a*u1 - b*u1*u2 (prey), du2/dt = d*u1*u2 - c*u2 (predator).
    """

    a: float = 1.5
    b: float = 1.0
    c: float = 3.0
    d: float = 1.0
    u0: tuple[float, float] = (1.0, 1.0)
    t_span: tuple[float, float] = (0.0, 6.1)
    n_points: int = 61

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) <= 0:
            raise ValueError("all Lotka-Volterra coefficients must be positive")
        if self.t_span[1] <= self.t_span[0]:
            raise ValueError(f"need t1 > t0, got {self.t_span}")
        if self.n_points < 2:
            raise ValueError(f"need at least 2 sample points, got {self.n_points}")

    def times(self) -> np.ndarray:
        return np.linspace(self.t_span[0], self.t_span[1], self.n_points)


@dataclass
class Trajectory:
    """Sampled states on an increasing time grid; states is (n, dim)."""

    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64).ravel()
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim != 2 or self.states.shape[0] != self.times.size:
            raise ValueError(
                f"states shape {self.states.shape} does not match {self.times.size} times"
            )
        if self.times.size > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")


def lv_rhs(u, p: LvParams) -> np.ndarray:
    """Lotka-Volterra vector field at state u = (prey, predator)."""
    u1, u2 = float(u[0]), float(u[1])
    return np.array([p.a * u1 - p.b * u1 * u2, p.d * u1 * u2 - p.c * u2])


def rk4_step(f, t: float, u, h: float):
    """One classical 4th-order Runge-Kutta step of size h for u' = f(t, u)."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    k1 = f(t, u)
    k2 = f(t + 0.5 * h, u + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, u + 0.5 * h * k2)
    k4 = f(t + h, u + h * k3)
    out = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise IntegrationError(f"non-finite state after step at t={t}", t=t)
    return out


def integrate(f, u0, times, substeps: int, max_magnitude: float | None = None) -> Trajectory:
    """RK4 with `substeps` uniform sub-intervals between sample times.

    The first trajectory row is u0 itself. Raises IntegrationError when a
    state goes non-finite (or exceeds max_magnitude, if given), reporting
    the time of blow-up.
    """
    times = np.asarray(times, dtype=np.float64).ravel()
    if times.size > 1 and not np.all(np.diff(times) > 0):
        raise ValueError("times must be strictly increasing")
    if substeps < 1:
        raise ValueError(f"substeps must be >= 1, got {substeps}")
    u = np.asarray(u0, dtype=np.float64).copy()
    out = np.empty((times.size, u.size))
    out[0] = u
    for i in range(times.size - 1):
        h = (times[i + 1] - times[i]) / substeps
        t = times[i]
        for _ in range(substeps):
            u = rk4_step(f, t, u, h)
            t += h
            if max_magnitude is not None and np.max(np.abs(u)) > max_magnitude:
                raise IntegrationError(
                    f"state magnitude exceeded {max_magnitude} at t={t}", t=t
                )
        out[i + 1] = u
    return Trajectory(times, out)


@dataclass
class TrainingData:
    """Noisy observations plus the clean trajectory they came from."""

    clean: Trajectory
    noisy: Trajectory


def _add_channel_noise(clean: Trajectory, noise_fraction: float, prng: SeededPrng) -> Trajectory:
    """Per-channel Gaussian noise, sigma = fraction of that channel's mean.

    Draw order is row-major over the state array (time-major, channel
    within), so the draw count is a fixed function of the grid shape.
    """
    sigma = noise_fraction * clean.states.mean(axis=0)
    noisy = clean.states.copy()
    n, dim = noisy.shape
    for i in range(n):
        for c in range(dim):
            noisy[i, c] += prng.gaussian(0.0, sigma[c])
    return Trajectory(clean.times.copy(), noisy)


def generate_training_data(p: LvParams, noise_fraction: float, seed: int) -> TrainingData:
    """Integrate the exact system and add seeded per-channel noise."""
    if noise_fraction < 0:
        raise ValueError(f"noise_fraction must be >= 0, got {noise_fraction}")
    clean = integrate(lambda t, u: lv_rhs(u, p), p.u0, p.times(), TRUTH_SUBSTEPS)
    noisy = _add_channel_noise(clean, noise_fraction, SeededPrng(seed))
    return TrainingData(clean, noisy)


def _mlp_field(model: Mlp):
    def f(t, u):
        y, _ = mlp_forward(model, np.asarray(u, dtype=np.float64)[None, :])
        return y[0]

    return f


def node_forward(model, u0, times, substeps: int) -> Trajectory:
    """Integrate a model as a vector field.

    model may be an Mlp (mapping state dim to state dim) or any callable
    f(t, u) -> du/dt, e.g. a hard-coded field for equivalence checks.
    """
    fld = _mlp_field(model) if isinstance(model, Mlp) else model
    return integrate(fld, u0, times, substeps)


def node_loss_and_grad(model: Mlp, data: Trajectory, substeps: int,
                       include_initial_row: bool = True,
                       max_magnitude: float | None = None):
    """MSE of the integrated trajectory against data, with exact gradients.

    Integrates from the first data row, then backpropagates through
    every unrolled RK4 stage. Returns (loss, grads) with grads ordered
    like model.parameters(). Pure numpy reference implementation; the
    compiled path in node_fast must agree with it.
    """
    times = data.times
    n = times.size
    dim = data.states.shape[1]
    params = model.parameters()

    def feval(u):
        y, caches = mlp_forward(model, u[None, :])
        return y[0], caches

    # forward pass, caching every field evaluation
    u = data.states[0].copy()
    pred = np.empty_like(data.states)
    pred[0] = u
    steps = []  # (h, cache1..cache4) per substep, in time order
    for i in range(n - 1):
        h = (times[i + 1] - times[i]) / substeps
        for _ in range(substeps):
            k1, c1 = feval(u)
            k2, c2 = feval(u + 0.5 * h * k1)
            k3, c3 = feval(u + 0.5 * h * k2)
            k4, c4 = feval(u + h * k3)
            u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not np.all(np.isfinite(u)):
                raise IntegrationError(f"non-finite state near t={times[i]}", t=float(times[i]))
            if max_magnitude is not None and np.max(np.abs(u)) > max_magnitude:
                raise IntegrationError(
                    f"state magnitude exceeded {max_magnitude} near t={times[i]}",
                    t=float(times[i]),
                )
            steps.append((h, c1, c2, c3, c4))
        pred[i + 1] = u

    # loss over included rows, normalized by included entry count
    row0 = 0 if include_initial_row else 1
    diff = pred - data.states
    n_entries = (n - row0) * dim
    loss = float(np.sum(diff[row0:] * diff[row0:]) / n_entries)
    dpred = np.zeros_like(pred)
    dpred[row0:] = 2.0 * diff[row0:] / n_entries

    grads = [np.zeros_like(p) for p in params]

    def vjp(cache, v):
        dx, g = mlp_backward(model, cache, v[None, :])
        for acc, gi in zip(grads, g):
            acc += gi
        return dx[0]

    # reverse sweep through the unrolled solver
    a = np.zeros(dim)
    step_idx = len(steps)
    for i in range(n - 1, 0, -1):
        a = a + dpred[i]
        for _ in range(substeps):
            step_idx -= 1
            h, c1, c2, c3, c4 = steps[step_idx]
            bk4 = (h / 6.0) * a
            bx4 = vjp(c4, bk4)
            bk3 = (h / 3.0) * a + h * bx4
            bx3 = vjp(c3, bk3)
            bk2 = (h / 3.0) * a + (0.5 * h) * bx3
            bx2 = vjp(c2, bk2)
            bk1 = (h / 6.0) * a + (0.5 * h) * bx2
            bx1 = vjp(c1, bk1)
            a = a + bx1 + bx2 + bx3 + bx4

    for g in grads:
        if not np.all(np.isfinite(g)):
            raise IntegrationError("non-finite parameter gradient")
    return loss, grads


@dataclass(frozen=True)
class NodeTrainConfig:
    epochs: int = 4000
    learning_rate: float = 0.02
    seeds: tuple[int, ...] = (10, 20, 30)
    noise_fraction: float = 0.05
    hidden_dims: tuple[int, ...] = (16, 16)
    rk4_substeps: int = 10
    include_initial_row: bool = True
    divergence_threshold: float = 1e6
    grad_clip_norm: float = 1.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.noise_fraction < 0:
            raise ValueError(f"noise_fraction must be >= 0, got {self.noise_fraction}")
        if not self.seeds:
            raise ValueError("need at least one seed")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float


@dataclass
class SeedRun:
    """One seed's training curve; diverged runs keep their last finite loss."""

    seed: int
    records: list[EpochRecord]
    diverged: bool = False
    diverged_epoch: int | None = None
    model: Mlp | None = None

    def min_loss(self) -> float:
        finite = [r.train_loss for r in self.records if math.isfinite(r.train_loss)]
        return min(finite) if finite else math.inf


@dataclass
class RunSummary:
    """Cross-seed aggregate: per-seed minimum losses, mean, standard error.

    min_losses are sorted ascending (with seeds reordered to match) so
    the summary is exactly invariant under run permutation. std_err is
    the sample standard deviation over sqrt(n_seeds); it is 0 by
    convention for a single seed, which n_seeds flags.
    """

    seeds: tuple[int, ...]
    min_losses: tuple[float, ...]
    mean_min_loss: float
    std_err: float
    n_seeds: int
    diverged_seeds: tuple[int, ...] = ()


def field_init(dims, activation: ActivationSpec, seed: int) -> Mlp:
    """Initialize an Mlp for use as an integrated vector field.

    Same draws as init_mlp but with weights rescaled to uniform
    +-sqrt(1/fan_in) (the common framework default for dense layers).
    The engine-wide sqrt(6/fan_in) scale makes near-identity activations
    like MoLU expansive enough that the integrated trajectory blows up
    or training stalls on long horizons; at this scale all activations
    train reliably. Deterministic per seed.
    """
    model = init_mlp(dims, activation, seed)
    for layer in model.layers:
        layer.weights *= 1.0 / math.sqrt(6.0)
    return model


def _train_one_seed_slow(model: Mlp, data: Trajectory, cfg: NodeTrainConfig):
    """Reference training loop: numpy loss/grad plus ndcore Adam."""
    state = OptimizerState.adam(cfg.learning_rate)
    params = model.parameters()
    records: list[EpochRecord] = []
    for epoch in range(cfg.epochs):
        try:
            loss, grads = node_loss_and_grad(
                model, data, cfg.rk4_substeps,
                include_initial_row=cfg.include_initial_row,
                max_magnitude=cfg.divergence_threshold,
            )
        except IntegrationError:
            return records, epoch
        records.append(EpochRecord(epoch, loss))
        if cfg.grad_clip_norm > 0.0:
            gnorm = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if gnorm > cfg.grad_clip_norm:
                grads = [g * (cfg.grad_clip_norm / gnorm) for g in grads]
        adam_step(params, grads, state)
    return records, None


def train_node(activation: ActivationSpec, cfg: NodeTrainConfig, p: LvParams,
               use_fast: bool = True) -> list[SeedRun]:
    """Train one model per seed on freshly generated noisy data.

    Each seed is fully independent: data noise comes from
    SeededPrng(seed) and weights from field_init(..., seed). The
    recorded loss for an epoch is evaluated before that epoch's update,
    so records[0] is the untrained loss.
    """
    dims = [2, *cfg.hidden_dims, 2]
    runs = []
    for seed in cfg.seeds:
        data = generate_training_data(p, cfg.noise_fraction, seed)
        model = field_init(dims, activation, seed)
        if use_fast:
            from . import node_fast
            losses, diverged_epoch = node_fast.train_run(model, data.noisy, cfg, activation)
            records = [EpochRecord(e, float(l)) for e, l in enumerate(losses)]
        else:
            records, diverged_epoch = _train_one_seed_slow(model, data.noisy, cfg)
        runs.append(SeedRun(
            seed=seed,
            records=records,
            diverged=diverged_epoch is not None,
            diverged_epoch=diverged_epoch,
            model=model,
        ))
    return runs


@dataclass
class ExtrapolationReport:
    predicted: Trajectory
    truth: Trajectory
    mse: float


def extrapolate(model, p: LvParams, t_end_ext: float, substeps: int) -> ExtrapolationReport:
    """Integrate a trained model past the training span.

    The grid keeps the training spacing and extends to t_end_ext; the
    report carries the exact-system trajectory on the same grid and the
    prediction MSE against it (diagnostic only, no pass threshold).
    """
    t0, t1 = p.t_span
    if t_end_ext < t1:
        raise ValueError(f"extrapolation end {t_end_ext} is before training end {t1}")
    dt = (t1 - t0) / (p.n_points - 1)
    n_ext = int(round((t_end_ext - t0) / dt)) + 1
    times = t0 + dt * np.arange(n_ext)
    pred = node_forward(model, p.u0, times, substeps)
    truth = integrate(lambda t, u: lv_rhs(u, p), p.u0, times, TRUTH_SUBSTEPS)
    mse = float(np.mean((pred.states - truth.states) ** 2))
    return ExtrapolationReport(pred, truth, mse)


def aggregate_runs(runs) -> RunSummary:
    """Mean and standard error of the per-seed minimum train losses."""
    if not runs:
        raise ValueError("aggregate_runs needs at least one run")
    pairs = []
    diverged = []
    for i, run in enumerate(runs):
        if isinstance(run, SeedRun):
            seed, records = run.seed, run.records
            if run.diverged:
                diverged.append(seed)
        else:
            seed, records = i, list(run)
        finite = [r.train_loss for r in records if math.isfinite(r.train_loss)]
        pairs.append((min(finite) if finite else math.inf, seed))
    pairs.sort()
    mins = tuple(m for m, _ in pairs)
    seeds = tuple(s for _, s in pairs)
    n = len(mins)
    mean = sum(mins) / n
    if n > 1:
        var = sum((m - mean) ** 2 for m in mins) / (n - 1)
        std_err = math.sqrt(var) / math.sqrt(n)
    else:
        std_err = 0.0
    return RunSummary(seeds, mins, mean, std_err, n, tuple(sorted(diverged)))
