"""Command-line harness: reproduction commands, CSV emission, reporting.

Subcommands
    table1     activation comparison grid, optionally checked against the
               bundled reference values
    gradcheck  finite-difference verification of analytic derivatives
    node       Lotka-Volterra NeuralODE experiment, per-epoch CSV
    mnist      MNIST classifier experiment, per-epoch CSV
    report     re-aggregate one or more result CSVs

Exit codes: 0 success, 1 check failure, 2 usage error, 3 I/O or data
error. Every command is a pure function of its flags, config file, and
input files; outputs carry no timestamps so identical invocations yield
byte-identical files.

Config files are flat text: one `key = value` per line, `#` comments,
keys matching the long flag names with underscores. Precedence is
command-line flag, then config file, then built-in default.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .actfn import (
    KINDS,
    ActivationSpec,
    activation_derivative,
    activation_value,
    comparison_table,
)
from .datasets import (
    IdxFormatError,
    SeededPrng,
    load_idx,
    normalize_images,
    shuffled_batches,
)
from .ndcore import (
    OptimizerState,
    init_mlp,
    mlp_backward,
    mlp_forward,
    mse_loss,
    sgd_momentum_step,
    softmax_cross_entropy,
    topk_accuracy,
)
from .node import (
    EpochRecord,
    LvParams,
    NodeTrainConfig,
    RunSummary,
    aggregate_runs,
    extrapolate,
    train_node,
)
from .table1 import REFERENCE_COLUMNS, REFERENCE_INPUTS, REFERENCE_VALUES, reference_specs

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3

CSV_HEADER = "experiment,activation,seed,epoch,train_loss,test_accuracy_top1,test_accuracy_top5"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}

DATA_DIR_ENV = "MOLUBENCH_DATA_DIR"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _fmt(x: float) -> str:
    """Reals in CSV/metadata carry 9 significant digits."""
    return f"{x:.8e}"


@dataclass
class CsvRow:
    experiment: str
    activation: str
    seed: int
    epoch: int
    train_loss: float
    test_accuracy_top1: float | None = None
    test_accuracy_top5: float | None = None

    def render(self) -> str:
        t1 = "" if self.test_accuracy_top1 is None else _fmt(self.test_accuracy_top1)
        t5 = "" if self.test_accuracy_top5 is None else _fmt(self.test_accuracy_top5)
        return (
            f"{self.experiment},{self.activation},{self.seed},{self.epoch},"
            f"{_fmt(self.train_loss)},{t1},{t5}"
        )


def write_csv(path: str | Path, rows: list[CsvRow]) -> None:
    rows = sorted(rows, key=lambda r: (r.experiment, r.activation, r.seed, r.epoch))
    text = CSV_HEADER + "\n" + "".join(r.render() + "\n" for r in rows)
    Path(path).write_text(text)


def read_csv(path: str | Path) -> list[CsvRow]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise DataError(f"{path}:1: bad or missing header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise DataError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
        try:
            rows.append(CsvRow(
                experiment=parts[0],
                activation=parts[1],
                seed=int(parts[2]),
                epoch=int(parts[3]),
                train_loss=float(parts[4]),
                test_accuracy_top1=float(parts[5]) if parts[5] else None,
                test_accuracy_top5=float(parts[6]) if parts[6] else None,
            ))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from exc
    return rows


def write_metadata(csv_path: str | Path, command: str, effective: dict) -> None:
    """Sidecar provenance file: the fully resolved config, sorted."""
    lines = [f"command={command}", f"version={__version__}"]
    for key in sorted(effective):
        lines.append(f"{key}={effective[key]}")
    Path(str(csv_path) + ".meta").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# config file and flag merging


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat key=value format; blank lines and # comments ignored."""
    raw = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        raw[key.strip()] = value.strip()
    return raw


def _parse_typed(key: str, value: str, kind: str):
    try:
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "ints":
            return tuple(int(v) for v in value.split(",") if v.strip())
        if kind == "floats":
            return tuple(float(v) for v in value.split(",") if v.strip())
        return value
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {value!r} ({exc})") from exc


def resolve_options(args: argparse.Namespace, schema: dict[str, tuple[str, object]]) -> dict:
    """Merge flag > config file > default, per the schema.

    schema maps option name to (type tag, default). Flags parsed by
    argparse with default None count as absent.
    """
    from_file: dict[str, str] = {}
    if getattr(args, "config", None):
        raw = parse_config_file(args.config)
        for key in raw:
            if key not in schema:
                raise UsageError(f"unknown config key {key!r}")
        from_file = raw
    resolved = {}
    for key, (kind, default) in schema.items():
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            resolved[key] = flag_val
        elif key in from_file:
            resolved[key] = _parse_typed(key, from_file[key], kind)
        else:
            resolved[key] = default
    return resolved


def _activation_from(resolved: dict) -> ActivationSpec:
    kind = resolved["activation"]
    if kind not in KINDS:
        raise UsageError(f"unknown activation {kind!r}; expected one of {', '.join(KINDS)}")
    try:
        return ActivationSpec(
            kind,
            alpha=resolved.get("alpha"),
            beta=resolved.get("beta", 2.0),
            leaky_slope=resolved.get("leaky_slope", 0.01),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# table1


TABLE1_SCHEMA = {
    "alpha": ("float", 2.0),
    "beta": ("float", 2.0),
    "inputs": ("floats", tuple(float(v) for v in REFERENCE_INPUTS)),
}


def render_table(inputs, specs, values, labels) -> str:
    head = "input".rjust(8) + "".join(lbl.rjust(18) for lbl in labels)
    lines = [head]
    for i, x in enumerate(inputs):
        row = f"{x:8g}" + "".join(f"{values[i, j]:18.8e}" for j in range(len(specs)))
        lines.append(row)
    return "\n".join(lines) + "\n"


def cmd_table1(args) -> int:
    resolved = resolve_options(args, TABLE1_SCHEMA)
    alpha, beta = resolved["alpha"], resolved["beta"]
    if alpha <= 0 or beta <= 0:
        raise UsageError(f"alpha and beta must be positive, got {alpha}, {beta}")
    if args.check and getattr(args, "inputs", None) is not None:
        raise UsageError("--check always uses the built-in input grid; drop --inputs")
    inputs = np.asarray(resolved["inputs"], dtype=np.float64)
    if inputs.size == 0:
        raise UsageError("need at least one input")
    specs = reference_specs(alpha, beta)
    values = comparison_table(inputs, specs)
    labels = ["GeLU", "Swish", "Mish", "ELU(a=1)", f"MoLU(a={alpha:g},b={beta:g})"]
    text = render_table(inputs, specs, values, labels)
    if args.output:
        Path(args.output).write_text(text)
    print(text, end="")

    if not args.check:
        return EXIT_OK
    check_values = comparison_table(REFERENCE_INPUTS, specs)
    bad = 0
    for i in range(len(REFERENCE_INPUTS)):
        for j, col in enumerate(REFERENCE_COLUMNS):
            ref = REFERENCE_VALUES[i, j]
            got = check_values[i, j]
            if ref == 0.0:
                ok = got == 0.0
            else:
                ok = abs(got - ref) / abs(ref) <= 1e-6
            if not ok:
                bad += 1
                print(
                    f"MISMATCH input={REFERENCE_INPUTS[i]:g} column={col}: "
                    f"got {got!r}, reference {ref!r}",
                    file=sys.stderr,
                )
    if bad:
        print(f"check FAILED: {bad} of {REFERENCE_VALUES.size} cells off", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print(f"check OK: all {REFERENCE_VALUES.size} cells within 1e-6 relative")
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck


GRADCHECK_SCHEMA = {
    "activation": ("str", "all"),
    "samples": ("int", 1000),
    "tolerance": ("float", 1e-5),
    "abs_floor": ("float", 1e-8),
    "seed": ("int", 10),
}

# half-width of the interval around ReLU/LeakyReLU kinks excluded from
# finite differencing (the subgradient there is a convention, not a limit)
KINK_EXCLUSION = 1e-6


def _fd_mismatch(analytic: float, fd: float, rel_tol: float, abs_floor: float) -> float:
    """0 when within tolerance, else the offending relative error."""
    diff = abs(analytic - fd)
    if diff <= abs_floor:
        return 0.0
    rel = diff / max(abs(analytic), abs(fd))
    return 0.0 if rel <= rel_tol else rel


def scalar_gradcheck(spec: ActivationSpec, samples: int, seed: int,
                     include_kinks: bool, rel_tol: float, abs_floor: float):
    """Compare the analytic derivative with central differences.

    Returns (worst_rel_error_beyond_tolerance, worst_x, n_checked).
    """
    prng = SeededPrng(seed)
    xs = [prng.uniform(-10.0, 10.0) for _ in range(samples)]
    if spec.kind in ("relu", "leaky_relu"):
        if include_kinks:
            xs.append(0.0)
        else:
            xs = [x for x in xs if abs(x) > KINK_EXCLUSION]
    h = 1e-5
    worst = 0.0
    worst_x = None
    for x in xs:
        fd = (activation_value(spec, x + h) - activation_value(spec, x - h)) / (2 * h)
        err = _fd_mismatch(activation_derivative(spec, x), fd, rel_tol, abs_floor)
        if err > worst:
            worst = err
            worst_x = x
    return worst, worst_x, len(xs)


def mlp_gradcheck(spec: ActivationSpec, seed: int, rel_tol: float, abs_floor: float,
                  dims=(4, 8, 3), batch: int = 5):
    """Finite-difference check of every parameter gradient of an Mlp.

    Uses MSE against a random target; returns (worst_error, n_params).
    """
    model = init_mlp(dims, spec, seed)
    prng = SeededPrng(seed + 1)
    x = np.array([[prng.uniform(-1.5, 1.5) for _ in range(dims[0])] for _ in range(batch)])
    target = np.array([[prng.uniform(-1.0, 1.0) for _ in range(dims[-1])] for _ in range(batch)])

    def loss_only() -> float:
        y, _ = mlp_forward(model, x)
        return mse_loss(y, target)[0]

    y, caches = mlp_forward(model, x)
    loss, dy = mse_loss(y, target)
    _, grads = mlp_backward(model, caches, dy)

    h = 1e-5
    worst = 0.0
    n_params = 0
    for par, grad in zip(model.parameters(), grads):
        flat, gflat = par.ravel(), np.asarray(grad).ravel()
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + h
            lp = loss_only()
            flat[idx] = orig - h
            lm = loss_only()
            flat[idx] = orig
            fd = (lp - lm) / (2 * h)
            worst = max(worst, _fd_mismatch(gflat[idx], fd, rel_tol, abs_floor))
            n_params += 1
    return worst, n_params


def cmd_gradcheck(args) -> int:
    resolved = resolve_options(args, GRADCHECK_SCHEMA)
    name = resolved["activation"]
    if name != "all" and name not in KINDS:
        raise UsageError(f"unknown activation {name!r}; expected 'all' or one of {', '.join(KINDS)}")
    kinds = KINDS if name == "all" else (name,)
    rel_tol = resolved["tolerance"]
    abs_floor = resolved["abs_floor"]
    failed = False
    for kind in kinds:
        spec = ActivationSpec(kind)
        s_worst, s_x, n = scalar_gradcheck(
            spec, resolved["samples"], resolved["seed"], args.include_kinks,
            rel_tol, abs_floor,
        )
        m_worst, n_params = mlp_gradcheck(spec, resolved["seed"], rel_tol, abs_floor)
        ok = s_worst == 0.0 and m_worst == 0.0
        failed = failed or not ok
        detail = ""
        if s_worst > 0:
            detail = f" (scalar off by {s_worst:.2e} at x={s_x:.6g})"
        elif m_worst > 0:
            detail = f" (mlp off by {m_worst:.2e})"
        status = "ok" if ok else "FAIL"
        print(f"{kind:>11}: scalar {n} points, mlp {n_params} params: {status}{detail}")
    return EXIT_CHECK_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# node


NODE_SCHEMA = {
    "activation": ("str", "molu"),
    "alpha": ("float", None),
    "beta": ("float", 2.0),
    "leaky_slope": ("float", 0.01),
    "epochs": ("int", 4000),
    "learning_rate": ("float", 0.02),
    "seeds": ("ints", (10, 20, 30)),
    "noise_fraction": ("float", 0.05),
    "hidden_dims": ("ints", (16, 16)),
    "substeps": ("int", 10),
    "lv_coeffs": ("floats", (1.5, 1.0, 3.0, 1.0)),
    "lv_u0": ("floats", (1.0, 1.0)),
    "t_end": ("float", 6.1),
    "n_points": ("int", 61),
    "grad_clip_norm": ("float", 1.0),
    "extrapolate_to": ("float", 0.0),
}


def cmd_node(args) -> int:
    resolved = resolve_options(args, NODE_SCHEMA)
    spec = _activation_from(resolved)
    try:
        coeffs = resolved["lv_coeffs"]
        if len(coeffs) != 4:
            raise UsageError("lv_coeffs needs exactly four values a,b,c,d")
        u0 = resolved["lv_u0"]
        if len(u0) != 2:
            raise UsageError("lv_u0 needs exactly two values")
        p = LvParams(
            a=coeffs[0], b=coeffs[1], c=coeffs[2], d=coeffs[3],
            u0=(u0[0], u0[1]),
            t_span=(0.0, resolved["t_end"]),
            n_points=resolved["n_points"],
        )
        cfg = NodeTrainConfig(
            epochs=resolved["epochs"],
            learning_rate=resolved["learning_rate"],
            seeds=tuple(resolved["seeds"]),
            noise_fraction=resolved["noise_fraction"],
            hidden_dims=tuple(resolved["hidden_dims"]),
            rk4_substeps=resolved["substeps"],
            grad_clip_norm=resolved["grad_clip_norm"],
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc

    runs = train_node(spec, cfg, p)
    rows = [
        CsvRow("node", spec.kind, run.seed, rec.epoch, rec.train_loss)
        for run in runs
        for rec in run.records
    ]
    write_csv(args.out, rows)
    write_metadata(args.out, "node", {k: resolved[k] for k in sorted(NODE_SCHEMA)})

    summary = aggregate_runs(runs)
    print(f"wrote {len(rows)} rows to {args.out}")
    for run in runs:
        note = f" DIVERGED at epoch {run.diverged_epoch}" if run.diverged else ""
        first = run.records[0].train_loss if run.records else math.nan
        print(f"  seed {run.seed}: first loss {_fmt(first)}, min loss {_fmt(run.min_loss())}{note}")
    print(
        f"mean of per-seed min train loss: {_fmt(summary.mean_min_loss)} "
        f"({summary.mean_min_loss / 1e-2:.2f} x 1e-2), "
        f"std err {_fmt(summary.std_err)} ({summary.std_err / 1e-3:.2f} x 1e-3)"
    )
    if summary.n_seeds == 1:
        print("  (single seed: std err is 0 by convention)")
    if resolved["extrapolate_to"] > 0:
        for run in runs:
            if run.diverged or run.model is None:
                continue
            report = extrapolate(run.model, p, resolved["extrapolate_to"], cfg.rk4_substeps)
            print(f"  seed {run.seed}: extrapolation MSE to t={resolved['extrapolate_to']:g}: "
                  f"{_fmt(report.mse)}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# mnist


MNIST_SCHEMA = {
    "activation": ("str", "molu"),
    "alpha": ("float", None),
    "beta": ("float", 2.0),
    "leaky_slope": ("float", 0.01),
    "epochs": ("int", 50),
    "batch_size": ("int", 64),
    "learning_rate": ("float", 0.001),
    "momentum": ("float", 0.5),
    "seed": ("int", 10),
    "hidden_dim": ("int", 128),
}


def _resolve_data_dir(args) -> Path:
    data_dir = getattr(args, "data_dir", None) or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise DataError(
            f"no MNIST location: pass --data-dir or set {DATA_DIR_ENV}"
        )
    return Path(data_dir)


def load_mnist(data_dir: Path):
    """Load the four standard IDX files; distinct errors per failure mode."""
    arrays = {}
    for key, name in MNIST_FILES.items():
        path = data_dir / name
        if not path.exists():
            raise DataError(f"missing MNIST file: {path}")
        try:
            arrays[key] = load_idx(path)
        except IdxFormatError as exc:
            raise DataError(f"corrupt MNIST file {path}: {exc}") from exc
    train_x = normalize_images(arrays["train_images"])
    test_x = normalize_images(arrays["test_images"])
    train_y = arrays["train_labels"].data.astype(np.int64)
    test_y = arrays["test_labels"].data.astype(np.int64)
    if train_x.shape[0] != train_y.size or test_x.shape[0] != test_y.size:
        raise DataError("image/label counts do not match")
    return train_x, train_y, test_x, test_y


def train_mnist(spec: ActivationSpec, train_x, train_y, test_x, test_y,
                epochs: int, batch_size: int, learning_rate: float,
                momentum: float, seed: int, hidden_dim: int):
    """SGD-with-momentum training; yields one record per finished epoch.

    train_loss is the minibatch-average loss over the epoch; accuracies
    are measured on the test split after the epoch. The CSV epoch column
    is 1-based here ("after k epochs"), unlike the node experiment.
    """
    n_classes = int(train_y.max()) + 1
    model = init_mlp([train_x.shape[1], hidden_dim, n_classes], spec, seed)
    params = model.parameters()
    state = OptimizerState.sgd_momentum(learning_rate, momentum)
    prng = SeededPrng(seed)
    records = []
    for epoch in range(1, epochs + 1):
        loss_sum = 0.0
        for idx in shuffled_batches(train_x.shape[0], batch_size, prng):
            logits, caches = mlp_forward(model, train_x[idx])
            loss, dlogits = softmax_cross_entropy(logits, train_y[idx])
            _, grads = mlp_backward(model, caches, dlogits)
            sgd_momentum_step(params, grads, state)
            loss_sum += loss * idx.size
        test_logits, _ = mlp_forward(model, test_x)
        records.append((
            epoch,
            loss_sum / train_x.shape[0],
            topk_accuracy(test_logits, test_y, 1),
            topk_accuracy(test_logits, test_y, min(5, n_classes)),
        ))
    return records


def cmd_mnist(args) -> int:
    resolved = resolve_options(args, MNIST_SCHEMA)
    spec = _activation_from(resolved)
    data_dir = _resolve_data_dir(args)
    train_x, train_y, test_x, test_y = load_mnist(data_dir)
    records = train_mnist(
        spec, train_x, train_y, test_x, test_y,
        epochs=resolved["epochs"], batch_size=resolved["batch_size"],
        learning_rate=resolved["learning_rate"], momentum=resolved["momentum"],
        seed=resolved["seed"], hidden_dim=resolved["hidden_dim"],
    )
    rows = [
        CsvRow("mnist", spec.kind, resolved["seed"], epoch, loss, top1, top5)
        for epoch, loss, top1, top5 in records
    ]
    write_csv(args.out, rows)
    write_metadata(args.out, "mnist", {k: resolved[k] for k in sorted(MNIST_SCHEMA)})
    print(f"wrote {len(rows)} rows to {args.out}")
    for epoch, loss, top1, top5 in records:
        print(f"  epoch {epoch:3d}: train loss {_fmt(loss)}, "
              f"test top-1 {top1 * 100:.2f}%, top-5 {top5 * 100:.2f}%")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report(args) -> int:
    rows: list[CsvRow] = []
    for path in args.csvs:
        if not Path(path).exists():
            raise DataError(f"no such file: {path}")
        rows.extend(read_csv(path))
    if not rows:
        raise DataError("no rows found in the given CSVs")
    by_exp: dict[str, dict[str, dict[int, list[EpochRecord]]]] = {}
    acc_final: dict[tuple[str, str, int], tuple[int, float | None, float | None]] = {}
    for row in rows:
        by_exp.setdefault(row.experiment, {}).setdefault(row.activation, {}) \
              .setdefault(row.seed, []).append(EpochRecord(row.epoch, row.train_loss))
        key = (row.experiment, row.activation, row.seed)
        if key not in acc_final or row.epoch >= acc_final[key][0]:
            acc_final[key] = (row.epoch, row.test_accuracy_top1, row.test_accuracy_top5)
    for experiment in sorted(by_exp):
        print(f"experiment: {experiment}")
        print(f"  {'activation':>11} {'seeds':>5} {'mean min loss':>14} "
              f"{'x1e-2':>8} {'std err':>12} {'x1e-3':>8} {'final top1':>11} {'final top5':>11}")
        for activation in sorted(by_exp[experiment]):
            per_seed = by_exp[experiment][activation]
            runs = [sorted(recs, key=lambda r: r.epoch) for _, recs in sorted(per_seed.items())]
            summary: RunSummary = aggregate_runs(runs)
            top1s = [acc_final[(experiment, activation, s)][1] for s in per_seed]
            top5s = [acc_final[(experiment, activation, s)][2] for s in per_seed]
            t1 = (f"{100 * sum(top1s) / len(top1s):10.2f}%"
                  if all(v is not None for v in top1s) else "          -")
            t5 = (f"{100 * sum(top5s) / len(top5s):10.2f}%"
                  if all(v is not None for v in top5s) else "          -")
            print(f"  {activation:>11} {summary.n_seeds:>5} {summary.mean_min_loss:>14.6e} "
                  f"{summary.mean_min_loss / 1e-2:>8.2f} {summary.std_err:>12.6e} "
                  f"{summary.std_err / 1e-3:>8.2f} {t1} {t5}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def _add_config_flag(sub):
    sub.add_argument("--config", help="flat key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="molubench",
        description="MoLU activation workbench: reference checks and benchmark reproductions",
    )
    parser.add_argument("--version", action="version", version=f"molubench {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    t1 = subs.add_parser("table1", help="activation comparison grid with reference check")
    t1.add_argument("--alpha", type=float, default=None, help="MoLU alpha (default 2)")
    t1.add_argument("--beta", type=float, default=None, help="MoLU beta (default 2)")
    t1.add_argument("--inputs", type=lambda s: tuple(float(v) for v in s.split(",")),
                    default=None, help="comma-separated inputs (default -7..8)")
    t1.add_argument("--check", action="store_true",
                    help="verify against the bundled reference values")
    t1.add_argument("--output", default=None, help="also write the table to this file")
    _add_config_flag(t1)
    t1.set_defaults(handler=cmd_table1)

    gc = subs.add_parser("gradcheck", help="finite-difference derivative verification")
    gc.add_argument("--activation", default=None, help="a kind name or 'all'")
    gc.add_argument("--samples", type=int, default=None, help="sample count (default 1000)")
    gc.add_argument("--tolerance", type=float, default=None, help="relative tolerance (default 1e-5)")
    gc.add_argument("--abs-floor", dest="abs_floor", type=float, default=None,
                    help="absolute tolerance floor (default 1e-8)")
    gc.add_argument("--seed", type=int, default=None, help="sampling seed (default 10)")
    gc.add_argument("--include-kinks", action="store_true",
                    help="disable the ReLU/LeakyReLU kink exclusion and probe x=0 "
                         "(expected to report a failure there)")
    _add_config_flag(gc)
    gc.set_defaults(handler=cmd_gradcheck)

    nd = subs.add_parser("node", help="Lotka-Volterra NeuralODE experiment")
    nd.add_argument("--activation", default=None, help="activation kind (default molu)")
    nd.add_argument("--alpha", type=float, default=None)
    nd.add_argument("--beta", type=float, default=None)
    nd.add_argument("--leaky-slope", dest="leaky_slope", type=float, default=None)
    nd.add_argument("--epochs", type=int, default=None)
    nd.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    nd.add_argument("--seeds", type=lambda s: tuple(int(v) for v in s.split(",")), default=None)
    nd.add_argument("--noise-fraction", dest="noise_fraction", type=float, default=None)
    nd.add_argument("--hidden-dims", dest="hidden_dims",
                    type=lambda s: tuple(int(v) for v in s.split(",")), default=None)
    nd.add_argument("--substeps", type=int, default=None)
    nd.add_argument("--lv-coeffs", dest="lv_coeffs",
                    type=lambda s: tuple(float(v) for v in s.split(",")), default=None,
                    help="a,b,c,d (default 1.5,1,3,1)")
    nd.add_argument("--lv-u0", dest="lv_u0",
                    type=lambda s: tuple(float(v) for v in s.split(",")), default=None)
    nd.add_argument("--t-end", dest="t_end", type=float, default=None)
    nd.add_argument("--n-points", dest="n_points", type=int, default=None)
    nd.add_argument("--grad-clip-norm", dest="grad_clip_norm", type=float, default=None,
                    help="global L2 gradient clip for training (0 disables)")
    nd.add_argument("--extrapolate-to", dest="extrapolate_to", type=float, default=None,
                    help="also report extrapolation MSE out to this time")
    nd.add_argument("--out", default="node.csv", help="output CSV path")
    _add_config_flag(nd)
    nd.set_defaults(handler=cmd_node)

    mn = subs.add_parser("mnist", help="MNIST classifier experiment")
    mn.add_argument("--activation", default=None, help="activation kind (default molu)")
    mn.add_argument("--alpha", type=float, default=None)
    mn.add_argument("--beta", type=float, default=None)
    mn.add_argument("--leaky-slope", dest="leaky_slope", type=float, default=None)
    mn.add_argument("--epochs", type=int, default=None)
    mn.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    mn.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    mn.add_argument("--momentum", type=float, default=None)
    mn.add_argument("--seed", type=int, default=None)
    mn.add_argument("--hidden-dim", dest="hidden_dim", type=int, default=None)
    mn.add_argument("--data-dir", dest="data_dir", default=None,
                    help=f"directory with the four IDX files (or set {DATA_DIR_ENV})")
    mn.add_argument("--out", default="mnist.csv", help="output CSV path")
    _add_config_flag(mn)
    mn.set_defaults(handler=cmd_mnist)

    rp = subs.add_parser("report", help="re-aggregate result CSVs")
    rp.add_argument("csvs", nargs="+", help="one or more CSV files from node/mnist")
    rp.set_defaults(handler=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
