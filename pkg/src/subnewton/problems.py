"""Finite-sum objective instances with analytic derivatives and curvature bounds.

Problems have the generalized-linear form F(x) = (1/n) * sum_i f(a_i'x; b_i)
for a scalar loss f, which gives closed-form gradients, Hessians, and per-row
Hessian norm bounds K_i = sup|f''| * ||a_i||^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

from .core import Array, ConfigurationError, HessianOperator, ensure_finite


def biweight_scalar(z: Array, b: Array) -> tuple[Array, Array, Array]:
    """Smooth bi-weight loss r^2/(1+r^2) of the residual r = z - b.

    Bounded, non-convex, with f''(r) = 2(1-3r^2)/(1+r^2)^3 in [-1/2, 2].
    """
    r = np.asarray(z, dtype=float) - np.asarray(b, dtype=float)
    t = 1.0 + r * r
    value = r * r / t
    first = 2.0 * r / (t * t)
    second = 2.0 * (1.0 - 3.0 * r * r) / (t * t * t)
    return value, first, second


def nls_logistic_scalar(z: Array, b: Array) -> tuple[Array, Array, Array]:
    """Least-squares loss (sigmoid(z) - b)^2 with the exact second derivative.

    second = 2*s'^2 + 2*(s-b)*s'' where s', s'' are the sigmoid derivatives;
    the sigmoid is evaluated overflow-safely.
    """
    s = expit(np.asarray(z, dtype=float))
    b = np.asarray(b, dtype=float)
    sp = s * (1.0 - s)
    spp = sp * (1.0 - 2.0 * s)
    diff = s - b
    value = diff * diff
    first = 2.0 * diff * sp
    second = 2.0 * sp * sp + 2.0 * diff * spp
    return value, first, second


@dataclass(frozen=True)
class ScalarLoss:
    """Scalar loss with derivative oracle and validated curvature bounds.

    ``curvature_bound`` is sup_z |f''(z; b)| over admissible targets, so
    K_i = curvature_bound * ||a_i||^2. ``third_bound`` upper-bounds |f'''|
    and yields the Hessian-Lipschitz estimate used by the cubic solver.
    Custom losses must supply valid bounds themselves; they are not checked.
    """

    name: str
    evaluate: Callable[[Array, Array], tuple[Array, Array, Array]]
    curvature_bound: float
    third_bound: float


# sup|f''| = 2 at r = 0 for the bi-weight; sup|f'''| = 4.66854 at r^2 = 1-2/sqrt(5).
BIWEIGHT = ScalarLoss("biweight", biweight_scalar, 2.0, 4.6686)
# For (sigmoid-b)^2 the exact sup|f''| is below 0.32, but 2||a||^2 is kept as
# the per-row bound; |f'''| <= 6*sup|s's''| + 2*sup|s'''| < 0.4.
NLS_LOGISTIC = ScalarLoss("nls_logistic", nls_logistic_scalar, 2.0, 0.4)

LOSSES = {loss.name: loss for loss in (BIWEIGHT, NLS_LOGISTIC)}


@dataclass(eq=False)
class FiniteSumProblem:
    """Rows, targets, and a scalar loss, with precomputed curvature bounds."""

    rows: Array
    targets: Array
    loss: ScalarLoss
    k_i: Array = field(init=False)
    k_max: float = field(init=False)
    k_hat: float = field(init=False)
    row_sq_norms: Array = field(init=False)

    def __post_init__(self) -> None:
        self.rows = np.ascontiguousarray(self.rows, dtype=float)
        self.targets = np.ascontiguousarray(self.targets, dtype=float)
        if self.rows.ndim != 2:
            raise ConfigurationError("rows must be an n x d matrix")
        if self.targets.shape != (self.rows.shape[0],):
            raise ConfigurationError(
                f"targets has shape {self.targets.shape}, expected ({self.rows.shape[0]},)")
        ensure_finite(self.rows, "problem rows")
        ensure_finite(self.targets, "problem targets")
        self.row_sq_norms = np.einsum("ij,ij->i", self.rows, self.rows)
        self.k_i = self.loss.curvature_bound * self.row_sq_norms
        self.k_max = float(np.max(self.k_i)) if self.k_i.size else 0.0
        self.k_hat = float(np.mean(self.k_i)) if self.k_i.size else 0.0

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]

    def predictions(self, x: Array) -> Array:
        return self.rows @ x

    def value_grad(self, x: Array) -> tuple[float, Array]:
        """Exact F and grad F; the scalar sum is compensated (math.fsum)."""
        values, first, _ = self.loss.evaluate(self.predictions(x), self.targets)
        f = math.fsum(values.tolist()) / self.n
        grad = self.rows.T @ (first / self.n)
        return f, grad

    def second_derivatives(self, x: Array) -> Array:
        _, _, second = self.loss.evaluate(self.predictions(x), self.targets)
        return second

    def exact_hessian_operator(self, x: Array) -> HessianOperator:
        """grad^2 F as a matrix-free operator; bound tightened to the value at x."""
        weights = self.second_derivatives(x) / self.n
        rows = self.rows
        bound_at_x = float(np.sum(np.abs(weights) * self.row_sq_norms))

        def apply(v: Array) -> Array:
            return rows.T @ (weights * (rows @ v))

        return HessianOperator(apply=apply, dim=self.d,
                               norm_bound=min(self.k_max, bound_at_x),
                               provenance="exact", accuracy=0.0,
                               sample_size=self.n)

    def dense_hessian(self, x: Array) -> Array:
        """Materialized grad^2 F(x). Desk scale only."""
        weights = self.second_derivatives(x) / self.n
        dense = (self.rows * weights[:, None]).T @ self.rows
        return 0.5 * (dense + dense.T)

    def hessian_lipschitz_bound(self) -> float:
        """Global (hence path) Lipschitz bound for grad^2 F from sup|f'''|."""
        row_cubes = self.row_sq_norms ** 1.5
        return self.loss.third_bound * float(np.mean(row_cubes))


def full_value_grad(problem: FiniteSumProblem, x: Array) -> tuple[float, Array]:
    return problem.value_grad(x)


def exact_hessian_operator(problem: FiniteSumProblem, x: Array) -> HessianOperator:
    return problem.exact_hessian_operator(x)


def dense_hessian(problem: FiniteSumProblem, x: Array) -> Array:
    return problem.dense_hessian(x)


class QuarticSaddle:
    """F(x, y) = x^4/4 - x^2/2 + y^2/2: strict saddle at the origin,
    minima at (+-1, 0) with F = -1/4."""

    d = 2

    def value_grad(self, x: Array) -> tuple[float, Array]:
        a, b = float(x[0]), float(x[1])
        value = a ** 4 / 4.0 - a ** 2 / 2.0 + b ** 2 / 2.0
        grad = np.array([a ** 3 - a, b])
        return value, grad

    def dense_hessian(self, x: Array) -> Array:
        return np.diag([3.0 * float(x[0]) ** 2 - 1.0, 1.0])

    def exact_hessian_operator(self, x: Array) -> HessianOperator:
        h = self.dense_hessian(x)
        bound = float(np.max(np.abs(np.diag(h))))
        return HessianOperator(apply=lambda v, _h=h: _h @ v, dim=2,
                               norm_bound=bound, provenance="exact",
                               accuracy=0.0)

    def hessian_lipschitz_bound(self, box_radius: float) -> float:
        # |d/dx (3x^2 - 1)| = 6|x| on the box |x| <= box_radius.
        return 6.0 * box_radius


def generate_synthetic(loss: ScalarLoss | str, n: int, d: int, rng_seed: int = 0,
                       skew: float = 1.0, k_max: float | None = None,
                       noise: float = 0.1) -> FiniteSumProblem:
    """Gaussian rows with optional per-row scaling to control the K_i spread.

    ``skew`` >= 1 stretches a tail of rows by up to that factor, widening the
    K_max / K_hat gap; ``k_max`` rescales all rows so the largest per-row
    bound lands exactly there. Targets come from a planted model plus noise
    (bi-weight) or Bernoulli draws through the link (classification).
    """
    if isinstance(loss, str):
        loss = LOSSES[loss]
    if n < 1 or d < 1:
        raise ConfigurationError(f"invalid problem size n={n}, d={d}")
    if skew < 1.0:
        raise ConfigurationError("skew must be >= 1")
    rng = np.random.default_rng(rng_seed)
    rows = rng.standard_normal((n, d)) / math.sqrt(d)
    if skew > 1.0:
        scales = skew ** (rng.random(n) ** 4)
        rows *= scales[:, None]
    if k_max is not None:
        current = loss.curvature_bound * float(np.max(np.einsum("ij,ij->i", rows, rows)))
        rows *= math.sqrt(k_max / current)
    planted = rng.standard_normal(d)
    z = rows @ planted
    if loss.name == "nls_logistic":
        targets = (rng.random(n) < expit(z)).astype(float)
    else:
        targets = z + noise * rng.standard_normal(n)
    return FiniteSumProblem(rows=rows, targets=targets, loss=loss)


class DatasetError(ValueError):
    """Malformed dataset file; the message names the offending line."""


def load_dataset(path: str | Path, fmt: str = "csv",
                 loss: ScalarLoss | str = BIWEIGHT,
                 d: int | None = None) -> FiniteSumProblem:
    """Read rows/targets from disk.

    csv: one sample per line, d feature columns then the target column;
    a header line is skipped when its first field is not numeric.
    svmlight: ``target idx:val idx:val ...`` with 1-based indices; the
    dimension is max index seen unless ``d`` is given.
    """
    if isinstance(loss, str):
        loss = LOSSES[loss]
    path = Path(path)
    if fmt == "csv":
        rows, targets = _read_csv(path)
    elif fmt == "svmlight":
        rows, targets = _read_svmlight(path, d)
    else:
        raise ConfigurationError(f"unknown dataset format {fmt!r}")
    return FiniteSumProblem(rows=rows, targets=targets, loss=loss)


def save_dataset(problem: FiniteSumProblem, path: str | Path,
                 fmt: str = "csv") -> None:
    path = Path(path)
    lines = []
    if fmt == "csv":
        for row, target in zip(problem.rows, problem.targets):
            lines.append(",".join(repr(float(v)) for v in row) + f",{float(target)!r}")
    elif fmt == "svmlight":
        for row, target in zip(problem.rows, problem.targets):
            feats = " ".join(f"{j + 1}:{float(v)!r}" for j, v in enumerate(row))
            lines.append(f"{float(target)!r} {feats}")
    else:
        raise ConfigurationError(f"unknown dataset format {fmt!r}")
    path.write_text("\n".join(lines) + "\n")


def _read_csv(path: Path) -> tuple[Array, Array]:
    rows: list[list[float]] = []
    targets: list[float] = []
    width = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split(",")
        if lineno == 1 and not _is_number(fields[0]):
            continue  # header
        try:
            values = [float(f) for f in fields]
        except ValueError as exc:
            raise DatasetError(f"{path}: line {lineno}: {exc}") from None
        if len(values) < 2:
            raise DatasetError(f"{path}: line {lineno}: need features plus target")
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise DatasetError(
                f"{path}: line {lineno}: expected {width} fields, got {len(values)}")
        rows.append(values[:-1])
        targets.append(values[-1])
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return np.asarray(rows), np.asarray(targets)


def _read_svmlight(path: Path, d: int | None) -> tuple[Array, Array]:
    parsed: list[tuple[float, dict[int, float]]] = []
    max_idx = 0
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split()
        try:
            target = float(fields[0])
            feats: dict[int, float] = {}
            for token in fields[1:]:
                idx_str, val_str = token.split(":")
                idx = int(idx_str)
                if idx < 1:
                    raise ValueError(f"index {idx} is not 1-based")
                feats[idx] = float(val_str)
                max_idx = max(max_idx, idx)
        except (ValueError, IndexError) as exc:
            raise DatasetError(f"{path}: line {lineno}: {exc}") from None
        parsed.append((target, feats))
    if not parsed:
        raise DatasetError(f"{path}: no data rows")
    dim = d if d is not None else max_idx
    if max_idx > dim:
        raise DatasetError(f"{path}: feature index {max_idx} exceeds d={dim}")
    rows = np.zeros((len(parsed), dim))
    targets = np.zeros(len(parsed))
    for i, (target, feats) in enumerate(parsed):
        targets[i] = target
        for idx, val in feats.items():
            rows[i, idx - 1] = val
    return rows, targets


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True
