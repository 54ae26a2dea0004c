"""Nonlinear least squares for the decay models used on retrieval and OD data.

Models (tau > 0 via tau = exp(theta) internally):

    M1: A + B*exp(-(t/tau)^2)      Gaussian decay with offset
    M2: A + B*exp(-t/tau)          exponential decay with offset
    M3: OD0*exp(-(t/tau)^2)        offset-free Gaussian (optional offset C)

The solver is a Levenberg-Marquardt loop with Marquardt diagonal scaling and
analytic Jacobians.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

MAX_ITERATIONS = 200
STEP_TOL = 1e-10
GRAD_TOL = 1e-12
MAX_DAMPING = 1e12


class FitError(RuntimeError):
    pass


class FitModel(str, enum.Enum):
    M1 = "M1"
    M2 = "M2"
    M3 = "M3"

    def param_names(self, offset: bool = False) -> tuple[str, ...]:
        if self is FitModel.M3:
            return ("OD0", "tau", "C") if offset else ("OD0", "tau")
        return ("A", "B", "tau")


@dataclass(frozen=True)
class Dataset:
    t: np.ndarray
    y: np.ndarray
    sigma: np.ndarray | None = None
    strict: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "y", y)
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            object.__setattr__(self, "sigma", sigma)
            if sigma.shape != t.shape or np.any(sigma < 0):
                raise ValueError("sigma must match t in shape and be non-negative")
        if t.ndim != 1 or t.shape != y.shape:
            raise ValueError("t and y must be one-dimensional and of equal length")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
            raise ValueError("t and y must be finite")
        if self.strict:
            if np.any(t < 0):
                raise ValueError("times must be non-negative")
            if np.any(np.diff(t) <= 0):
                raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def weighted_ok(self) -> bool:
        return self.sigma is not None and bool(np.all(self.sigma > 0))

    @classmethod
    def from_csv(cls, path: str | Path) -> "Dataset":
        """Read ``t_us,y[,sigma]``; times are converted to seconds."""
        data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
        names = data.dtype.names
        if names is None or "t_us" not in names or "y" not in names:
            raise ValueError(f"{path}: expected header t_us,y[,sigma]")
        sigma = data["sigma"] if "sigma" in names else None
        return cls(data["t_us"] * 1e-6, data["y"], sigma)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("t_us,y,sigma\n" if self.sigma is not None else "t_us,y\n")
            for i in range(len(self)):
                row = f"{self.t[i] * 1e6:.9g},{self.y[i]:.9g}"
                if self.sigma is not None:
                    row += f",{self.sigma[i]:.9g}"
                fh.write(row + "\n")


def to_internal(model: FitModel, params) -> np.ndarray:
    """Public parameters (tau as a time) to the solver's (tau -> log tau)."""
    p = np.array(params, dtype=float)
    p[1 if model is FitModel.M3 else 2] = math.log(p[1 if model is FitModel.M3 else 2])
    return p


def to_public(model: FitModel, p) -> np.ndarray:
    q = np.array(p, dtype=float)
    i = 1 if model is FitModel.M3 else 2
    q[i] = math.exp(q[i])
    return q


def model_value(model: FitModel, t, p) -> np.ndarray:
    """Model curve at ``t`` for internal parameters ``p``."""
    t = np.asarray(t, dtype=float)
    if model is FitModel.M3:
        tau = math.exp(p[1])
        out = p[0] * np.exp(-((t / tau) ** 2))
        return out + p[2] if len(p) == 3 else out
    tau = math.exp(p[2])
    if model is FitModel.M1:
        return p[0] + p[1] * np.exp(-((t / tau) ** 2))
    return p[0] + p[1] * np.exp(-t / tau)


def model_jacobian(model: FitModel, t, p) -> np.ndarray:
    """d model / d internal parameters, shape (len(t), n_params)."""
    t = np.asarray(t, dtype=float)
    if model is FitModel.M3:
        tau = math.exp(p[1])
        u = (t / tau) ** 2
        e = np.exp(-u)
        # d/dtheta exp(-(t e^-theta)^2) = 2u exp(-u)
        cols = [e, p[0] * 2.0 * u * e]
        if len(p) == 3:
            cols.append(np.ones_like(t))
        return np.column_stack(cols)
    tau = math.exp(p[2])
    if model is FitModel.M1:
        u = (t / tau) ** 2
        e = np.exp(-u)
        return np.column_stack([np.ones_like(t), e, p[1] * 2.0 * u * e])
    u = t / tau
    e = np.exp(-u)
    return np.column_stack([np.ones_like(t), e, p[1] * u * e])


def _weights(dataset: Dataset, weighted: bool) -> np.ndarray:
    if weighted and dataset.weighted_ok:
        return 1.0 / dataset.sigma
    return np.ones_like(dataset.t)


def residuals(dataset: Dataset, model: FitModel | str, params, weighted: bool = False) -> np.ndarray:
    """y - model(t; params), divided by sigma when ``weighted`` and all sigmas are positive.

    ``params`` are public (tau as a time).
    """
    model = FitModel(model)
    p = to_internal(model, params)
    return (dataset.y - model_value(model, dataset.t, p)) * _weights(dataset, weighted)


@dataclass(frozen=True)
class FitResult:
    model: FitModel
    params: dict[str, float]
    std_errors: dict[str, float]
    residual_norm: float
    n_iterations: int
    converged: bool
    gradient_norm: float = 0.0

    @property
    def tau(self) -> float:
        return self.params["tau"]

    def to_dict(self) -> dict:
        return {
            "model": self.model.value,
            "params": dict(self.params),
            "std_errors": dict(self.std_errors),
            "residual_norm": self.residual_norm,
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"model = {self.model.value}"]
        for name, value in self.params.items():
            lines.append(f"{name} = {value:.17g}")
            lines.append(f"{name}_std_error = {self.std_errors[name]:.17g}")
        lines += [
            f"residual_norm = {self.residual_norm:.17g}",
            f"n_iterations = {self.n_iterations}",
            f"converged = {str(self.converged).lower()}",
        ]
        return "\n".join(lines) + "\n"


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    jacobian: np.ndarray
    n_iterations: int
    converged: bool
    gradient_norm: float
    costs: list[float] = field(default_factory=list)


def levenberg_marquardt(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], np.ndarray],
    x0,
    max_iterations: int = MAX_ITERATIONS,
    step_tol: float = STEP_TOL,
    grad_tol: float = GRAD_TOL,
) -> LMResult:
    """Minimize 0.5*|r(x)|^2.

    ``jacobian_fn`` returns dr/dx. Converges when the relative step falls below
    ``step_tol`` or the gradient max-norm below ``grad_tol``. ``costs`` records the
    objective after every accepted step (it never increases).
    """
    x = np.array(x0, dtype=float)
    r = residual_fn(x)
    cost = 0.5 * float(r @ r)
    costs = [cost]
    lam = 1e-3
    jac = jacobian_fn(x)
    for it in range(max_iterations + 1):
        grad = jac.T @ r
        gnorm = float(np.max(np.abs(grad))) if grad.size else 0.0
        if gnorm < grad_tol:
            return LMResult(x, cost, jac, it, True, gnorm, costs)
        if it == max_iterations:
            break
        jtj = jac.T @ jac
        diag = np.maximum(np.diag(jtj), 1e-12 * max(float(np.max(np.diag(jtj))), 1e-300))
        while True:
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                small = np.linalg.norm(step) <= step_tol * (np.linalg.norm(x) + step_tol)
                x_new = x + step
                r_new = residual_fn(x_new)
                cost_new = 0.5 * float(r_new @ r_new)
                if np.isfinite(cost_new) and cost_new <= cost:
                    x, r, cost = x_new, r_new, cost_new
                    costs.append(cost)
                    jac = jacobian_fn(x)
                    lam = max(lam / 10.0, 1e-12)
                    if small:
                        grad = jac.T @ r
                        gnorm = float(np.max(np.abs(grad)))
                        return LMResult(x, cost, jac, it + 1, True, gnorm, costs)
                    break
                if small:
                    return LMResult(x, cost, jac, it + 1, True, gnorm, costs)
            lam *= 10.0
            if lam > MAX_DAMPING:
                raise FitError("damping exceeded 1e12: normal equations are singular")
    return LMResult(x, cost, jac, max_iterations, False, gnorm, costs)


def default_initial_guess(dataset: Dataset, model: FitModel, offset: bool = False) -> np.ndarray:
    """Deterministic public-parameter guess from the data alone."""
    t, y = dataset.t, dataset.y
    span = float(t[-1] - t[0]) if len(t) > 1 else 1.0
    fallback_tau = span / 2.0 if span > 0 else 1.0
    if model is FitModel.M3:
        od0 = float(np.max(y))
        below = np.nonzero(y < od0 / math.e)[0]
        tau = float(t[below[0]]) if below.size and t[below[0]] > 0 else fallback_tau
        return np.array([od0, tau, 0.0] if offset else [od0, tau])
    a = float(np.min(y))
    b = float(np.max(y)) - a
    below = np.nonzero(y - a < b / math.e)[0]
    tau = float(t[below[0]]) if below.size and t[below[0]] > 0 else fallback_tau
    return np.array([a, b, tau])


def _std_errors(jac: np.ndarray, cost: float, n_points: int) -> np.ndarray:
    """Parameter standard errors from the scaled covariance s^2 (J^T J)^-1.

    Directions the data cannot constrain get an infinite standard error.
    """
    n_params = jac.shape[1]
    dof = max(n_points - n_params, 1)
    s2 = 2.0 * cost / dof
    _, sv, vt = np.linalg.svd(jac, full_matrices=False)
    cutoff = sv[0] * 1e-10 if sv.size and sv[0] > 0 else 0.0
    var = np.zeros(n_params)
    for s, row in zip(sv, vt):
        if s > cutoff:
            var += row**2 / s**2
        else:
            var += np.where(np.abs(row) > 1e-8, np.inf, 0.0)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(var * s2) if s2 > 0 else np.where(np.isinf(var), np.inf, 0.0)
    return np.where(np.isnan(out), np.inf, out)


def fit(
    dataset: Dataset,
    model: FitModel | str,
    initial_guess=None,
    *,
    weighted: bool = False,
    offset: bool = False,
) -> FitResult:
    """Least-squares fit of ``model`` to ``dataset``.

    ``initial_guess`` is given in public parameters. ``weighted`` uses 1/sigma^2
    weights when every sigma is positive. ``offset`` adds a constant to M3.
    """
    model = FitModel(model)
    names = model.param_names(offset)
    if len(dataset) < len(names) + 1:
        raise ValueError(f"{model.value} needs at least {len(names) + 1} points, got {len(dataset)}")
    p0 = default_initial_guess(dataset, model, offset) if initial_guess is None else np.asarray(initial_guess, float)
    if len(p0) != len(names):
        raise ValueError(f"initial guess must have {len(names)} entries")
    w = _weights(dataset, weighted)
    t, y = dataset.t, dataset.y

    result = levenberg_marquardt(
        lambda p: (model_value(model, t, p) - y) * w,
        lambda p: model_jacobian(model, t, p) * w[:, None],
        to_internal(model, p0),
    )
    public = to_public(model, result.x)
    errs = _std_errors(result.jacobian, result.cost, len(dataset))
    tau_index = 1 if model is FitModel.M3 else 2
    errs[tau_index] *= public[tau_index]
    return FitResult(
        model=model,
        params={n: float(v) for n, v in zip(names, public)},
        std_errors={n: float(e) for n, e in zip(names, errs)},
        residual_norm=math.sqrt(2.0 * result.cost),
        n_iterations=result.n_iterations,
        converged=result.converged,
        gradient_norm=result.gradient_norm,
    )
