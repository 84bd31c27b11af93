"""Least-squares fits of log Y = a log n + b log log n + c."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

COLLINEARITY_THRESHOLD = 100.0


@dataclass
class FitResult:
    model: str
    a: float
    b: float
    c: float
    a_se: float
    b_se: float
    residual_norm: float
    n_min: int
    n_max: int
    points: int
    condition: float
    b_identifiable: bool

    def as_dict(self) -> dict:
        return asdict(self)


def design_condition(n) -> float:
    """Condition number of the column-normalised (log n, log log n, 1) design."""
    x = np.log(np.asarray(n, dtype=float))
    X = np.column_stack([x, np.log(x), np.ones_like(x)])
    return float(np.linalg.cond(X / np.linalg.norm(X, axis=0)))


def fit_exponents(n, y, weights=None, model: str = "loglog") -> FitResult:
    """Fit Y against n.

    ``model="loglog"`` fits (a, b, c); ``model="power"`` fixes b = 0. The
    collinearity diagnostic of the full design is always computed, and b is
    flagged unidentifiable when it exceeds ``COLLINEARITY_THRESHOLD``.
    ``weights`` multiply squared residuals (use inverse variances of log Y);
    the reported residual norm is in the weighted metric.
    """
    n = np.asarray(n, dtype=float)
    y = np.asarray(y, dtype=float)
    if n.shape != y.shape or n.ndim != 1:
        raise ValueError("n and y must be matching 1-d arrays")
    if n.size < 4:
        raise ValueError("a fit needs at least 4 grid points")
    if np.any(n < 3):
        raise ValueError("log log n needs n >= 3")
    if np.any(y <= 0):
        raise ValueError("Y must be positive")
    if model not in ("loglog", "power"):
        raise ValueError(f"unknown model {model!r}")
    x = np.log(n)
    cols = [x, np.log(x), np.ones_like(x)] if model == "loglog" else [x, np.ones_like(x)]
    X = np.column_stack(cols)
    ly = np.log(y)
    sw = np.ones_like(x) if weights is None else np.sqrt(np.asarray(weights, dtype=float))
    Xw, yw = X * sw[:, None], ly * sw
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    resid = yw - Xw @ coef
    dof = max(n.size - X.shape[1], 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.pinv(Xw.T @ Xw)
    se = np.sqrt(np.clip(np.diag(cov), 0, None))
    cond = design_condition(n)
    if model == "loglog":
        a, b, c = coef
        a_se, b_se = se[0], se[1]
    else:
        a, c = coef
        b, a_se, b_se = 0.0, se[0], 0.0
    return FitResult(
        model, float(a), float(b), float(c), float(a_se), float(b_se), float(np.linalg.norm(resid)),
        int(n.min()), int(n.max()), int(n.size), cond, bool(cond <= COLLINEARITY_THRESHOLD),
    )
