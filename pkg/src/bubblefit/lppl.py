"""The log-periodic power law and its fitting primitives.

Model:  y(t) = a + b * (tc - t)^beta * (1 + c * cos(omega * ln(tc - t) + phi))

with tc the critical time. Instead of tc itself, parameters carry `t2c`,
the number of days from the window's last observation (the anchor) to tc,
so tc = anchor_date + t2c. Time differences are measured in calendar days
but only weekday observations contribute residuals.

Given the four nonlinear parameters (beta, omega, t2c, phi), the three
linear ones (a, b, c) have a closed-form least-squares solution through
the substitution d = b * c: regress y on {1, f, g} with f = (tc-t)^beta
and g = f * cos(omega * ln(tc-t) + phi).
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .crashes import BubbleWindow
from .errors import DegeneracyError, UsageError
from .series import Scale

TWO_PI = 2.0 * math.pi

_BASIS_NAMES = ("constant", "power", "oscillation")
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class LpplParams:
    a: float
    b: float
    c: float
    beta: float
    omega: float
    t2c: float
    phi: float
    anchor_date: dt.date
    scale: Scale = Scale.RAW

    def __post_init__(self):
        if not math.isfinite(self.a):
            raise UsageError("a must be finite")
        if self.t2c < 1.0:
            raise UsageError(f"t2c must be >= 1 day (got {self.t2c})")
        if self.beta <= 0.0:
            raise UsageError(f"beta must be positive (got {self.beta})")
        if self.omega < 0.0:
            raise UsageError(f"omega must be non-negative (got {self.omega})")
        if not (0.0 <= self.phi <= TWO_PI):
            raise UsageError(f"phi must be in [0, 2*pi] (got {self.phi})")

    def theta(self) -> tuple[float, float, float, float]:
        """The nonlinear parameter 4-vector (beta, omega, t2c, phi)."""
        return (self.beta, self.omega, self.t2c, self.phi)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "beta": self.beta,
            "omega": self.omega,
            "t2c": self.t2c,
            "phi": self.phi,
            "anchor_date": self.anchor_date.isoformat(),
            "scale": self.scale.value,
        }


@dataclass(frozen=True)
class HazardParams:
    """Parameters of the crash hazard rate b' * (tc-t)^(-alpha) * (1 + c' cos(...))."""

    kappa: float
    b_prime: float
    c_prime: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.kappa <= 1.0):
            raise UsageError("kappa must be in (0, 1]")
        if not (0.0 < self.alpha < 1.0):
            raise UsageError("alpha must be in (0, 1)")


@dataclass(frozen=True)
class FitDiagnostics:
    rmse: float
    is_precursor: bool
    monotone_increasing: bool
    violation_dates: tuple[dt.date, ...]
    validity_ratio: float | None
    raw_fit_valid: bool | None

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "is_precursor": self.is_precursor,
            "monotone_increasing": self.monotone_increasing,
            "violation_dates": [d.isoformat() for d in self.violation_dates],
            "validity_ratio": self.validity_ratio,
            "raw_fit_valid": self.raw_fit_valid,
        }


def _days_to_critical(params: LpplParams, t: dt.date) -> float:
    return params.t2c + (params.anchor_date - t).days


def lppl_value(params: LpplParams, t: dt.date) -> float:
    """Model value on day `t` (must precede the critical time)."""
    gap = _days_to_critical(params, t)
    if gap <= 0.0:
        raise ValueError(f"{t.isoformat()} is not before the critical time")
    return params.a + params.b * gap**params.beta * (
        1.0 + params.c * math.cos(params.omega * math.log(gap) + params.phi)
    )


def lppl_curve(params: LpplParams, dates) -> np.ndarray:
    """Vectorized `lppl_value` over a date sequence."""
    gaps = np.array([_days_to_critical(params, d) for d in dates], dtype=float)
    if len(gaps) and gaps.min() <= 0.0:
        bad = dates[int(np.argmin(gaps))]
        raise ValueError(f"{bad.isoformat()} is not before the critical time")
    return params.a + params.b * gaps**params.beta * (
        1.0 + params.c * np.cos(params.omega * np.log(gaps) + params.phi)
    )


def _basis(ages: np.ndarray, beta: float, omega: float, t2c: float,
           phi: float) -> tuple[np.ndarray, np.ndarray]:
    gaps = t2c + ages
    f = gaps**beta
    g = f * np.cos(omega * np.log(gaps) + phi)
    return f, g


def _solve_linear(y: np.ndarray, f: np.ndarray, g: np.ndarray):
    """Least-squares (a, b, d) for y ~ a + b*f + d*g, plus the SSE.

    Columns are normalized before forming the Gram matrix so wildly
    scaled bases (f can reach 1e10 for large beta) stay solvable.
    Returns the scaled Gram matrix as well, for conditioning diagnostics.
    """
    design = np.column_stack((np.ones_like(y), f, g))
    norms = np.sqrt(np.einsum("ij,ij->j", design, design))
    norms[norms == 0.0] = 1.0
    scaled = design / norms
    gram = scaled.T @ scaled
    coef = np.linalg.solve(gram, scaled.T @ y) / norms
    resid = y - design @ coef
    return coef, float(resid @ resid), gram


class LinearParams(NamedTuple):
    a: float
    b: float
    c: float
    c_degenerate: bool


def linear_solve(beta: float, omega: float, t2c: float, phi: float,
                 window: BubbleWindow) -> LinearParams:
    """Best (a, b, c) for fixed nonlinear parameters on a window.

    When |b| falls below 1e-12 of the data scale, c is unidentifiable;
    it is reported as 0 with the `c_degenerate` flag set. A rank-deficient
    basis (e.g. beta = 0 makes the power column constant) raises
    DegeneracyError naming the collinear pair.
    """
    if len(window) == 0:
        raise UsageError("empty window")
    ages = window.ages_days()
    if t2c + ages.min() < 1.0:
        raise UsageError("all observations must be at least 1 day before tc")
    y = window.values
    f, g = _basis(ages, beta, omega, t2c, phi)
    try:
        coef, _, gram = _solve_linear(y, f, g)
    except np.linalg.LinAlgError:
        coef, gram = None, _normalized_gram(y, f, g)
    if coef is None or np.linalg.cond(gram) > _COND_LIMIT:
        i, j = _most_collinear_pair(gram)
        raise DegeneracyError(
            f"basis columns {_BASIS_NAMES[i]!r} and {_BASIS_NAMES[j]!r} are collinear"
        )
    a, b, d = (float(x) for x in coef)
    b_floor = 1e-12 * max(float(np.max(np.abs(y))), 1e-12)
    if abs(b) < b_floor:
        return LinearParams(a, b, 0.0, True)
    return LinearParams(a, b, d / b, False)


def _normalized_gram(y, f, g) -> np.ndarray:
    design = np.column_stack((np.ones_like(y), f, g))
    norms = np.sqrt(np.einsum("ij,ij->j", design, design))
    norms[norms == 0.0] = 1.0
    scaled = design / norms
    return scaled.T @ scaled


def _most_collinear_pair(gram: np.ndarray) -> tuple[int, int]:
    pairs = [(0, 1), (0, 2), (1, 2)]
    return max(pairs, key=lambda p: abs(gram[p[0], p[1]]))


class _WindowSolver:
    """Preallocated least-squares state for repeated solves on one window.

    The normal equations are solved in column-normalized form by Cramer's
    rule (the scaled Gram is 3x3 with unit diagonal), and the SSE comes
    from an explicit residual pass so near-perfect fits keep full
    precision. Buffers are reused across calls: bind one solver per
    thread when evaluating in parallel.
    """

    __slots__ = ("y", "ages", "n", "sy", "lg", "f", "g", "r")

    def __init__(self, y: np.ndarray, ages: np.ndarray):
        self.y = np.ascontiguousarray(y, dtype=float)
        self.ages = np.ascontiguousarray(ages, dtype=float)
        n = self.y.size
        self.n = float(n)
        self.sy = float(self.y.sum())
        self.lg = np.empty(n)
        self.f = np.empty(n)
        self.g = np.empty(n)
        self.r = np.empty(n)

    def solve(self, beta: float, omega: float, t2c: float, phi: float):
        """(a, b, d, sse) minimizing the squared error, or None when the
        point is numerically inadmissible."""
        y, lg, f, g, r = self.y, self.lg, self.f, self.g, self.r
        np.add(self.ages, t2c, out=r)      # gaps, >= 1 given t2c >= 1
        np.log(r, out=lg)
        # ages descend toward the anchor, so lg[0] is the largest exponent
        if beta * lg[0] > 700.0:
            return None
        np.multiply(lg, beta, out=f)
        np.exp(f, out=f)                   # f = gaps**beta
        np.multiply(lg, omega, out=g)
        g += phi
        np.cos(g, out=g)
        g *= f                             # g = f * cos(omega*ln(gaps) + phi)

        sf = float(f.sum())
        sg = float(g.sum())
        sff = float(np.dot(f, f))
        sfg = float(np.dot(f, g))
        sgg = float(np.dot(g, g))
        syf = float(np.dot(y, f))
        syg = float(np.dot(y, g))
        if not math.isfinite(sff + sgg + sfg + syf + syg):
            return None
        if sff <= 0.0 or sgg <= 0.0:
            return None

        u, v, w = math.sqrt(self.n), math.sqrt(sff), math.sqrt(sgg)
        p = sf / (u * v)
        q = sg / (u * w)
        s = sfg / (v * w)
        det = 1.0 + 2.0 * p * q * s - p * p - q * q - s * s
        if not (det > 1e-13):
            return None
        b0, b1, b2 = self.sy / u, syf / v, syg / w
        z0 = ((1 - s * s) * b0 + (q * s - p) * b1 + (p * s - q) * b2) / det
        z1 = ((q * s - p) * b0 + (1 - q * q) * b1 + (p * q - s) * b2) / det
        z2 = ((p * s - q) * b0 + (p * q - s) * b1 + (1 - p * p) * b2) / det
        a, b, d = z0 / u, z1 / v, z2 / w

        f *= b
        g *= d
        np.subtract(y, f, out=r)
        r -= g
        r -= a
        sse = float(np.dot(r, r))
        if not math.isfinite(sse):
            return None
        return a, b, d, sse

    def rmse_at(self, beta: float, omega: float, t2c: float, phi: float) -> float:
        if not (t2c >= 1.0) or not (beta > 0.0) or not math.isfinite(phi):
            return math.inf
        if omega < 0.0:
            omega, phi = -omega, -phi
        solved = self.solve(beta, omega, t2c, phi)
        if solved is None:
            return math.inf
        return math.sqrt(solved[3] / self.n)


def nonlinear_rmse(y: np.ndarray, ages: np.ndarray, beta: float, omega: float,
                   t2c: float, phi: float) -> float:
    """RMSE of the best linear completion at one nonlinear point.

    This is the objective the simplex search minimizes and the quantity
    sensitivity scans record. Inadmissible points (t2c < 1, beta <= 0, a
    degenerate basis, numeric overflow) evaluate to +inf rather than
    raising, which keeps the unbounded search well defined. Negative
    omega is mapped through the exact identity
    cos(-omega * x + phi) = cos(omega * x - phi).
    """
    return _WindowSolver(np.asarray(y, dtype=float),
                         np.asarray(ages, dtype=float)).rmse_at(beta, omega, t2c, phi)


def window_objective(window: BubbleWindow):
    """Bind a window into the 4-vector objective used by the fitter and scans."""
    solver = _WindowSolver(window.values, window.ages_days())

    def objective(theta) -> float:
        beta, omega, t2c, phi = (float(x) for x in theta)
        return solver.rmse_at(beta, omega, t2c, phi)

    return objective


def solve_linear_fast(window: BubbleWindow, theta):
    """(a, b, d, sse) at one nonlinear point, on the objective's code path."""
    solver = _WindowSolver(window.values, window.ages_days())
    beta, omega, t2c, phi = (float(x) for x in theta)
    return solver.solve(beta, omega, t2c, phi)


def rmse(params: LpplParams, window: BubbleWindow) -> float:
    """Root mean squared error of a fully specified curve on a window."""
    if len(window) == 0:
        raise UsageError("empty window")
    resid = window.values - lppl_curve(params, window.dates)
    return math.sqrt(float(resid @ resid) / len(window))


def hazard_rate(h_params: HazardParams, omega: float, phi_prime: float,
                t_c: float, t: float) -> float:
    """Crash hazard per day at time `t` (days), for critical time `t_c`.

    The value can be negative when the oscillation amplitude exceeds 1;
    a negative hazard is exactly what the monotonicity diagnostic flags
    on the price side.
    """
    gap = t_c - t
    if gap <= 0.0:
        raise ValueError("t must precede the critical time")
    return h_params.b_prime * gap ** (-h_params.alpha) * (
        1.0 + h_params.c_prime * math.cos(omega * math.log(gap) + phi_prime)
    )


def hazard_log_price_gain(h_params: HazardParams, omega: float, phi_prime: float,
                          t_c: float, t0: float, t: float) -> float:
    """Closed form of kappa * integral of the hazard over [t0, t].

    Under the no-crash growth condition this equals log p(t) - log p(t0).
    The oscillatory antiderivative is
    -(tc-t)^beta / (omega^2 + beta^2) * (omega sin(psi) + beta cos(psi))
    with beta = 1 - alpha and psi = omega ln(tc-t) + phi'.
    """
    if t_c - t <= 0.0 or t_c - t0 <= 0.0:
        raise ValueError("integration limits must precede the critical time")
    beta = 1.0 - h_params.alpha

    def antiderivative(tp: float) -> float:
        gap = t_c - tp
        psi = omega * math.log(gap) + phi_prime
        power_part = -(gap**beta) / beta
        osc_part = -(gap**beta) / (omega**2 + beta**2) * (
            omega * math.sin(psi) + beta * math.cos(psi)
        )
        return power_part + h_params.c_prime * osc_part

    return h_params.kappa * h_params.b_prime * (antiderivative(t) - antiderivative(t0))


def monotonicity_check(params: LpplParams,
                       window: BubbleWindow) -> tuple[bool, list[dt.date]]:
    """Whether the fitted curve is non-decreasing across the window.

    Evaluates the curve on every window weekday plus the anchor date and
    reports each date where the fitted value falls below its predecessor.
    """
    dates = list(window.dates)
    if not dates or dates[-1] != params.anchor_date:
        dates.append(params.anchor_date)
    fitted = lppl_curve(params, dates)
    violations = [dates[i] for i in range(1, len(dates)) if fitted[i] < fitted[i - 1]]
    return (not violations, violations)


def raw_index_validity(window: BubbleWindow) -> tuple[float, bool]:
    """Ratio p(end)/p(start) and whether a raw-scale fit is admissible.

    A ratio above 2 means the rise over the bubble exceeds the starting
    price, which is impossible under the small-rise assumption unless
    the fundamental price is negative; such windows should be fitted in
    log scale.
    """
    if window.scale != Scale.RAW:
        raise UsageError("validity ratio is defined on raw-scale windows")
    ratio = float(window.values[-1] / window.values[0])
    return ratio, ratio <= 2.0


def write_curve_csv(params: LpplParams, window: BubbleWindow, path) -> None:
    """Export (date, observed, fitted) rows for plotting."""
    fitted = lppl_curve(params, window.dates)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "observed", "fitted"])
        for d, obs, fit in zip(window.dates, window.values, fitted):
            writer.writerow([d.isoformat(), repr(float(obs)), repr(float(fit))])
