"""Loss and utility functions with convex conjugates.

A loss function here is convex, nondecreasing, and normalized so that
l(0) = 1 < l(x) for x > 0; the canonical example is l(x) = exp(eta*x).
A utility function is convex, nondecreasing, and normalized through its
Fenchel conjugate, phi*(1) = sup_x (x - phi(x)) = 0; the canonical example
is phi(x) = exp(x - 1) with phi*(y) = y*log(y).

Built-in kinds carry exact conjugate formulas. Custom kinds are tabulated
piecewise-linear functions extended beyond the table with their boundary
slopes; their conjugates are exact maxima of affine functions (slope x_i,
intercept -f(x_i)), equal to +inf outside the slope range of the table.

The two structural checks at the bottom decide which side of the
time-consistency dichotomy a function falls on: log-subadditivity of a loss
(l(x+y) <= l(x) l(y)) and the multiplicative conjugate inequality for a
utility (y phi*(x) + x phi*(y) <= phi*(xy), or the reverse).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigParseError,
    InvalidLossError,
    InvalidUtilityError,
    NegativeArgumentError,
)

_CONVEXITY_TOL = 1e-9
_NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class ConjugateTable:
    """A convex conjugate stored as a max of affine functions.

    ``eval(y) = max_i (slopes[i] * y + intercepts[i])`` for y inside
    ``[y_lo, y_hi]`` (the slope range of the primal table) and +inf outside;
    outside that range the linearly-extended primal makes the sup infinite.
    """

    slopes: tuple
    intercepts: tuple
    y_lo: float
    y_hi: float

    def eval(self, y: float) -> float:
        if y < self.y_lo - 1e-12 or y > self.y_hi + 1e-12:
            return math.inf
        s = np.asarray(self.slopes)
        b = np.asarray(self.intercepts)
        return float(np.max(s * y + b))


def _validate_table(xs: Sequence[float], ys: Sequence[float], name: str) -> tuple[np.ndarray, np.ndarray]:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    err = InvalidLossError if name == "loss" else InvalidUtilityError
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise err("custom table needs matching xs/ys with at least two points")
    if np.any(np.diff(xs) <= 0):
        raise err("custom table xs must be strictly increasing")
    slopes = np.diff(ys) / np.diff(xs)
    if np.any(slopes < -_CONVEXITY_TOL):
        raise err("custom table must be nondecreasing")
    if np.any(np.diff(slopes) < -_CONVEXITY_TOL):
        raise err("custom table must be convex (secant slopes nondecreasing)")
    return xs, ys


def _table_conjugate_array(table: ConjugateTable, y: np.ndarray) -> np.ndarray:
    s = np.asarray(table.slopes)
    b = np.asarray(table.intercepts)
    vals = np.max(y[..., None] * s + b, axis=-1)
    outside = (y < table.y_lo - 1e-12) | (y > table.y_hi + 1e-12)
    return np.where(outside, math.inf, vals)


def _interp_extrapolate(x: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation, extended with the boundary slopes."""
    slopes = np.diff(ys) / np.diff(xs)
    out = np.interp(x, xs, ys)
    left = x < xs[0]
    right = x > xs[-1]
    if np.any(left):
        out = np.where(left, ys[0] + slopes[0] * (x - xs[0]), out)
    if np.any(right):
        out = np.where(right, ys[-1] + slopes[-1] * (x - xs[-1]), out)
    return out


@dataclass(frozen=True, eq=False)
class LossFn:
    """A convex nondecreasing loss with l(0) = 1 and l(x) > 1 for x > 0."""

    kind: str
    eta: float | None = None
    p: float | None = None
    xs: tuple | None = None
    ys: tuple | None = None

    def __post_init__(self):
        if self.kind == "exponential":
            if self.eta is None or self.eta <= 0:
                raise InvalidLossError("exponential loss needs eta > 0")
        elif self.kind == "power_plus":
            if self.p is None or self.p < 1:
                raise InvalidLossError("power_plus loss needs p >= 1")
        elif self.kind == "custom":
            xs, ys = _validate_table(self.xs, self.ys, "loss")
            object.__setattr__(self, "xs", tuple(float(v) for v in xs))
            object.__setattr__(self, "ys", tuple(float(v) for v in ys))
        else:
            raise InvalidLossError(f"unknown loss kind {self.kind!r}")
        self._validate_shape()

    # -- constructors ---------------------------------------------------

    @classmethod
    def exponential(cls, eta: float) -> "LossFn":
        return cls(kind="exponential", eta=float(eta))

    @classmethod
    def power_plus(cls, p: float) -> "LossFn":
        """l(x) = ((1 + x)_+)^p. Vanishes left of -1, which breaks
        log-subadditivity and with it acceptance consistency."""
        return cls(kind="power_plus", p=float(p))

    @classmethod
    def custom(cls, xs: Sequence[float], ys: Sequence[float]) -> "LossFn":
        return cls(kind="custom", xs=tuple(xs), ys=tuple(ys))

    # -- evaluation -----------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "exponential":
            with np.errstate(over="ignore"):
                return np.exp(self.eta * x)
        if self.kind == "power_plus":
            return np.maximum(1.0 + x, 0.0) ** self.p
        return _interp_extrapolate(x, np.asarray(self.xs), np.asarray(self.ys))

    def conjugate(self, y: float) -> float:
        """l*(y) = sup_x (x*y - l(x)) for y >= 0; +inf is a legal value."""
        if y < 0:
            raise NegativeArgumentError("conjugates are evaluated on y >= 0 only")
        if self.kind == "exponential":
            if y == 0.0:
                return 0.0
            return (y * math.log(y / self.eta) - y) / self.eta
        if self.kind == "power_plus":
            if self.p == 1.0:
                return -y if y <= 1.0 else math.inf
            return (self.p - 1.0) * (y / self.p) ** (self.p / (self.p - 1.0)) - y
        return self.conjugate_table().eval(y)

    def conjugate_array(self, y: np.ndarray) -> np.ndarray:
        """Vectorized l* over a nonnegative array; +inf entries allowed."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise NegativeArgumentError("conjugates are evaluated on y >= 0 only")
        if self.kind == "exponential":
            out = np.zeros_like(y)
            pos = y > 0
            yp = y[pos]
            out[pos] = (yp * np.log(yp / self.eta) - yp) / self.eta
            return out
        if self.kind == "power_plus":
            if self.p == 1.0:
                return np.where(y <= 1.0, -y, math.inf)
            return (self.p - 1.0) * (y / self.p) ** (self.p / (self.p - 1.0)) - y
        return _table_conjugate_array(self.conjugate_table(), y)

    def conjugate_table(self) -> ConjugateTable:
        xs = np.asarray(self.xs)
        ys = np.asarray(self.ys)
        slopes = np.diff(ys) / np.diff(xs)
        return ConjugateTable(
            slopes=tuple(float(v) for v in xs),
            intercepts=tuple(float(-v) for v in ys),
            y_lo=float(slopes[0]),
            y_hi=float(slopes[-1]),
        )

    # -- validation -----------------------------------------------------

    def _validate_shape(self) -> None:
        grid = np.linspace(-4.0, 4.0, 81)
        vals = self(grid)
        if abs(float(self(np.asarray(0.0))) - 1.0) > _NORMALIZATION_TOL:
            raise InvalidLossError("loss must satisfy l(0) = 1")
        pos = grid > 0
        if np.any(vals[pos] <= 1.0):
            raise InvalidLossError("loss must satisfy l(x) > 1 for x > 0")
        if np.any(np.diff(vals) < -_CONVEXITY_TOL):
            raise InvalidLossError("loss must be nondecreasing")
        secants = np.diff(vals) / np.diff(grid)
        if np.any(np.diff(secants) < -1e-7 * np.maximum(1.0, np.abs(secants[:-1]))):
            raise InvalidLossError("loss must be convex")

    def as_json(self) -> dict:
        if self.kind == "exponential":
            return {"kind": "exponential", "eta": self.eta}
        if self.kind == "power_plus":
            return {"kind": "power_plus", "p": self.p}
        return {"kind": "custom", "xs": list(self.xs), "ys": list(self.ys)}

    @classmethod
    def from_json(cls, doc: Mapping) -> "LossFn":
        kind = doc.get("kind")
        try:
            if kind == "exponential":
                return cls.exponential(doc["eta"])
            if kind == "power_plus":
                return cls.power_plus(doc["p"])
            if kind == "custom":
                return cls.custom(doc["xs"], doc["ys"])
        except KeyError as exc:
            raise ConfigParseError(f"loss spec is missing field {exc}") from exc
        raise ConfigParseError(f"unknown loss kind {kind!r}")


@dataclass(frozen=True, eq=False)
class UtilityFn:
    """A convex nondecreasing utility normalized by phi*(1) = 0."""

    kind: str
    p: float | None = None
    xs: tuple | None = None
    ys: tuple | None = None

    def __post_init__(self):
        if self.kind in ("exp_shift", "identity"):
            pass
        elif self.kind == "hinge_power":
            if self.p is None or self.p <= 1:
                raise InvalidUtilityError("hinge_power utility needs p > 1")
        elif self.kind == "custom":
            xs, ys = _validate_table(self.xs, self.ys, "utility")
            object.__setattr__(self, "xs", tuple(float(v) for v in xs))
            object.__setattr__(self, "ys", tuple(float(v) for v in ys))
        else:
            raise InvalidUtilityError(f"unknown utility kind {self.kind!r}")
        star1 = self.conjugate(1.0)
        if not math.isfinite(star1) or abs(star1) > _NORMALIZATION_TOL:
            raise InvalidUtilityError(
                f"utility must satisfy phi*(1) = 0, got {star1!r}"
            )

    @classmethod
    def exp_shift(cls) -> "UtilityFn":
        """phi(x) = exp(x - 1); the conjugate is y*log(y)."""
        return cls(kind="exp_shift")

    @classmethod
    def identity(cls) -> "UtilityFn":
        """phi(x) = x; the induced functional is the plain expectation."""
        return cls(kind="identity")

    @classmethod
    def hinge_power(cls, p: float) -> "UtilityFn":
        """phi(x) = ((1 + x/p)_+)^p - 1, the power hinge scaled and shifted
        so that phi*(1) = 0; for p = 2 the conjugate is (y - 1)^2."""
        return cls(kind="hinge_power", p=float(p))

    @classmethod
    def custom(cls, xs: Sequence[float], ys: Sequence[float]) -> "UtilityFn":
        return cls(kind="custom", xs=tuple(xs), ys=tuple(ys))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "exp_shift":
            with np.errstate(over="ignore"):
                return np.exp(x - 1.0)
        if self.kind == "identity":
            return x + 0.0
        if self.kind == "hinge_power":
            return np.maximum(1.0 + x / self.p, 0.0) ** self.p - 1.0
        return _interp_extrapolate(x, np.asarray(self.xs), np.asarray(self.ys))

    def conjugate(self, y: float) -> float:
        """phi*(y) for y >= 0; phi*(0) is the right-limit -inf(phi)."""
        if y < 0:
            raise NegativeArgumentError("conjugates are evaluated on y >= 0 only")
        if self.kind == "exp_shift":
            return 0.0 if y == 0.0 else y * math.log(y)
        if self.kind == "identity":
            return 0.0 if abs(y - 1.0) <= 1e-12 else math.inf
        if self.kind == "hinge_power":
            q = self.p / (self.p - 1.0)
            return (self.p - 1.0) * y**q - self.p * y + 1.0
        return self.conjugate_table().eval(y)

    def conjugate_array(self, y: np.ndarray) -> np.ndarray:
        """Vectorized phi* over a nonnegative array; +inf entries allowed."""
        y = np.asarray(y, dtype=float)
        if np.any(y < 0):
            raise NegativeArgumentError("conjugates are evaluated on y >= 0 only")
        if self.kind == "exp_shift":
            out = np.zeros_like(y)
            pos = y > 0
            out[pos] = y[pos] * np.log(y[pos])
            return out
        if self.kind == "identity":
            return np.where(np.abs(y - 1.0) <= 1e-12, 0.0, math.inf)
        if self.kind == "hinge_power":
            q = self.p / (self.p - 1.0)
            return (self.p - 1.0) * y**q - self.p * y + 1.0
        return _table_conjugate_array(self.conjugate_table(), y)

    def conjugate_table(self) -> ConjugateTable:
        xs = np.asarray(self.xs)
        ys = np.asarray(self.ys)
        slopes = np.diff(ys) / np.diff(xs)
        return ConjugateTable(
            slopes=tuple(float(v) for v in xs),
            intercepts=tuple(float(-v) for v in ys),
            y_lo=float(slopes[0]),
            y_hi=float(slopes[-1]),
        )

    def as_json(self) -> dict:
        if self.kind == "hinge_power":
            return {"kind": "hinge_power", "p": self.p}
        if self.kind == "custom":
            return {"kind": "custom", "xs": list(self.xs), "ys": list(self.ys)}
        return {"kind": self.kind}

    @classmethod
    def from_json(cls, doc: Mapping) -> "UtilityFn":
        kind = doc.get("kind")
        try:
            if kind == "exp_shift":
                return cls.exp_shift()
            if kind == "identity":
                return cls.identity()
            if kind == "hinge_power":
                return cls.hinge_power(doc["p"])
            if kind == "custom":
                return cls.custom(doc["xs"], doc["ys"])
        except KeyError as exc:
            raise ConfigParseError(f"utility spec is missing field {exc}") from exc
        raise ConfigParseError(f"unknown utility kind {kind!r}")


def conjugate_eval(fn: LossFn | UtilityFn, y: float) -> float:
    """Fenchel conjugate of a loss or utility at y >= 0 (maybe +inf)."""
    return fn.conjugate(float(y))


def numeric_conjugate(fn, y: float, bound: float = 50.0, n: int = 20001) -> float:
    """Brute-force conjugate oracle: grid maximization of x*y - fn(x).

    Two enumeration stages (global, then local around the argmax) to push
    the grid error well below 1e-6. Deliberately independent of the closed
    forms; used to cross-check them.
    """
    lo, hi = -bound, bound
    best = -math.inf
    for _ in range(3):
        xs = np.linspace(lo, hi, n)
        with np.errstate(over="ignore"):
            vals = xs * y - np.asarray(fn(xs), dtype=float)
        k = int(np.argmax(vals))
        best = max(best, float(vals[k]))
        step = (hi - lo) / (n - 1)
        lo, hi = xs[k] - step, xs[k] + step
    return best


@dataclass(frozen=True)
class LogSubadditivityReport:
    worst_violation: float
    worst_pair: tuple[float, float]
    passes: bool


def check_log_subadditive(loss: LossFn, grid: Sequence[float], tol: float = 1e-10) -> LogSubadditivityReport:
    """Largest excess of l(x+y) over l(x)*l(y) on the grid square."""
    g = np.asarray(grid, dtype=float)
    with np.errstate(over="ignore"):
        lg = np.asarray(loss(g), dtype=float)
        excess = np.asarray(loss(g[:, None] + g[None, :]), dtype=float) - lg[:, None] * lg[None, :]
    i, j = np.unravel_index(int(np.argmax(excess)), excess.shape)
    worst = float(excess[i, j])
    return LogSubadditivityReport(
        worst_violation=worst,
        worst_pair=(float(g[i]), float(g[j])),
        passes=worst <= tol,
    )


@dataclass(frozen=True)
class OceInequalityReport:
    max_excess: float
    min_excess: float
    classification: str  # "superadditive", "subadditive", "additive", "neither"
    worst_pair: tuple[float, float]


def check_oce_inequality(utility: UtilityFn, grid: Sequence[float], tol: float = 1e-9) -> OceInequalityReport:
    """Sign sweep of y*phi*(x) + x*phi*(y) - phi*(xy) over a grid in [0, inf).

    A nonpositive sweep is compatible with superadditivity of the induced
    divergence, a nonnegative one with subadditivity.
    """
    g = np.asarray(grid, dtype=float)
    if np.any(g < 0):
        raise NegativeArgumentError("grid must lie in [0, inf)")
    star = np.asarray([utility.conjugate(float(v)) for v in g])

    def _prod(a, b):
        # extended-real convention 0 * inf = 0
        if a == 0.0 or b == 0.0:
            return 0.0
        return a * b

    max_excess = -math.inf
    min_excess = math.inf
    worst = (float(g[0]), float(g[0]))
    for i, x in enumerate(g):
        for j, y in enumerate(g):
            lhs = _prod(float(y), star[i]) + _prod(float(x), star[j])
            rhs = utility.conjugate(float(x) * float(y))
            if math.isinf(lhs) and math.isinf(rhs):
                continue  # vacuous pair
            e = lhs - rhs
            if e > max_excess:
                max_excess = e
                worst = (float(x), float(y))
            min_excess = min(min_excess, e)
    if max_excess <= tol and min_excess >= -tol:
        cls = "additive"
    elif max_excess <= tol:
        cls = "superadditive"
    elif min_excess >= -tol:
        cls = "subadditive"
    else:
        cls = "neither"
    return OceInequalityReport(
        max_excess=max_excess, min_excess=min_excess, classification=cls, worst_pair=worst
    )
