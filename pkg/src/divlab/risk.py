"""Evaluation of law-invariant convex risk functionals on finite laws.

All families share the normalization rho(const c) = c (cash additivity plus
rho(0) = 0) and the sign convention that rho is *increasing*: larger outcomes
mean larger risk numbers. Families:

- ``entropic(eta)``:      rho(X) = log(E[exp(eta X)]) / eta
- ``shortfall(loss)``:    smallest c with E[loss(X - c)] <= 1
- ``oce(utility)``:       inf_m ( E[utility(m + X)] - m )
- ``expectation``:        E[X]
- ``esssup``:             max of X over atoms with positive mass
- ``coherent(densities)``: max over a finite density set D of E[d * X]

The first five are law invariant by construction and evaluate on any law.
A coherent family is tied to the space its densities live on, so it is
evaluated pathwise against a matching base distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BracketFailureError,
    ConfigParseError,
    InvalidDensityError,
    InvalidPartitionError,
    SpaceMismatchError,
    UnboundedObjectiveError,
    UnknownFamilyError,
    UnsupportedFamilyError,
)
from .losses import LossFn, UtilityFn
from .prob import FiniteDist, Partition, _as_values, condition

FAMILIES = ("entropic", "shortfall", "oce", "expectation", "esssup", "coherent")

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class RiskSpec:
    """A tagged description of one risk family plus numeric tolerances."""

    family: str
    eta: float | None = None
    loss: LossFn | None = None
    utility: UtilityFn | None = None
    densities: tuple | None = None
    reference: FiniteDist | None = None
    root_tol: float = 1e-11
    opt_tol: float = 1e-11

    def __post_init__(self):
        if self.family == "entropic":
            if self.eta is None or self.eta <= 0:
                raise ConfigParseError("entropic family needs eta > 0")
        elif self.family == "shortfall":
            if self.loss is None:
                raise ConfigParseError("shortfall family needs a loss function")
        elif self.family == "oce":
            if self.utility is None:
                raise ConfigParseError("oce family needs a utility function")
        elif self.family in ("expectation", "esssup"):
            pass
        elif self.family == "coherent":
            if not self.densities:
                raise ConfigParseError("coherent family needs at least one density")
            dens = tuple(tuple(float(v) for v in d) for d in self.densities)
            object.__setattr__(self, "densities", dens)
            if self.reference is not None:
                for d in dens:
                    _validate_density(np.asarray(d), self.reference.weights)
        else:
            raise UnknownFamilyError(f"unknown risk family {self.family!r}")

    @classmethod
    def entropic(cls, eta: float) -> "RiskSpec":
        return cls(family="entropic", eta=float(eta))

    @classmethod
    def shortfall(cls, loss: LossFn) -> "RiskSpec":
        return cls(family="shortfall", loss=loss)

    @classmethod
    def oce(cls, utility: UtilityFn) -> "RiskSpec":
        return cls(family="oce", utility=utility)

    @classmethod
    def expectation(cls) -> "RiskSpec":
        return cls(family="expectation")

    @classmethod
    def esssup(cls) -> "RiskSpec":
        return cls(family="esssup")

    @classmethod
    def coherent(cls, densities: Sequence[Sequence[float]], reference: FiniteDist | None = None) -> "RiskSpec":
        return cls(family="coherent", densities=tuple(densities), reference=reference)

    def as_json(self) -> dict:
        doc: dict = {"family": self.family}
        if self.family == "entropic":
            doc["eta"] = self.eta
        elif self.family == "shortfall":
            doc["loss"] = self.loss.as_json()
        elif self.family == "oce":
            doc["utility"] = self.utility.as_json()
        elif self.family == "coherent":
            doc["densities"] = [list(d) for d in self.densities]
            if self.reference is not None:
                doc["reference"] = self.reference.as_json()
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "RiskSpec":
        family = doc.get("family")
        try:
            if family == "entropic":
                return cls.entropic(doc["eta"])
            if family == "shortfall":
                return cls.shortfall(LossFn.from_json(doc["loss"]))
            if family == "oce":
                return cls.oce(UtilityFn.from_json(doc["utility"]))
            if family == "expectation":
                return cls.expectation()
            if family == "esssup":
                return cls.esssup()
            if family == "coherent":
                ref = FiniteDist.from_json(doc["reference"]) if "reference" in doc else None
                return cls.coherent(doc["densities"], ref)
        except KeyError as exc:
            raise ConfigParseError(f"risk spec is missing field {exc}") from exc
        raise UnknownFamilyError(f"unknown risk family {family!r}")


# ---------------------------------------------------------------------------
# family evaluators on (weights, values) arrays
# ---------------------------------------------------------------------------


def _entropic_values(w: np.ndarray, v: np.ndarray, eta: float) -> float:
    # max-shift keeps exp() in range for any bounded values
    pos = w > 0.0
    vv, ww = v[pos], w[pos]
    s = float(np.max(eta * vv))
    return (s + math.log(float(ww @ np.exp(eta * vv - s)))) / eta


def _shortfall_values(w: np.ndarray, v: np.ndarray, loss: LossFn, tol: float) -> float:
    pos = w > 0.0
    vv, ww = v[pos], w[pos]

    def expected(c: float) -> float:
        return float(ww @ np.asarray(loss(vv - c), dtype=float))

    lo = float(np.min(vv)) - 1.0
    hi = float(np.max(vv)) + 1.0
    if expected(lo) <= 1.0 or expected(hi) > 1.0 + 1e-12:
        raise BracketFailureError(
            "E[loss(X - c)] does not cross 1 on the standard bracket; "
            "the loss violates l(0) = 1 < l(x > 0)"
        )
    # expected() is nonincreasing and continuous in c, so bisection converges
    # unconditionally to the smallest c with expected(c) <= 1.
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if expected(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    if expected(hi) > 1.0 + 1e-9:
        raise BracketFailureError("post-check failed: E[loss(X - rho)] > 1")
    return hi


def _golden_min(fn, lo: float, hi: float, xtol: float, max_iter: int = 400) -> tuple[float, float]:
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = fn(c), fn(d)
    it = 0
    while hi - lo > xtol and it < max_iter:
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = fn(d)
        it += 1
    x = 0.5 * (lo + hi)
    return x, fn(x)


def _oce_values(w: np.ndarray, v: np.ndarray, utility: UtilityFn, tol: float) -> float:
    pos = w > 0.0
    vv, ww = v[pos], w[pos]

    def objective(m: float) -> float:
        with np.errstate(over="ignore"):
            return float(ww @ np.asarray(utility(m + vv), dtype=float)) - m

    # the optimal shift tracks the negated support: for any utility with
    # phi*(1) = 0 it lies within a bounded margin of [-max(v), -min(v)]
    lo = -float(np.max(vv)) - 50.0
    hi = -float(np.min(vv)) + 50.0
    for _ in range(10):
        m, val = _golden_min(objective, lo, hi, tol)
        width = hi - lo
        if m - lo > 1e-3 * width and hi - m > 1e-3 * width:
            return val
        mid = 0.5 * (lo + hi)
        lo, hi = mid - width, mid + width
    raise UnboundedObjectiveError(
        "OCE minimizer kept hitting the bracket; utility violates phi*(1) = 0"
    )


def _validate_density(d: np.ndarray, mu_w: np.ndarray) -> None:
    if d.shape != mu_w.shape:
        raise InvalidDensityError(
            f"density has length {d.shape}, reference has {mu_w.shape}"
        )
    if np.any(d < -1e-12):
        raise InvalidDensityError("densities must be nonnegative")
    total = float(mu_w @ np.maximum(d, 0.0))
    if abs(total - 1.0) > 1e-9:
        raise InvalidDensityError(f"density integrates to {total!r} under mu, not 1")


def _coherent_values(mu_w: np.ndarray, v: np.ndarray, densities: Sequence) -> float:
    best = -math.inf
    for d in densities:
        arr = np.maximum(np.asarray(d, dtype=float), 0.0)
        _validate_density(arr, mu_w)
        best = max(best, float((mu_w * arr) @ v))
    return best


def rho_values(spec: RiskSpec, mu_w: np.ndarray, values: np.ndarray) -> float:
    """Risk of a value vector against weights, bypassing law construction.

    This is the hot path shared by the lifted evaluator and the dual solver;
    law invariance makes merging equal values immaterial.
    """
    if spec.family == "entropic":
        return _entropic_values(mu_w, values, spec.eta)
    if spec.family == "shortfall":
        return _shortfall_values(mu_w, values, spec.loss, spec.root_tol)
    if spec.family == "oce":
        return _oce_values(mu_w, values, spec.utility, spec.opt_tol)
    if spec.family == "expectation":
        return float(mu_w @ values)
    if spec.family == "esssup":
        return float(np.max(values[mu_w > 0.0]))
    if spec.family == "coherent":
        return _coherent_values(mu_w, values, spec.densities)
    raise UnknownFamilyError(spec.family)


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------


def rho_entropic(law: FiniteDist, eta: float) -> float:
    """log(E[exp(eta X)]) / eta for the law of X."""
    return _entropic_values(law.weights, law.values_array(), eta)


def rho_shortfall(law: FiniteDist, loss: LossFn, tol: float = 1e-11) -> float:
    """Smallest cash level c with E[loss(X - c)] <= 1, by bisection."""
    return _shortfall_values(law.weights, law.values_array(), loss, tol)


def rho_oce(law: FiniteDist, utility: UtilityFn, tol: float = 1e-11) -> float:
    """inf over shifts m of E[utility(m + X)] - m, by golden section."""
    return _oce_values(law.weights, law.values_array(), utility, tol)


def rho_coherent(mu: FiniteDist, f, densities: Sequence[Sequence[float]]) -> float:
    """max over the density set of E_mu[d * f]."""
    return _coherent_values(mu.weights, _as_values(f, len(mu)), densities)


def rho_of_law(spec: RiskSpec, law: FiniteDist) -> float:
    """The distribution-level functional: risk as a function of the law alone."""
    if spec.family == "coherent":
        raise UnsupportedFamilyError(
            "a coherent family is tied to its reference space; evaluate it "
            "pathwise with rho_lifted or rho_coherent"
        )
    return rho_values(spec, law.weights, law.values_array())


def rho_lifted(spec: RiskSpec, mu: FiniteDist, f) -> float:
    """Risk of the variable f on the space (atoms of mu, mu).

    Law invariance contract: the value equals the family evaluator applied
    to the law of f under mu. Coherent specs evaluate pathwise against mu,
    which must match their reference space when one is pinned.
    """
    values = _as_values(f, len(mu))
    if spec.family == "coherent":
        if spec.reference is not None and spec.reference.atoms != mu.atoms:
            raise SpaceMismatchError("coherent spec is pinned to a different reference space")
        return _coherent_values(mu.weights, values, spec.densities)
    return rho_values(spec, mu.weights, values)


@dataclass(frozen=True)
class ConditionalRisk:
    """Per-block risk values rho(X | G) for a finite partition G."""

    partition: Partition
    values: tuple  # of (block, value) pairs, positive-weight blocks only
    weights: tuple  # matching block probabilities

    def as_law(self) -> FiniteDist:
        """The law of the block-value variable under the block weights."""
        from .prob import mixture, point_mass

        return mixture([(w, point_mass(v)) for (_, v), w in zip(self.values, self.weights)])


def rho_conditional(spec: RiskSpec, mu: FiniteDist, f, partition: Partition) -> ConditionalRisk:
    """Blockwise risk of f given the partition, one value per charged block."""
    blocks = condition(mu, f, partition)
    if not blocks:
        raise InvalidPartitionError("no block carries positive mass")
    vals = tuple((cb.block, rho_of_law(spec, cb.law)) for cb in blocks)
    return ConditionalRisk(
        partition=partition,
        values=vals,
        weights=tuple(cb.weight for cb in blocks),
    )


def acceptance_member(spec: RiskSpec, law: FiniteDist, tol: float = 1e-9) -> bool:
    """Membership of a law in the acceptance set {rho <= 0}, up to tol."""
    return rho_of_law(spec, law) <= tol
