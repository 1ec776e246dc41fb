"""Divergences induced by risk functionals: closed forms and dual solves.

Each risk family induces a functional alpha(nu | mu) on pairs of laws, the
convex conjugate of the lifted risk restricted to probability vectors:

    alpha(nu | mu) = sup_f ( E_nu[f] - rho_mu(f) ).

Closed forms implemented here:

- entropic(eta)   -> relative entropy / eta (Kullback-Leibler divergence)
- oce(phi)        -> the phi*-divergence  sum mu * phi*(d nu / d mu)
- shortfall(l)    -> inf_{t>0} (1 + sum mu * l*(t d nu / d mu)) / t
- expectation     -> 0 if nu == mu else +inf
- esssup          -> 0 if nu << mu else +inf

``dual_divergence`` solves the defining supremum directly by supergradient
ascent over mean-zero test vectors and reports a certified gap against the
closed form when one exists. The remaining operations are the structural
inequalities: data processing, sufficiency, and refinement monotonicity.
All alphas are nonnegative, vanish at nu == mu, and are +inf off absolute
continuity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    ConfigParseError,
    NotAbsolutelyContinuousError,
    SpaceMismatchError,
    UnknownFamilyError,
    UnsupportedFamilyError,
)
from .losses import LossFn, UtilityFn
from .prob import FiniteDist, Kernel, compose_kernel, pushforward
from .risk import RiskSpec, rho_values

_EQUALITY_TOL = 1e-12


@dataclass(frozen=True)
class Gap:
    """A difference of two extended reals, with infinity bookkeeping.

    ``vacuous`` marks +inf minus +inf: the underlying inequality carries no
    information there, so such instances are counted but excluded from
    statistics. A non-vacuous gap may still be +/-inf.
    """

    value: float | None
    vacuous: bool = False

    @staticmethod
    def of(lhs: float, rhs: float) -> "Gap":
        if math.isinf(lhs) and math.isinf(rhs) and lhs > 0 and rhs > 0:
            return Gap(value=None, vacuous=True)
        return Gap(value=lhs - rhs)


# ---------------------------------------------------------------------------
# closed forms on weight arrays
# ---------------------------------------------------------------------------


def _check_same_atoms(nu: FiniteDist, mu: FiniteDist) -> None:
    if nu.atoms != mu.atoms:
        raise SpaceMismatchError("divergences need both laws on the same atom set")


def _not_ac(nu_w: np.ndarray, mu_w: np.ndarray) -> bool:
    return bool(np.any((nu_w > 0.0) & (mu_w == 0.0)))


def relative_entropy_w(nu_w: np.ndarray, mu_w: np.ndarray, eta: float = 1.0) -> float:
    if _not_ac(nu_w, mu_w):
        return math.inf
    pos = nu_w > 0.0
    n, m = nu_w[pos], mu_w[pos]
    return float(n @ (np.log(n) - np.log(m))) / eta


def phi_divergence_w(nu_w: np.ndarray, mu_w: np.ndarray, utility: UtilityFn) -> float:
    if _not_ac(nu_w, mu_w):
        return math.inf
    # scalar loop: spaces are desk-scale, and python floats beat numpy
    # dispatch below ~10 atoms
    total = 0.0
    star = utility.conjugate
    for n, m in zip(nu_w.tolist(), mu_w.tolist()):
        if m <= 0.0:
            continue
        v = star(n / m)
        if math.isinf(v):
            return math.inf
        total += m * v
    return total


def shortfall_divergence_w(
    nu_w: np.ndarray, mu_w: np.ndarray, loss: LossFn, s_bound: float = 40.0
) -> float:
    if _not_ac(nu_w, mu_w):
        return math.inf
    pairs = [
        (m, n / m) for n, m in zip(nu_w.tolist(), mu_w.tolist()) if m > 0.0
    ]
    star = loss.conjugate

    def g_of_s(s: float) -> float:
        t = math.exp(s)
        total = 1.0
        for m, r in pairs:
            v = star(t * r)
            if math.isinf(v):
                return math.inf
            total += m * v
        return total / t

    # g is convex in t, hence unimodal in s = log t; a coarse scan guards the
    # golden refinement against flat +inf shoulders.
    lo, hi = -s_bound, s_bound
    for _ in range(6):
        grid = np.linspace(lo, hi, 64)
        vals = np.asarray([g_of_s(float(s)) for s in grid])
        k = int(np.argmin(vals))
        if 0 < k < len(grid) - 1:
            break
        width = hi - lo
        if k == 0:
            lo, hi = lo - width, lo + 0.25 * width
        else:
            lo, hi = hi - 0.25 * width, hi + width
    else:
        return float(vals[k])
    a, b = float(grid[k - 1]), float(grid[k + 1])
    best = float(vals[k])
    ga = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - ga * (b - a), a + ga * (b - a)
    fc, fd = g_of_s(c), g_of_s(d)
    while b - a > 1e-12:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - ga * (b - a)
            fc = g_of_s(c)
        else:
            a, c, fc = c, d, fd
            d = a + ga * (b - a)
            fd = g_of_s(d)
    return min(best, g_of_s(0.5 * (a + b)))


def equality_indicator_w(nu_w: np.ndarray, mu_w: np.ndarray) -> float:
    return 0.0 if np.all(np.abs(nu_w - mu_w) <= _EQUALITY_TOL) else math.inf


def support_indicator_w(nu_w: np.ndarray, mu_w: np.ndarray) -> float:
    return math.inf if _not_ac(nu_w, mu_w) else 0.0


# ---------------------------------------------------------------------------
# public closed-form operations
# ---------------------------------------------------------------------------


def relative_entropy(nu: FiniteDist, mu: FiniteDist, eta: float = 1.0) -> float:
    """sum nu * log(d nu / d mu), scaled by 1/eta; +inf off nu << mu."""
    _check_same_atoms(nu, mu)
    return relative_entropy_w(nu.weights, mu.weights, eta)


def phi_divergence(nu: FiniteDist, mu: FiniteDist, utility: UtilityFn) -> float:
    """sum mu * phi*(d nu / d mu) over charged atoms; +inf off nu << mu."""
    _check_same_atoms(nu, mu)
    return phi_divergence_w(nu.weights, mu.weights, utility)


def shortfall_divergence(nu: FiniteDist, mu: FiniteDist, loss: LossFn) -> float:
    """inf over t > 0 of (1 + sum mu * l*(t d nu / d mu)) / t.

    Minimized in s = log t by golden section after a 64-point scan; the map
    is convex in t, so it is unimodal in s.
    """
    _check_same_atoms(nu, mu)
    return shortfall_divergence_w(nu.weights, mu.weights, loss)


# ---------------------------------------------------------------------------
# divergence specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualSolverOptions:
    max_iters: int = 5000
    step0: float = 1.0
    tol: float = 1e-10
    fd_step: float = 1e-6

    @classmethod
    def from_json(cls, doc: Mapping | None) -> "DualSolverOptions":
        if not doc:
            return cls()
        return cls(
            max_iters=int(doc.get("max_iters", 5000)),
            step0=float(doc.get("step0", 1.0)),
            tol=float(doc.get("tol", 1e-10)),
            fd_step=float(doc.get("fd_step", 1e-6)),
        )

    def as_json(self) -> dict:
        return {
            "max_iters": self.max_iters,
            "step0": self.step0,
            "tol": self.tol,
            "fd_step": self.fd_step,
        }


@dataclass(frozen=True, eq=False)
class DivergenceSpec:
    """A tagged divergence family, closed-form or dual-of-a-risk-spec.

    ``equality_indicator`` and ``support_indicator`` are the degenerate
    closed forms induced by the expectation and esssup families.
    """

    family: str
    eta: float | None = None
    utility: UtilityFn | None = None
    loss: LossFn | None = None
    risk: RiskSpec | None = None
    options: DualSolverOptions = DualSolverOptions()

    def __post_init__(self):
        if self.family == "relative_entropy":
            if self.eta is None or self.eta <= 0:
                raise ConfigParseError("relative_entropy needs eta > 0")
        elif self.family == "phi_star":
            if self.utility is None:
                raise ConfigParseError("phi_star needs a utility")
        elif self.family == "shortfall_div":
            if self.loss is None:
                raise ConfigParseError("shortfall_div needs a loss")
        elif self.family == "dual_of":
            if self.risk is None:
                raise ConfigParseError("dual_of needs a risk spec")
        elif self.family in ("equality_indicator", "support_indicator"):
            pass
        else:
            raise UnknownFamilyError(f"unknown divergence family {self.family!r}")

    @classmethod
    def relative_entropy(cls, eta: float = 1.0) -> "DivergenceSpec":
        return cls(family="relative_entropy", eta=float(eta))

    @classmethod
    def phi_star(cls, utility: UtilityFn) -> "DivergenceSpec":
        return cls(family="phi_star", utility=utility)

    @classmethod
    def shortfall_div(cls, loss: LossFn) -> "DivergenceSpec":
        return cls(family="shortfall_div", loss=loss)

    @classmethod
    def dual_of(cls, risk: RiskSpec, options: DualSolverOptions | None = None) -> "DivergenceSpec":
        return cls(family="dual_of", risk=risk, options=options or DualSolverOptions())

    @classmethod
    def equality_indicator(cls) -> "DivergenceSpec":
        return cls(family="equality_indicator")

    @classmethod
    def support_indicator(cls) -> "DivergenceSpec":
        return cls(family="support_indicator")

    def evaluate_w(self, nu_w: np.ndarray, mu_w: np.ndarray) -> float:
        if self.family == "relative_entropy":
            return relative_entropy_w(nu_w, mu_w, self.eta)
        if self.family == "phi_star":
            return phi_divergence_w(nu_w, mu_w, self.utility)
        if self.family == "shortfall_div":
            return shortfall_divergence_w(nu_w, mu_w, self.loss)
        if self.family == "equality_indicator":
            return equality_indicator_w(nu_w, mu_w)
        if self.family == "support_indicator":
            return support_indicator_w(nu_w, mu_w)
        if self.family == "dual_of":
            return _dual_divergence_w(self.risk, nu_w, mu_w, self.options).value
        raise UnknownFamilyError(self.family)

    def evaluate(self, nu: FiniteDist, mu: FiniteDist) -> float:
        _check_same_atoms(nu, mu)
        return self.evaluate_w(nu.weights, mu.weights)

    def as_json(self) -> dict:
        doc: dict = {"family": self.family}
        if self.family == "relative_entropy":
            doc["eta"] = self.eta
        elif self.family == "phi_star":
            doc["utility"] = self.utility.as_json()
        elif self.family == "shortfall_div":
            doc["loss"] = self.loss.as_json()
        elif self.family == "dual_of":
            doc["spec"] = self.risk.as_json()
            doc["options"] = self.options.as_json()
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "DivergenceSpec":
        family = doc.get("family")
        try:
            if family == "relative_entropy":
                return cls.relative_entropy(doc.get("eta", 1.0))
            if family == "phi_star":
                return cls.phi_star(UtilityFn.from_json(doc["utility"]))
            if family == "shortfall_div":
                return cls.shortfall_div(LossFn.from_json(doc["loss"]))
            if family == "dual_of":
                return cls.dual_of(
                    RiskSpec.from_json(doc["spec"]),
                    DualSolverOptions.from_json(doc.get("options")),
                )
            if family == "equality_indicator":
                return cls.equality_indicator()
            if family == "support_indicator":
                return cls.support_indicator()
        except KeyError as exc:
            raise ConfigParseError(f"divergence spec is missing field {exc}") from exc
        raise UnknownFamilyError(f"unknown divergence family {family!r}")


def divergence_for_risk_spec(spec: RiskSpec) -> DivergenceSpec:
    """The closed-form divergence induced by a risk spec, when one exists."""
    if spec.family == "entropic":
        return DivergenceSpec.relative_entropy(spec.eta)
    if spec.family == "oce":
        return DivergenceSpec.phi_star(spec.utility)
    if spec.family == "shortfall":
        return DivergenceSpec.shortfall_div(spec.loss)
    if spec.family == "expectation":
        return DivergenceSpec.equality_indicator()
    if spec.family == "esssup":
        return DivergenceSpec.support_indicator()
    raise UnsupportedFamilyError(
        f"no closed-form divergence for family {spec.family!r}; use dual_of"
    )


# ---------------------------------------------------------------------------
# dual solver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualSolveResult:
    """Outcome of maximizing E_nu[f] - rho_mu(f) over mean-zero f.

    ``value`` is a lower bound on the supremum by construction (every iterate
    is feasible). ``closed_form`` and ``certified_gap`` are filled when the
    family admits a closed form; the gap is closed_form - value.
    """

    value: float
    maximizer: np.ndarray | None
    iterations: int
    budget_exhausted: bool
    closed_form: float | None = None
    certified_gap: float | None = None


def _supergradient(spec: RiskSpec, mu_w: np.ndarray, nu_w: np.ndarray, f: np.ndarray, h: float):
    if spec.family == "entropic":
        g = mu_w * np.exp(spec.eta * (f - np.max(f)))
        g /= g.sum()
        return nu_w - g
    if spec.family == "coherent":
        best_val, best_d = -math.inf, None
        for d in spec.densities:
            arr = np.asarray(d, dtype=float)
            val = float((mu_w * arr) @ f)
            if val > best_val:
                best_val, best_d = val, arr
        return nu_w - mu_w * best_d
    # central finite differences on the risk term
    grad = np.empty_like(f)
    for i in range(f.size):
        e = np.zeros_like(f)
        e[i] = h
        grad[i] = (rho_values(spec, mu_w, f + e) - rho_values(spec, mu_w, f - e)) / (2.0 * h)
    return nu_w - grad


def _dual_divergence_w(
    spec: RiskSpec, nu_w: np.ndarray, mu_w: np.ndarray, options: DualSolverOptions
) -> DualSolveResult:
    if _not_ac(nu_w, mu_w):
        return DualSolveResult(
            value=math.inf, maximizer=None, iterations=0, budget_exhausted=False
        )
    mask = mu_w > 0.0
    mw = mu_w[mask]
    nw = nu_w[mask]

    def center(f: np.ndarray) -> np.ndarray:
        # cash additivity makes the objective constant along all-ones, so the
        # mean-zero gauge pins the iterate without changing the value
        return f - float(mw @ f)

    def value(f: np.ndarray) -> float:
        return float(nw @ f) - rho_values(spec, mw, f)

    # warm start at the centered log density ratio, the exact maximizer for
    # entropy-like families and a sane scale for the rest; the clip only
    # guards nu-null atoms, where the true maximizer runs to -inf
    if spec.family in ("entropic", "oce", "shortfall"):
        ratio = np.clip(nw / mw, 1e-300, 1e300)
        f = center(np.log(ratio) / (spec.eta if spec.family == "entropic" else 1.0))
    else:
        f = center(np.zeros_like(mw))
    best_f = f
    best_val = value(f)
    step = options.step0
    iters = 0
    exhausted = True
    while iters < options.max_iters:
        iters += 1
        g = _supergradient(spec, mw, nw, best_f, options.fd_step)
        gnorm = float(np.max(np.abs(g)))
        if gnorm * step < 1e-14:
            exhausted = False
            break
        cand = center(best_f + step * g)
        cand_val = value(cand)
        if cand_val > best_val:
            improvement = cand_val - best_val
            best_f, best_val = cand, cand_val
            if improvement < options.tol:
                exhausted = False
                break
            step = min(step * 1.3, 16.0 * options.step0)
        else:
            step *= 0.5
            if step < 1e-13:
                exhausted = False
                break
    maximizer = np.zeros_like(mu_w)
    maximizer[mask] = best_f
    return DualSolveResult(
        value=best_val,
        maximizer=maximizer,
        iterations=iters,
        budget_exhausted=exhausted,
    )


def dual_divergence(
    spec: RiskSpec,
    nu: FiniteDist,
    mu: FiniteDist,
    options: DualSolverOptions | None = None,
) -> DualSolveResult:
    """Maximize E_nu[f] - rho_mu(f) by supergradient ascent.

    Analytic supergradients are used for the entropic family (Gibbs weights)
    and coherent families (the argmax density); other families use central
    finite differences. The gauge freedom from cash additivity is removed by
    keeping iterates mean-zero under mu. Off absolute continuity the value is
    +inf with no optimization. A closed form, when the family has one, is
    attached together with the certified gap closed_form - value.
    """
    _check_same_atoms(nu, mu)
    options = options or DualSolverOptions()
    result = _dual_divergence_w(spec, nu.weights, mu.weights, options)
    try:
        closed_spec = divergence_for_risk_spec(spec)
    except UnsupportedFamilyError:
        return result
    closed = closed_spec.evaluate_w(nu.weights, mu.weights)
    gap = None
    if math.isfinite(closed) and math.isfinite(result.value):
        gap = closed - result.value
    elif closed == result.value:
        gap = 0.0
    return replace(result, closed_form=closed, certified_gap=gap)


# ---------------------------------------------------------------------------
# structural inequalities
# ---------------------------------------------------------------------------


def dpi_gap(div: DivergenceSpec, nu: FiniteDist, mu: FiniteDist, kernel: Kernel) -> Gap:
    """alpha(nu | mu) - alpha(nu K | mu K); nonnegative for any divergence.

    Both sides infinite is reported vacuous rather than as NaN arithmetic.
    """
    _check_same_atoms(nu, mu)
    if kernel.source != mu.atoms:
        raise SpaceMismatchError("kernel source must match the common atom set")
    before = div.evaluate(nu, mu)
    _, nu_k = compose_kernel(nu, kernel)
    _, mu_k = compose_kernel(mu, kernel)
    after = div.evaluate(nu_k, mu_k)
    return Gap.of(before, after)


def sufficiency_gap(div: DivergenceSpec, nu: FiniteDist, mu: FiniteDist, mapping) -> Gap:
    """alpha(nu | mu) - alpha(nu o T^-1 | mu o T^-1) for a statistic T.

    Zero (within solver noise) whenever d nu / d mu is constant on each fiber
    of T; nonnegative always, by data processing.
    """
    _check_same_atoms(nu, mu)
    if _not_ac(nu.weights, mu.weights):
        raise NotAbsolutelyContinuousError("sufficiency_gap requires nu << mu")
    before = div.evaluate(nu, mu)
    nu_t = pushforward(nu, mapping)
    mu_t = pushforward(mu, mapping)
    if nu_t.atoms != mu_t.atoms:
        # align the image atom sets; first-appearance order may differ when
        # one measure charges a fiber the other does not reach first
        atoms = tuple(dict.fromkeys(list(mu_t.atoms) + list(nu_t.atoms)))
        mu_t = FiniteDist(atoms, [mu_t.weight(a) if a in mu_t.atoms else 0.0 for a in atoms])
        nu_t = FiniteDist(atoms, [nu_t.weight(a) if a in nu_t.atoms else 0.0 for a in atoms])
    after = div.evaluate(nu_t, mu_t)
    return Gap.of(before, after)


def refinement_monotonicity(
    div: DivergenceSpec, nu: FiniteDist, mu: FiniteDist, chain: Sequence
) -> list[float]:
    """Divergence values along a chain of coarsening maps, finest first.

    The first entry is alpha(nu | mu) itself; each later entry pushes both
    laws through one more map. Data processing makes the list nonincreasing.
    """
    _check_same_atoms(nu, mu)
    values = [div.evaluate(nu, mu)]
    cur_nu, cur_mu = nu, mu
    for mapping in chain:
        nu_t = pushforward(cur_nu, mapping)
        mu_t = pushforward(cur_mu, mapping)
        if nu_t.atoms != mu_t.atoms:
            atoms = tuple(dict.fromkeys(list(mu_t.atoms) + list(nu_t.atoms)))
            mu_t = FiniteDist(atoms, [mu_t.weight(a) if a in mu_t.atoms else 0.0 for a in atoms])
            nu_t = FiniteDist(atoms, [nu_t.weight(a) if a in nu_t.atoms else 0.0 for a in atoms])
        values.append(div.evaluate(nu_t, mu_t))
        cur_nu, cur_mu = nu_t, mu_t
    return values


# ---------------------------------------------------------------------------
# grid oracle for primal reconstruction
# ---------------------------------------------------------------------------


def _simplex_grid(n: int, m: int) -> np.ndarray:
    """All compositions of m into n nonnegative parts, scaled to the simplex."""
    if n == 1:
        return np.ones((1, 1))
    axes = [np.arange(m + 1)] * (n - 1)
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
    mesh = mesh[mesh.sum(axis=1) <= m]
    last = m - mesh.sum(axis=1)
    return np.column_stack([mesh, last]).astype(float) / m


_GRID_FINE = {1: 1, 2: 2000, 3: 400, 4: 120}
_GRID_COARSE = {1: 1, 2: 400, 3: 60, 4: 24}


def _grid_scores(div: DivergenceSpec, grid: np.ndarray, mu_w: np.ndarray, values: np.ndarray):
    """Vectorized objective over all grid rows, or None if not supported."""
    if not np.all(mu_w > 0):
        return None
    if div.family == "relative_entropy":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(
                grid > 0, grid * (np.log(np.where(grid > 0, grid, 1.0)) - np.log(mu_w)), 0.0
            )
        return grid @ values - terms.sum(axis=1) / div.eta
    if div.family == "phi_star":
        star = div.utility.conjugate_array(grid / mu_w)
        totals = np.where(np.isinf(star), math.inf, star * mu_w).sum(axis=1)
        return np.where(np.isfinite(totals), grid @ values - totals, -math.inf)
    return None


def primal_reconstruction(
    div: DivergenceSpec, mu: FiniteDist, f, polish_passes: int = 12
) -> float:
    """Recover rho_mu(f) as max over laws nu of E_nu[f] - alpha(nu | mu).

    A brute-force enumeration oracle: dense simplex grid, then pairwise
    mass-transfer polish with golden section. Independent of the risk-side
    evaluators, so it certifies the duality rather than restating it.
    """
    from .prob import _as_values

    values = _as_values(f, len(mu))
    mu_w = mu.weights
    n = len(mu)
    if n > 4:
        raise UnsupportedFamilyError("the grid oracle is limited to spaces with <= 4 atoms")

    def objective(nu_w: np.ndarray) -> float:
        a = div.evaluate_w(nu_w, mu_w)
        if math.isinf(a):
            return -math.inf
        return float(nu_w @ values) - a

    # families with vectorized scorers afford a fine grid; the rest start
    # coarse and rely on the exchange polish for the last digits
    grid = _simplex_grid(n, _GRID_FINE[n])
    scores = _grid_scores(div, grid, mu_w, values)
    if scores is None:
        grid = _simplex_grid(n, _GRID_COARSE[n])
        best = -math.inf
        best_w = grid[0].copy()
        for row in grid:
            s = objective(row)
            if s > best:
                best, best_w = s, row.copy()
    else:
        best_idx = int(np.argmax(scores))
        best_w = grid[best_idx].copy()
        best = float(scores[best_idx])

    ga = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(polish_passes):
        improved = False
        for i in range(n):
            for j in range(n):
                if i == j:
                    continue
                lo, hi = -best_w[j], best_w[i]
                if hi - lo < 1e-12:
                    continue

                def line(delta: float) -> float:
                    w = best_w.copy()
                    w[i] -= delta
                    w[j] += delta
                    return objective(np.maximum(w, 0.0))

                a, b = lo, hi
                c, d = b - ga * (b - a), a + ga * (b - a)
                fc, fd = line(c), line(d)
                while b - a > 1e-11:
                    if fc > fd:
                        b, d, fd = d, c, fc
                        c = b - ga * (b - a)
                        fc = line(c)
                    else:
                        a, c, fc = c, d, fd
                        d = a + ga * (b - a)
                        fd = line(d)
                delta = 0.5 * (a + b)
                cand = best_w.copy()
                cand[i] -= delta
                cand[j] += delta
                cand = np.maximum(cand, 0.0)
                cand /= cand.sum()
                s = objective(cand)
                if s > best + 1e-13:
                    best, best_w = s, cand
                    improved = True
        if not improved:
            break
    return best
