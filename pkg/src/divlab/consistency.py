"""Numerical probes of time consistency, additivity, and acceptance geometry.

Everything here asks one of two questions about a risk family and its
induced divergence alpha:

1. Additivity of alpha over a two-stage experiment. For a pair of joint laws
   mu_bar = mu(dx) K^mu_x(dy) and nu_bar = nu(dx) K^nu_x(dy),

       superadditivity gap = alpha(nu_bar | mu_bar)
                             - alpha(nu | mu)
                             - sum_x nu(x) alpha(K^nu_x | K^mu_x)

   is identically zero for relative entropy (the chain rule), nonnegative
   for acceptance-consistent families, nonpositive for rejection-consistent
   ones. The weak (Weber) variant drops the marginal term.

2. Consistency of the risk itself under conditioning: the gap
   rho(rho(X | G)) - rho(X) over sampled spaces, variables, and partitions,
   plus the acceptance-set geometry probes (shift-convexity, the compound
   shifted-mixture property, plain mixture convexity).

Instances are sampled from seeded per-trial generators: trial k of a search
with seed s uses ``numpy.random.default_rng([s, k])``, so any reported
instance replays exactly from (seed, trial) and results do not depend on how
trials are distributed over workers. Gaps where both sides are +inf are
"vacuous" and excluded from statistics but counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .divergence import (
    DivergenceSpec,
    DualSolverOptions,
    Gap,
    divergence_for_risk_spec,
    dpi_gap,
    primal_reconstruction,
    sufficiency_gap,
    _dual_divergence_w,
)
from .errors import ConfigParseError, PreconditionViolatedError, UnknownFamilyError
from .prob import (
    FiniteDist,
    JointDist,
    Kernel,
    Partition,
    _as_values,
    mixture,
    shift_law,
)
from .risk import RiskSpec, acceptance_member, rho_conditional, rho_lifted, rho_of_law, rho_values

VALUE_RANGE = (-2.0, 2.0)
VALUE_GRID_POINTS = 41


@dataclass(frozen=True)
class SearchBudget:
    """How much to sample and from where; fully determines a search."""

    trials: int
    seed: int
    max_e: int = 3
    max_f: int = 3
    dirichlet_alpha: float = 1.0
    product_fraction: float = 0.5
    sparsity: float = 0.0

    def __post_init__(self):
        if self.trials < 0 or self.max_e < 1 or self.max_f < 1:
            raise ConfigParseError("budget needs trials >= 0 and positive sizes")

    def rng_for(self, trial: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, trial])

    def as_json(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "sizes": {"E": self.max_e, "F": self.max_f},
            "dirichlet_alpha": self.dirichlet_alpha,
            "product_fraction": self.product_fraction,
            "sparsity": self.sparsity,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "SearchBudget":
        sizes = doc.get("sizes", {})
        return cls(
            trials=int(doc.get("trials", 0)),
            seed=int(doc.get("seed", 0)),
            max_e=int(sizes.get("E", 3)),
            max_f=int(sizes.get("F", 3)),
            dirichlet_alpha=float(doc.get("dirichlet_alpha", 1.0)),
            product_fraction=float(doc.get("product_fraction", 0.5)),
            sparsity=float(doc.get("sparsity", 0.0)),
        )


@dataclass(frozen=True)
class ProductInstance:
    """A pair of joint laws on a common product grid, reference flagged."""

    mu_bar: JointDist
    nu_bar: JointDist
    is_product: bool

    def as_json(self) -> dict:
        return {
            "mu_bar": self.mu_bar.as_json(),
            "nu_bar": self.nu_bar.as_json(),
            "is_product": self.is_product,
        }


@dataclass(frozen=True)
class ConditionalInstance:
    """A joint law, a payoff on the grid, and the first-coordinate partition."""

    joint: JointDist
    values: np.ndarray  # shape (n_e, n_f)
    is_product: bool

    def flat(self) -> tuple[FiniteDist, np.ndarray, Partition]:
        dist = self.joint.as_dist()
        part = Partition(
            tuple(
                tuple((x, y) for y in self.joint.col_atoms)
                for x in self.joint.row_atoms
            )
        )
        return dist, self.values.reshape(-1), part

    def as_json(self) -> dict:
        return {
            "joint": self.joint.as_json(),
            "values": [[float(v) for v in row] for row in self.values],
            "partition": "first_coordinate",
            "is_product": self.is_product,
        }


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------


def _value_grid() -> np.ndarray:
    return np.linspace(VALUE_RANGE[0], VALUE_RANGE[1], VALUE_GRID_POINTS)


def _dirichlet(rng: np.random.Generator, n: int, alpha: float) -> np.ndarray:
    w = rng.dirichlet(np.full(n, alpha))
    # guard against exact zeros from extreme draws; keep it a distribution
    w = np.maximum(w, 0.0)
    return w / w.sum()


def _labels(prefix: str, n: int) -> tuple:
    return tuple(f"{prefix}{i}" for i in range(n))


def _sparsify(rng: np.random.Generator, w: np.ndarray, sparsity: float) -> np.ndarray:
    if sparsity <= 0.0:
        return w
    keep = rng.random(w.shape) >= sparsity
    if not keep.any():
        keep.flat[int(rng.integers(w.size))] = True
    w = np.where(keep, w, 0.0)
    return w / w.sum()


def sample_product_instance(rng: np.random.Generator, budget: SearchBudget) -> ProductInstance:
    n_e = int(rng.integers(2, budget.max_e + 1))
    n_f = int(rng.integers(2, budget.max_f + 1))
    is_product = bool(rng.random() < budget.product_fraction)
    if is_product:
        mu_w = np.outer(
            _dirichlet(rng, n_e, budget.dirichlet_alpha),
            _dirichlet(rng, n_f, budget.dirichlet_alpha),
        )
    else:
        mu_w = _dirichlet(rng, n_e * n_f, budget.dirichlet_alpha).reshape(n_e, n_f)
    mu_w = _sparsify(rng, mu_w, budget.sparsity)
    nu_w = _dirichlet(rng, n_e * n_f, budget.dirichlet_alpha).reshape(n_e, n_f)
    e, f = _labels("e", n_e), _labels("f", n_f)
    return ProductInstance(
        mu_bar=JointDist(e, f, mu_w),
        nu_bar=JointDist(e, f, nu_w),
        is_product=is_product,
    )


def sample_conditional_instance(rng: np.random.Generator, budget: SearchBudget) -> ConditionalInstance:
    n_e = int(rng.integers(2, budget.max_e + 1))
    n_f = int(rng.integers(2, budget.max_f + 1))
    is_product = bool(rng.random() < budget.product_fraction)
    if is_product:
        w = np.outer(
            _dirichlet(rng, n_e, budget.dirichlet_alpha),
            _dirichlet(rng, n_f, budget.dirichlet_alpha),
        )
    else:
        w = _dirichlet(rng, n_e * n_f, budget.dirichlet_alpha).reshape(n_e, n_f)
    w = _sparsify(rng, w, budget.sparsity)
    values = rng.choice(_value_grid(), size=(n_e, n_f))
    return ConditionalInstance(
        joint=JointDist(_labels("e", n_e), _labels("f", n_f), w),
        values=values,
        is_product=is_product,
    )


def sample_boundary_law(rng: np.random.Generator, budget: SearchBudget, spec: RiskSpec, n: int) -> FiniteDist:
    """A law shifted onto the acceptance boundary rho = 0."""
    values = rng.choice(_value_grid(), size=n, replace=False)
    w = _dirichlet(rng, n, budget.dirichlet_alpha)
    law = FiniteDist([float(v) for v in values], w)
    return shift_law(law, -rho_of_law(spec, law))


@dataclass(frozen=True)
class ShiftConvexityInstance:
    mu: FiniteDist
    kernel: Kernel

    def as_json(self) -> dict:
        return {"mu": self.mu.as_json(), "kernel": self.kernel.as_json()}


def sample_shift_convexity_instance(
    rng: np.random.Generator, budget: SearchBudget, spec: RiskSpec
) -> ShiftConvexityInstance:
    n_e = int(rng.integers(2, budget.max_e + 1))
    n_f = int(rng.integers(2, budget.max_f + 1))
    mu = sample_boundary_law(rng, budget, spec, n_e)
    rows = [sample_boundary_law(rng, budget, spec, n_f) for _ in range(n_e)]
    # rows carry their own shifted supports; the kernel target is the union
    target: list[float] = []
    for r in rows:
        for a in r.atoms:
            if a not in target:
                target.append(float(a))
    target.sort()
    idx = {a: i for i, a in enumerate(target)}
    mat = np.zeros((n_e, len(target)))
    for i, r in enumerate(rows):
        for a, w in zip(r.atoms, r.weights):
            mat[i, idx[float(a)]] = w
    return ShiftConvexityInstance(mu=mu, kernel=Kernel(mu.atoms, tuple(target), mat))


# ---------------------------------------------------------------------------
# gap operations
# ---------------------------------------------------------------------------


def _inf_sum(*terms: float) -> float:
    total = 0.0
    for t in terms:
        if math.isinf(t):
            return math.inf
        total += t
    return total


def _conditional_rows(joint: JointDist) -> tuple[np.ndarray, np.ndarray]:
    marg = joint.matrix.sum(axis=1)
    rows = np.empty_like(joint.matrix)
    n_f = joint.matrix.shape[1]
    for i, m in enumerate(marg):
        rows[i] = joint.matrix[i] / m if m > 0 else 1.0 / n_f
    return marg, rows


def superadditivity_gap(div: DivergenceSpec, inst: ProductInstance) -> Gap:
    """alpha(nu_bar | mu_bar) minus the two-stage decomposition.

    Positive gaps witness superadditivity at the instance, negative ones
    subadditivity; relative entropy gives exactly zero (chain rule).
    """
    joint_term = div.evaluate_w(
        inst.nu_bar.matrix.reshape(-1), inst.mu_bar.matrix.reshape(-1)
    )
    mu_marg, mu_rows = _conditional_rows(inst.mu_bar)
    nu_marg, nu_rows = _conditional_rows(inst.nu_bar)
    marg_term = div.evaluate_w(nu_marg, mu_marg)
    row_term = 0.0
    for x in range(len(nu_marg)):
        if nu_marg[x] <= 0.0:
            continue
        a = div.evaluate_w(nu_rows[x], mu_rows[x])
        if math.isinf(a):
            row_term = math.inf
            break
        row_term += nu_marg[x] * a
    return Gap.of(joint_term, _inf_sum(marg_term, row_term))


def weak_consistency_gap(div: DivergenceSpec, inst: ProductInstance) -> Gap:
    """alpha(nu_bar | mu_bar) - sum_x nu(x) alpha(K^nu_x | K^mu_x).

    Weaker than the superadditivity gap by exactly alpha(nu | mu) >= 0;
    nonnegative for weakly acceptance-consistent families.
    """
    joint_term = div.evaluate_w(
        inst.nu_bar.matrix.reshape(-1), inst.mu_bar.matrix.reshape(-1)
    )
    _, mu_rows = _conditional_rows(inst.mu_bar)
    nu_marg, nu_rows = _conditional_rows(inst.nu_bar)
    row_term = 0.0
    for x in range(len(nu_marg)):
        if nu_marg[x] <= 0.0:
            continue
        a = div.evaluate_w(nu_rows[x], mu_rows[x])
        if math.isinf(a):
            row_term = math.inf
            break
        row_term += nu_marg[x] * a
    return Gap.of(joint_term, row_term)


def consistency_gap(spec: RiskSpec, mu: FiniteDist, f, partition: Partition) -> float:
    """rho(rho(X | G)) - rho(X); nonnegative iff acceptance-consistent here."""
    cond = rho_conditional(spec, mu, f, partition)
    outer = rho_of_law(spec, cond.as_law())
    return outer - rho_lifted(spec, mu, f)


def weak_acceptance_margin(spec: RiskSpec, mu: FiniteDist, f, partition: Partition) -> float:
    """-rho(X~) where X~ is X recentered so rho(X~ | G) = 0 on every block.

    Weak acceptance consistency demands rho(X~) <= 0, so a negative margin
    is a violation.
    """
    cond = rho_conditional(spec, mu, f, partition)
    vals = _as_values(f, len(mu)).copy()
    idx = {a: i for i, a in enumerate(mu.atoms)}
    for (block, v) in cond.values:
        for a in block:
            vals[idx[a]] -= v
    return -rho_lifted(spec, mu, vals)


@dataclass(frozen=True)
class ProbeResult:
    acceptable: bool
    rho_mixture: float
    mixture: FiniteDist


def shift_convexity_probe(
    spec: RiskSpec, mu: FiniteDist, kernel: Kernel, tol: float = 1e-9
) -> ProbeResult:
    """Check that acceptable inputs produce an acceptable shifted mixture.

    The mixture places weight mu(x) * K_x(y) at the value x + y. Inputs that
    are not all acceptable violate the precondition and raise.
    """
    if not acceptance_member(spec, mu, tol):
        raise PreconditionViolatedError("mu is not acceptable")
    for i in range(len(kernel.source)):
        if not acceptance_member(spec, kernel.row(i), tol):
            raise PreconditionViolatedError(f"kernel row {i} is not acceptable")
    parts = []
    for i, x in enumerate(mu.atoms):
        parts.append((float(mu.weights[i]), shift_law(kernel.row(i), float(x))))
    mixed = mixture(parts)
    rho = rho_of_law(spec, mixed)
    return ProbeResult(acceptable=rho <= tol, rho_mixture=rho, mixture=mixed)


def property_s_probe(
    spec: RiskSpec,
    pairs: Sequence[tuple[float, float, FiniteDist]],
    tol: float = 1e-9,
) -> ProbeResult:
    """Compound-lottery probe: gamma = sum_i w_i delta_(x_i, m_i).

    Requires the first marginal (the law of the x_i) and every component law
    m_i to be acceptable; checks the shifted mixture sum_i w_i m_i(. - x_i).
    """
    weights = [w for w, _, _ in pairs]
    marginal = mixture(
        [(w, FiniteDist([x], [1.0])) for w, x, _ in pairs]
    )
    if not acceptance_member(spec, marginal, tol):
        raise PreconditionViolatedError("the x-marginal is not acceptable")
    for _, _, law in pairs:
        if not acceptance_member(spec, law, tol):
            raise PreconditionViolatedError("a component law is not acceptable")
    mixed = mixture([(w, shift_law(law, x)) for w, x, law in pairs])
    rho = rho_of_law(spec, mixed)
    return ProbeResult(acceptable=rho <= tol, rho_mixture=rho, mixture=mixed)


def mixture_convexity_probe(
    spec: RiskSpec, laws: Sequence[tuple[float, FiniteDist]], tol: float = 1e-9
) -> ProbeResult:
    """Convexity of the acceptance set: mixtures of acceptable laws stay in."""
    for _, law in laws:
        if not acceptance_member(spec, law, tol):
            raise PreconditionViolatedError("a component law is not acceptable")
    mixed = mixture(list(laws))
    rho = rho_of_law(spec, mixed)
    return ProbeResult(acceptable=rho <= tol, rho_mixture=rho, mixture=mixed)


def integral_lemma_gap(
    spec: RiskSpec,
    nu_bar: JointDist,
    mu_bar: JointDist,
    options: DualSolverOptions | None = None,
) -> Gap:
    """|sum_x nu(x) alpha(K^nu_x | K^mu_x) - rowwise dual suprema|.

    The dual objective separates across rows, so the supremum over joint test
    functions is the nu-weighted sum of per-row dual solves; the closed form
    of the same sum is the oracle.
    """
    options = options or DualSolverOptions()
    closed = divergence_for_risk_spec(spec)
    _, mu_rows = _conditional_rows(mu_bar)
    nu_marg, nu_rows = _conditional_rows(nu_bar)
    left = 0.0
    right = 0.0
    for x in range(len(nu_marg)):
        if nu_marg[x] <= 0.0:
            continue
        a = closed.evaluate_w(nu_rows[x], mu_rows[x])
        b = _dual_divergence_w(spec, nu_rows[x], mu_rows[x], options).value
        if math.isinf(a) or math.isinf(b):
            left, right = math.inf, math.inf
            break
        left += nu_marg[x] * a
        right += nu_marg[x] * b
    if math.isinf(left) and math.isinf(right):
        return Gap(value=None, vacuous=True)
    return Gap(value=abs(left - right))


def key_identity_gap(spec: RiskSpec, mu_bar: JointDist, f) -> float:
    """|rho_mu(x -> rho_rows(f(x, .))) - grid-dual reconstruction|.

    The left side composes the risk through the disintegration of mu_bar;
    the right side maximizes E_nu[g] - alpha(nu | mu) over an enumerated
    simplex grid, with the per-row inner suprema evaluated in closed form.
    """
    f_mat = np.asarray(f, dtype=float).reshape(mu_bar.matrix.shape)
    mu_marg, mu_rows = _conditional_rows(mu_bar)
    g = np.zeros(len(mu_marg))
    for x in range(len(mu_marg)):
        if mu_marg[x] > 0.0:
            g[x] = rho_values(spec, mu_rows[x], f_mat[x])
    lhs = rho_values(spec, mu_marg, g)
    closed = divergence_for_risk_spec(spec)
    rhs = primal_reconstruction(closed, FiniteDist(mu_bar.row_atoms, mu_marg), g)
    return abs(lhs - rhs)


# ---------------------------------------------------------------------------
# seeded trial machinery
# ---------------------------------------------------------------------------

# side "lower": gaps should stay >= -noise; side "abs": |gap| should stay
# <= noise. "needs" says which of (risk spec, divergence spec) a kind uses.
CHECK_KINDS: dict[str, dict] = {
    "chain_rule": {"side": "abs", "needs": "div"},
    "superadditivity": {"side": "lower", "needs": "div"},
    "subadditivity": {"side": "lower", "needs": "div"},
    "weak_consistency": {"side": "lower", "needs": "div"},
    "dpi": {"side": "lower", "needs": "div"},
    "dpi_bijection": {"side": "abs", "needs": "div"},
    "duality": {"side": "abs", "needs": "risk"},
    "time_consistency": {"side": "abs", "needs": "risk"},
    "acceptance": {"side": "lower", "needs": "risk"},
    "rejection": {"side": "lower", "needs": "risk"},
    "weak_acceptance": {"side": "lower", "needs": "risk"},
    "shift_convexity": {"side": "lower", "needs": "risk"},
    "property_s": {"side": "lower", "needs": "risk"},
    "mixture_convexity": {"side": "lower", "needs": "risk"},
    "joint_convexity": {"side": "lower", "needs": "div"},
    "dist_concavity": {"side": "lower", "needs": "risk"},
    "sufficiency_matched": {"side": "abs", "needs": "div"},
    "sufficiency_generic": {"side": "lower", "needs": "div"},
    "refinement": {"side": "lower", "needs": "div"},
    "lemma_identity": {"side": "abs", "needs": "risk"},
    "key_identity": {"side": "abs", "needs": "risk"},
    "lebesgue": {"side": "abs", "needs": "risk"},
}

SEARCH_TARGETS = ("acceptance", "rejection", "weak_acceptance", "shift_convexity")


def _sample_pair(rng, budget: SearchBudget, n: int | None = None):
    n = n or int(rng.integers(2, budget.max_e + 1))
    labels = _labels("a", n)
    mu_w = _sparsify(rng, _dirichlet(rng, n, budget.dirichlet_alpha), budget.sparsity)
    nu_w = _dirichlet(rng, n, budget.dirichlet_alpha)
    return FiniteDist(labels, mu_w), FiniteDist(labels, nu_w)


def _random_surjection(rng, n_from: int, n_to: int) -> list[int]:
    img = list(rng.permutation(n_from)[:n_to])
    out = [0] * n_from
    for k, i in enumerate(img):
        out[i] = k
    rest = [i for i in range(n_from) if i not in set(img)]
    for i in rest:
        out[i] = int(rng.integers(n_to))
    return out


def _run_trial(kind: str, risk, div, budget: SearchBudget, trial: int, with_instance: bool):
    """One seeded trial: returns (gap, vacuous, is_product, instance_or_None).

    The rng stream is a pure function of (budget.seed, trial), so reported
    instances replay exactly and results are independent of worker layout.
    """
    rng = budget.rng_for(trial)
    inst_doc = None

    if kind in ("chain_rule", "superadditivity", "subadditivity", "weak_consistency"):
        inst = sample_product_instance(rng, budget)
        if kind == "weak_consistency":
            g = weak_consistency_gap(div, inst)
        else:
            g = superadditivity_gap(div, inst)
        value = g.value
        if value is not None and kind == "subadditivity":
            value = -value
        if with_instance:
            inst_doc = inst.as_json()
        return value, g.vacuous, inst.is_product, inst_doc

    if kind in ("dpi", "dpi_bijection"):
        mu, nu = _sample_pair(rng, budget)
        n = len(mu)
        if kind == "dpi_bijection":
            perm = rng.permutation(n)
            target = _labels("b", n)
            mat = np.zeros((n, n))
            for i, j in enumerate(perm):
                mat[i, j] = 1.0
            kernel = Kernel(mu.atoms, target, mat)
        else:
            n_f = int(rng.integers(2, budget.max_f + 1))
            rows = np.vstack(
                [_dirichlet(rng, n_f, budget.dirichlet_alpha) for _ in range(n)]
            )
            kernel = Kernel(mu.atoms, _labels("b", n_f), rows)
        g = dpi_gap(div, nu, mu, kernel)
        if with_instance:
            inst_doc = {"nu": nu.as_json(), "mu": mu.as_json(), "kernel": kernel.as_json()}
        return g.value, g.vacuous, None, inst_doc

    if kind == "duality":
        mu, nu = _sample_pair(rng, budget)
        from .divergence import dual_divergence

        res = dual_divergence(risk, nu, mu)
        if res.certified_gap is None:
            return None, True, None, None
        if with_instance:
            inst_doc = {
                "nu": nu.as_json(),
                "mu": mu.as_json(),
                "dual_value": res.value,
                "closed_form": res.closed_form,
                "iterations": res.iterations,
            }
        return res.certified_gap, False, None, inst_doc

    if kind in ("time_consistency", "acceptance", "rejection", "weak_acceptance"):
        inst = sample_conditional_instance(rng, budget)
        dist, vals, part = inst.flat()
        if kind == "weak_acceptance":
            value = weak_acceptance_margin(risk, dist, vals, part)
        else:
            value = consistency_gap(risk, dist, vals, part)
            if kind == "rejection":
                value = -value
        if with_instance:
            inst_doc = inst.as_json()
        return value, False, inst.is_product, inst_doc

    if kind == "shift_convexity":
        inst = sample_shift_convexity_instance(rng, budget, risk)
        probe = shift_convexity_probe(risk, inst.mu, inst.kernel)
        if with_instance:
            inst_doc = inst.as_json()
        return -probe.rho_mixture, False, None, inst_doc

    if kind == "property_s":
        k = int(rng.integers(2, 5))
        xs = rng.choice(_value_grid(), size=k, replace=False)
        weights = _dirichlet(rng, k, budget.dirichlet_alpha)
        laws = [
            sample_boundary_law(rng, budget, risk, int(rng.integers(2, budget.max_f + 1)))
            for _ in range(k)
        ]
        marginal = mixture(
            [(float(w), FiniteDist([float(x)], [1.0])) for w, x in zip(weights, xs)]
        )
        shift = -rho_of_law(risk, marginal)
        pairs = [
            (float(w), float(x) + shift, law) for w, x, law in zip(weights, xs, laws)
        ]
        probe = property_s_probe(risk, pairs)
        if with_instance:
            inst_doc = {
                "pairs": [
                    {"weight": w, "x": x, "law": law.as_json()} for w, x, law in pairs
                ]
            }
        return -probe.rho_mixture, False, None, inst_doc

    if kind == "mixture_convexity":
        k = int(rng.integers(2, 5))
        weights = _dirichlet(rng, k, budget.dirichlet_alpha)
        laws = [
            sample_boundary_law(rng, budget, risk, int(rng.integers(2, budget.max_f + 1)))
            for _ in range(k)
        ]
        probe = mixture_convexity_probe(risk, list(zip(map(float, weights), laws)))
        if with_instance:
            inst_doc = {
                "components": [
                    {"weight": float(w), "law": law.as_json()}
                    for w, law in zip(weights, laws)
                ]
            }
        return -probe.rho_mixture, False, None, inst_doc

    if kind == "joint_convexity":
        n = int(rng.integers(2, budget.max_e + 1))
        labels = _labels("a", n)
        mu1 = FiniteDist(labels, _dirichlet(rng, n, budget.dirichlet_alpha))
        nu1 = FiniteDist(labels, _dirichlet(rng, n, budget.dirichlet_alpha))
        mu2 = FiniteDist(labels, _dirichlet(rng, n, budget.dirichlet_alpha))
        nu2 = FiniteDist(labels, _dirichlet(rng, n, budget.dirichlet_alpha))
        t = float(rng.uniform(0.05, 0.95))
        a1 = div.evaluate(nu1, mu1)
        a2 = div.evaluate(nu2, mu2)
        mix_nu = FiniteDist(labels, t * nu1.weights + (1 - t) * nu2.weights)
        mix_mu = FiniteDist(labels, t * mu1.weights + (1 - t) * mu2.weights)
        a_mix = div.evaluate(mix_nu, mix_mu)
        if math.isinf(a1) or math.isinf(a2):
            vac = math.isinf(a_mix)
            return (None, True, None, None) if vac else (math.inf, False, None, None)
        if with_instance:
            inst_doc = {
                "t": t,
                "nu1": nu1.as_json(),
                "mu1": mu1.as_json(),
                "nu2": nu2.as_json(),
                "mu2": mu2.as_json(),
            }
        return t * a1 + (1 - t) * a2 - a_mix, False, None, inst_doc

    if kind == "dist_concavity":
        n1 = int(rng.integers(2, budget.max_e + 1))
        n2 = int(rng.integers(2, budget.max_e + 1))
        m1 = FiniteDist(
            [float(v) for v in rng.choice(_value_grid(), size=n1, replace=False)],
            _dirichlet(rng, n1, budget.dirichlet_alpha),
        )
        m2 = FiniteDist(
            [float(v) for v in rng.choice(_value_grid(), size=n2, replace=False)],
            _dirichlet(rng, n2, budget.dirichlet_alpha),
        )
        t = float(rng.uniform(0.05, 0.95))
        mixed = mixture([(t, m1), (1 - t, m2)])
        gap = rho_of_law(risk, mixed) - t * rho_of_law(risk, m1) - (1 - t) * rho_of_law(risk, m2)
        if with_instance:
            inst_doc = {"t": t, "m1": m1.as_json(), "m2": m2.as_json()}
        return gap, False, None, inst_doc

    if kind in ("sufficiency_matched", "sufficiency_generic"):
        n = int(rng.integers(2, max(3, budget.max_e) + 1))
        labels = _labels("a", n)
        mu_w = _dirichlet(rng, n, budget.dirichlet_alpha)
        n_fibers = 1 if n == 2 else int(rng.integers(1, n))
        assignment = _random_surjection(rng, n, n_fibers)
        mapping = {a: f"g{assignment[i]}" for i, a in enumerate(labels)}
        if kind == "sufficiency_matched":
            ratios = rng.uniform(0.25, 2.5, size=n_fibers)
            nu_w = mu_w * ratios[assignment]
            nu_w = nu_w / nu_w.sum()
        else:
            nu_w = _dirichlet(rng, n, budget.dirichlet_alpha)
        mu = FiniteDist(labels, mu_w)
        nu = FiniteDist(labels, nu_w)
        g = sufficiency_gap(div, nu, mu, mapping)
        if with_instance:
            inst_doc = {"nu": nu.as_json(), "mu": mu.as_json(), "map": mapping}
        return g.value, g.vacuous, None, inst_doc

    if kind == "refinement":
        from .divergence import refinement_monotonicity

        n0 = int(rng.integers(3, max(4, budget.max_e) + 1))
        labels = _labels("a", n0)
        mu = FiniteDist(labels, _dirichlet(rng, n0, budget.dirichlet_alpha))
        nu = FiniteDist(labels, _dirichlet(rng, n0, budget.dirichlet_alpha))
        n1 = int(rng.integers(2, n0))
        n2 = int(rng.integers(1, n1 + 1))
        m1 = {a: f"b{k}" for a, k in zip(labels, _random_surjection(rng, n0, n1))}
        m2 = {f"b{i}": f"c{k}" for i, k in enumerate(_random_surjection(rng, n1, n2))}
        values = refinement_monotonicity(div, nu, mu, [m1, m2])
        finite = [v for v in values if math.isfinite(v)]
        if len(finite) < 2:
            return None, True, None, None
        worst_step = min(
            values[i] - values[i + 1]
            for i in range(len(values) - 1)
            if math.isfinite(values[i]) and math.isfinite(values[i + 1])
        )
        if with_instance:
            inst_doc = {
                "nu": nu.as_json(),
                "mu": mu.as_json(),
                "maps": [m1, m2],
                "values": values,
            }
        return worst_step, False, None, inst_doc

    if kind == "lemma_identity":
        small = SearchBudget(
            trials=budget.trials,
            seed=budget.seed,
            max_e=min(4, budget.max_e),
            max_f=min(4, budget.max_f),
            dirichlet_alpha=budget.dirichlet_alpha,
            product_fraction=budget.product_fraction,
        )
        inst = sample_product_instance(rng, small)
        g = integral_lemma_gap(risk, inst.nu_bar, inst.mu_bar)
        if with_instance:
            inst_doc = inst.as_json()
        return g.value, g.vacuous, inst.is_product, inst_doc

    if kind == "key_identity":
        small = SearchBudget(
            trials=budget.trials,
            seed=budget.seed,
            max_e=min(4, budget.max_e),
            max_f=min(4, budget.max_f),
            dirichlet_alpha=budget.dirichlet_alpha,
            product_fraction=budget.product_fraction,
        )
        inst = sample_conditional_instance(rng, small)
        gap = key_identity_gap(risk, inst.joint, inst.values)
        if with_instance:
            inst_doc = inst.as_json()
        return gap, False, inst.is_product, inst_doc

    if kind == "lebesgue":
        n = int(rng.integers(2, budget.max_e + 1))
        labels = _labels("a", n)
        mu = FiniteDist(labels, _dirichlet(rng, n, budget.dirichlet_alpha))
        f = rng.choice(_value_grid(), size=n)
        h = rng.uniform(0.0, 1.0, size=n)
        rho_limit = rho_lifted(risk, mu, f)
        prev = math.inf
        mono_violation = 0.0
        last = rho_limit
        for k in range(15):
            eps = 4.0 ** (-k)
            val = rho_lifted(risk, mu, f + eps * h)
            mono_violation = max(mono_violation, val - prev)
            prev = val
            last = val
        gap = max(mono_violation, abs(last - rho_limit))
        if with_instance:
            inst_doc = {"mu": mu.as_json(), "f": list(map(float, f)), "h": list(map(float, h))}
        return gap, False, None, inst_doc

    raise UnknownFamilyError(f"unknown check kind {kind!r}")


@dataclass
class TrialStats:
    """Order-independent summary of a block of trials."""

    count: int = 0
    vacuous: int = 0
    worst_badness: float = -math.inf
    worst_trial: int | None = None
    worst_gap: float | None = None
    class_worst: dict | None = None  # label -> (badness, trial, gap)

    def merge(self, other: "TrialStats") -> "TrialStats":
        out = TrialStats(
            count=self.count + other.count,
            vacuous=self.vacuous + other.vacuous,
        )
        for side in (self, other):
            if side.worst_trial is None:
                continue
            if out.worst_trial is None or side.worst_badness > out.worst_badness or (
                side.worst_badness == out.worst_badness and side.worst_trial < out.worst_trial
            ):
                out.worst_badness = side.worst_badness
                out.worst_trial = side.worst_trial
                out.worst_gap = side.worst_gap
        merged: dict = {}
        for side in (self, other):
            for label, tup in (side.class_worst or {}).items():
                cur = merged.get(label)
                if cur is None or tup[0] > cur[0] or (tup[0] == cur[0] and tup[1] < cur[1]):
                    merged[label] = tup
        out.class_worst = merged or None
        return out


def _badness(kind: str, gap: float) -> float:
    return abs(gap) if CHECK_KINDS[kind]["side"] == "abs" else -gap


def run_trials(
    kind: str,
    risk: RiskSpec | None,
    div: DivergenceSpec | None,
    budget: SearchBudget,
    start: int,
    stop: int,
) -> TrialStats:
    """Evaluate trials [start, stop); summaries merge deterministically."""
    stats = TrialStats(class_worst={})
    for trial in range(start, stop):
        gap, vacuous, is_product, _ = _run_trial(kind, risk, div, budget, trial, False)
        stats.count += 1
        if vacuous or gap is None:
            stats.vacuous += 1
            continue
        bad = _badness(kind, gap)
        if stats.worst_trial is None or bad > stats.worst_badness:
            stats.worst_badness = bad
            stats.worst_trial = trial
            stats.worst_gap = gap
        if is_product is not None:
            label = "product" if is_product else "general"
            cur = stats.class_worst.get(label)
            if cur is None or bad > cur[0]:
                stats.class_worst[label] = (bad, trial, gap)
    if not stats.class_worst:
        stats.class_worst = None
    return stats


def describe_trial(
    kind: str,
    risk: RiskSpec | None,
    div: DivergenceSpec | None,
    budget: SearchBudget,
    trial: int,
) -> dict:
    """Replay one trial and serialize its instance together with its gap."""
    gap, vacuous, is_product, inst = _run_trial(kind, risk, div, budget, trial, True)
    doc = {"kind": kind, "trial": trial, "seed": budget.seed, "gap": gap, "vacuous": vacuous}
    if is_product is not None:
        doc["class"] = "product" if is_product else "general"
    if inst is not None:
        doc["instance"] = inst
    return doc


@dataclass(frozen=True)
class SearchResult:
    """Outcome of a seeded counterexample hunt."""

    target: str
    trials: int
    vacuous: int
    seed: int
    worst_gap: float | None
    worst_trial: int | None
    worst_instance: dict | None
    class_worst: dict | None

    def as_json(self) -> dict:
        return {
            "target": self.target,
            "trials": self.trials,
            "vacuous": self.vacuous,
            "seed": self.seed,
            "worst_gap": self.worst_gap,
            "worst_trial": self.worst_trial,
            "worst_instance": self.worst_instance,
            "class_worst": {
                k: {"badness": v[0], "trial": v[1], "gap": v[2]}
                for k, v in (self.class_worst or {}).items()
            }
            or None,
        }


def counterexample_search(
    spec: RiskSpec,
    budget: SearchBudget,
    target: str,
    divergence: DivergenceSpec | None = None,
) -> SearchResult:
    """Hunt for the most violating sampled instance of a consistency target.

    Deterministic given the budget seed; the returned instance replays from
    (seed, trial). With zero trials the result is empty and carries no
    verdict.
    """
    if target not in CHECK_KINDS:
        raise UnknownFamilyError(f"unknown search target {target!r}")
    needs = CHECK_KINDS[target]["needs"]
    div = divergence
    if needs == "div" and div is None:
        div = divergence_for_risk_spec(spec)
    stats = run_trials(target, spec, div, budget, 0, budget.trials)
    instance = None
    if stats.worst_trial is not None:
        instance = describe_trial(target, spec, div, budget, stats.worst_trial)
    return SearchResult(
        target=target,
        trials=stats.count,
        vacuous=stats.vacuous,
        seed=budget.seed,
        worst_gap=stats.worst_gap,
        worst_trial=stats.worst_trial,
        worst_instance=instance,
        class_worst=stats.class_worst,
    )
