"""Finite probability spaces: distributions, kernels, products, conditioning.

Everything downstream (risk evaluation, divergences, consistency checks)
reduces to arithmetic on the types defined here. Atom labels are opaque and
ordered; two spaces are "the same" exactly when their label tuples are equal.
Weights are validated on construction: tiny negatives (>= -1e-15) are clamped
to zero, totals within 1e-9 of 1 are renormalized exactly, and anything worse
raises. All values are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DivLabError,
    DuplicateAtomError,
    InvalidPartitionError,
    LengthMismatchError,
    NegativeWeightError,
    NotAbsolutelyContinuousError,
    SpaceMismatchError,
    TotalMassError,
    UnmappedAtomError,
    ZeroTotalMassError,
)

NEGATIVE_CLAMP = -1e-15
TOTAL_MASS_TOL = 1e-9
INVARIANT_TOL = 1e-12

Atom = Any


def _clean_weights(weights: Sequence[float], n_atoms: int) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.shape[0] != n_atoms:
        raise LengthMismatchError(
            f"expected {n_atoms} weights, got shape {w.shape}"
        )
    if not np.all(np.isfinite(w)):
        raise NegativeWeightError("weights must be finite")
    if np.any(w < NEGATIVE_CLAMP):
        raise NegativeWeightError(
            f"negative weight {w.min():.3e} below clamp threshold {NEGATIVE_CLAMP:.0e}"
        )
    w = np.maximum(w, 0.0)
    total = float(w.sum())
    if total <= 0.0:
        raise ZeroTotalMassError("weights sum to zero")
    if abs(total - 1.0) > TOTAL_MASS_TOL:
        raise TotalMassError(
            f"weights sum to {total!r}, outside 1 +/- {TOTAL_MASS_TOL:.0e}"
        )
    w = w / total
    w.flags.writeable = False
    return w


@dataclass(frozen=True, eq=False)
class FiniteDist:
    """A probability measure on a finite, ordered, labeled atom set.

    ``atoms`` are opaque hashable labels; ``weights`` is the matching
    probability vector. For laws of real random variables the atoms are the
    (float) support points themselves.
    """

    atoms: tuple
    weights: np.ndarray

    def __init__(self, atoms: Iterable[Atom], weights: Sequence[float]):
        atoms = tuple(atoms)
        if len(set(atoms)) != len(atoms):
            raise DuplicateAtomError("atom labels must be distinct")
        w = _clean_weights(weights, len(atoms))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @cached_property
    def _index(self) -> dict:
        return {a: i for i, a in enumerate(self.atoms)}

    def __len__(self) -> int:
        return len(self.atoms)

    def weight(self, atom: Atom) -> float:
        return float(self.weights[self._index[atom]])

    def support(self) -> tuple:
        """Atoms carrying strictly positive mass."""
        return tuple(a for a, w in zip(self.atoms, self.weights) if w > 0.0)

    def values_array(self) -> np.ndarray:
        """Atoms coerced to floats; valid only for laws on the real line."""
        try:
            return np.asarray([float(a) for a in self.atoms], dtype=float)
        except (TypeError, ValueError) as exc:
            raise DivLabError(f"atoms of this distribution are not numbers: {exc}")

    def is_close(self, other: "FiniteDist", tol: float = INVARIANT_TOL) -> bool:
        return self.atoms == other.atoms and bool(
            np.all(np.abs(self.weights - other.weights) <= tol)
        )

    def as_json(self) -> dict:
        return {"atoms": list(self.atoms), "weights": [float(w) for w in self.weights]}

    @classmethod
    def from_json(cls, doc: Mapping) -> "FiniteDist":
        return cls(doc["atoms"], doc["weights"])


def make_dist(atoms: Iterable[Atom], weights: Sequence[float]) -> FiniteDist:
    return FiniteDist(atoms, weights)


def uniform(atoms: Iterable[Atom]) -> FiniteDist:
    atoms = tuple(atoms)
    return FiniteDist(atoms, np.full(len(atoms), 1.0 / len(atoms)))


def point_mass(atom: Atom) -> FiniteDist:
    return FiniteDist((atom,), [1.0])


@dataclass(frozen=True, eq=False)
class RandomVariable:
    """Real values attached atom-by-atom to a finite space."""

    values: tuple

    def __init__(self, values: Sequence[float]):
        object.__setattr__(self, "values", tuple(float(v) for v in values))

    @classmethod
    def from_function(cls, dist: FiniteDist, fn: Callable[[Atom], float]) -> "RandomVariable":
        return cls([fn(a) for a in dist.atoms])


def _as_values(f, n: int) -> np.ndarray:
    vals = f.values if isinstance(f, RandomVariable) else f
    arr = np.asarray(vals, dtype=float)
    if arr.ndim != 1 or arr.shape[0] != n:
        raise LengthMismatchError(f"expected {n} values, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class Kernel:
    """A row-stochastic family of distributions on a common target space.

    Row ``i`` is the distribution of the next state given source atom
    ``source[i]``. Rows are validated exactly like :class:`FiniteDist`.
    """

    source: tuple
    target: tuple
    matrix: np.ndarray

    def __init__(self, source: Iterable[Atom], target: Iterable[Atom], rows: Sequence[Sequence[float]]):
        source = tuple(source)
        target = tuple(target)
        if len(set(source)) != len(source):
            raise DuplicateAtomError("kernel source labels must be distinct")
        if len(set(target)) != len(target):
            raise DuplicateAtomError("kernel target labels must be distinct")
        mat = np.asarray(rows, dtype=float)
        if mat.ndim != 2 or mat.shape != (len(source), len(target)):
            raise LengthMismatchError(
                f"kernel rows have shape {mat.shape}, expected {(len(source), len(target))}"
            )
        mat = np.vstack([_clean_weights(mat[i], len(target)) for i in range(len(source))])
        mat.flags.writeable = False
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "matrix", mat)

    def row(self, i: int) -> FiniteDist:
        return FiniteDist(self.target, self.matrix[i])

    def rows(self) -> list[FiniteDist]:
        return [self.row(i) for i in range(len(self.source))]

    @classmethod
    def deterministic(cls, source: Iterable[Atom], mapping, target: Iterable[Atom] | None = None) -> "Kernel":
        """The kernel x -> delta_{T(x)}; raises if T misses an atom."""
        source = tuple(source)
        images = [_apply_map(mapping, a) for a in source]
        if target is None:
            target = _first_appearance(images)
        target = tuple(target)
        idx = {a: i for i, a in enumerate(target)}
        mat = np.zeros((len(source), len(target)))
        for i, y in enumerate(images):
            if y not in idx:
                raise UnmappedAtomError(f"image {y!r} not in target atom set")
            mat[i, idx[y]] = 1.0
        return cls(source, target, mat)

    @classmethod
    def constant(cls, source: Iterable[Atom], dist: FiniteDist) -> "Kernel":
        source = tuple(source)
        mat = np.tile(dist.weights, (len(source), 1))
        return cls(source, dist.atoms, mat)

    def as_json(self) -> dict:
        return {
            "source": list(self.source),
            "target": list(self.target),
            "rows": [[float(x) for x in row] for row in self.matrix],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "Kernel":
        return cls(doc["source"], doc["target"], doc["rows"])


@dataclass(frozen=True, eq=False)
class JointDist:
    """A distribution on a product of two labeled atom sets.

    Stored as a weight matrix indexed by (row atom, column atom); the pair
    structure is primary, so disintegration is a reshape rather than a parse.
    """

    row_atoms: tuple
    col_atoms: tuple
    matrix: np.ndarray

    def __init__(self, row_atoms: Iterable[Atom], col_atoms: Iterable[Atom], matrix: Sequence[Sequence[float]]):
        row_atoms = tuple(row_atoms)
        col_atoms = tuple(col_atoms)
        if len(set(row_atoms)) != len(row_atoms) or len(set(col_atoms)) != len(col_atoms):
            raise DuplicateAtomError("joint atom labels must be distinct")
        mat = np.asarray(matrix, dtype=float)
        if mat.ndim != 2 or mat.shape != (len(row_atoms), len(col_atoms)):
            raise LengthMismatchError(
                f"joint matrix has shape {mat.shape}, expected {(len(row_atoms), len(col_atoms))}"
            )
        flat = _clean_weights(mat.reshape(-1), mat.size)
        mat = flat.reshape(mat.shape)
        mat.flags.writeable = False
        object.__setattr__(self, "row_atoms", row_atoms)
        object.__setattr__(self, "col_atoms", col_atoms)
        object.__setattr__(self, "matrix", mat)

    @property
    def pairs(self) -> tuple:
        return tuple((x, y) for x in self.row_atoms for y in self.col_atoms)

    def as_dist(self) -> FiniteDist:
        """The same measure as a flat distribution on pair atoms."""
        return FiniteDist(self.pairs, self.matrix.reshape(-1))

    def row_marginal(self) -> FiniteDist:
        return FiniteDist(self.row_atoms, self.matrix.sum(axis=1))

    def col_marginal(self) -> FiniteDist:
        return FiniteDist(self.col_atoms, self.matrix.sum(axis=0))

    def as_json(self) -> dict:
        return {
            "row_atoms": list(self.row_atoms),
            "col_atoms": list(self.col_atoms),
            "weights": [[float(x) for x in row] for row in self.matrix],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "JointDist":
        return cls(doc["row_atoms"], doc["col_atoms"], doc["weights"])


@dataclass(frozen=True)
class Partition:
    """Disjoint nonempty blocks covering an atom set."""

    blocks: tuple

    def __init__(self, blocks: Iterable[Iterable[Atom]]):
        blocks = tuple(tuple(b) for b in blocks)
        object.__setattr__(self, "blocks", blocks)

    def validate_against(self, atoms: Sequence[Atom]) -> None:
        seen: set = set()
        for b in self.blocks:
            if not b:
                raise InvalidPartitionError("empty block")
            for a in b:
                if a in seen:
                    raise InvalidPartitionError(f"atom {a!r} appears in two blocks")
                seen.add(a)
        if seen != set(atoms):
            raise InvalidPartitionError("blocks do not cover the atom set exactly")

    @classmethod
    def trivial(cls, atoms: Iterable[Atom]) -> "Partition":
        return cls((tuple(atoms),))

    @classmethod
    def finest(cls, atoms: Iterable[Atom]) -> "Partition":
        return cls(tuple((a,) for a in atoms))

    def as_json(self) -> dict:
        return {"blocks": [list(b) for b in self.blocks]}

    @classmethod
    def from_json(cls, doc: Mapping) -> "Partition":
        return cls(doc["blocks"])


def _apply_map(mapping, atom: Atom):
    if callable(mapping):
        try:
            return mapping(atom)
        except (KeyError, IndexError) as exc:
            raise UnmappedAtomError(f"map undefined at atom {atom!r}") from exc
    try:
        return mapping[atom]
    except (KeyError, IndexError, TypeError) as exc:
        raise UnmappedAtomError(f"map undefined at atom {atom!r}") from exc


def _first_appearance(labels: Iterable[Atom]) -> tuple:
    out = []
    seen = set()
    for lab in labels:
        if lab not in seen:
            seen.add(lab)
            out.append(lab)
    return tuple(out)


def pushforward(mu: FiniteDist, mapping) -> FiniteDist:
    """The image measure mu o T^{-1}; target atoms in first-appearance order."""
    images = [_apply_map(mapping, a) for a in mu.atoms]
    target = _first_appearance(images)
    idx = {a: i for i, a in enumerate(target)}
    w = np.zeros(len(target))
    for i, y in enumerate(images):
        w[idx[y]] += mu.weights[i]
    return FiniteDist(target, w)


def law_of(mu: FiniteDist, f) -> FiniteDist:
    """The law of a real random variable: pushforward along its values."""
    vals = _as_values(f, len(mu))
    return pushforward(mu, lambda a: float(vals[mu._index[a]]))


def compose_kernel(mu: FiniteDist, kernel: Kernel) -> tuple[JointDist, FiniteDist]:
    """Couple mu with a kernel: joint weight (x,y) -> mu(x) K_x(y).

    Returns the joint measure and its target marginal (the mean measure).
    """
    if kernel.source != mu.atoms:
        raise SpaceMismatchError("kernel source does not match the atom set of mu")
    joint = JointDist(mu.atoms, kernel.target, mu.weights[:, None] * kernel.matrix)
    marginal = FiniteDist(kernel.target, mu.weights @ kernel.matrix)
    return joint, marginal


def disintegrate(joint: JointDist) -> tuple[FiniteDist, Kernel]:
    """Split a joint measure into its row marginal and a conditional kernel.

    Rows at zero-marginal atoms are set to the uniform distribution: any
    choice is almost-surely equivalent and uniform is reproducible.
    """
    marg = joint.matrix.sum(axis=1)
    n_f = len(joint.col_atoms)
    rows = np.empty_like(joint.matrix)
    for i, m in enumerate(marg):
        if m > 0.0:
            rows[i] = joint.matrix[i] / m
        else:
            rows[i] = 1.0 / n_f
    return FiniteDist(joint.row_atoms, marg), Kernel(joint.row_atoms, joint.col_atoms, rows)


def radon_nikodym(nu: FiniteDist, mu: FiniteDist) -> np.ndarray:
    """Densities d(nu)/d(mu) atom by atom.

    Atoms where both measures vanish get density 0 by convention. Mass of nu
    outside the support of mu raises; divergence-layer callers translate that
    into the value +inf.
    """
    if nu.atoms != mu.atoms:
        raise SpaceMismatchError("radon_nikodym requires a common atom set")
    bad = (nu.weights > 0.0) & (mu.weights == 0.0)
    if np.any(bad):
        raise NotAbsolutelyContinuousError(
            f"nu has mass at atoms {[mu.atoms[i] for i in np.nonzero(bad)[0]]} where mu vanishes"
        )
    dens = np.zeros(len(mu))
    pos = mu.weights > 0.0
    dens[pos] = nu.weights[pos] / mu.weights[pos]
    return dens


@dataclass(frozen=True)
class ConditionalBlock:
    block: tuple
    weight: float
    law: FiniteDist


def condition(mu: FiniteDist, f, partition: Partition) -> list[ConditionalBlock]:
    """Conditional laws of a real variable given each positive-weight block.

    Zero-weight blocks are omitted; they are almost-surely irrelevant and any
    value assigned to them would be an arbitrary constant.
    """
    partition.validate_against(mu.atoms)
    vals = _as_values(f, len(mu))
    out = []
    for block in partition.blocks:
        ids = [mu._index[a] for a in block]
        w = float(mu.weights[ids].sum())
        if w <= 0.0:
            continue
        law = pushforward(
            FiniteDist([mu.atoms[i] for i in ids], mu.weights[ids] / w),
            {mu.atoms[i]: float(vals[i]) for i in ids},
        )
        out.append(ConditionalBlock(block=block, weight=w, law=law))
    return out


def mixture(components: Sequence[tuple[float, FiniteDist]]) -> FiniteDist:
    """Weighted mixture of laws on the real line, merging equal support points."""
    acc: dict[float, float] = {}
    order: list[float] = []
    total = 0.0
    for q, law in components:
        if q < 0:
            raise NegativeWeightError("mixture weights must be nonnegative")
        total += q
        for a, w in zip(law.atoms, law.weights):
            v = float(a)
            if v not in acc:
                acc[v] = 0.0
                order.append(v)
            acc[v] += q * float(w)
    if abs(total - 1.0) > TOTAL_MASS_TOL:
        raise TotalMassError(f"mixture weights sum to {total!r}")
    return FiniteDist(order, [acc[v] for v in order])


def shift_law(law: FiniteDist, c: float) -> FiniteDist:
    """The law of X + c."""
    return FiniteDist([float(a) + c for a in law.atoms], law.weights)


def check_convex_order(m1: FiniteDist, m2: FiniteDist, tol: float = 1e-10) -> bool:
    """Finite-support convex order test: equal means and dominated stop-loss.

    ``m1 <=cx m2`` iff E[(X-a)+] under m1 is at most that under m2 for every
    a in the union of supports, and the means agree within ``tol``.
    """
    v1, w1 = m1.values_array(), m1.weights
    v2, w2 = m2.values_array(), m2.weights
    if abs(float(v1 @ w1) - float(v2 @ w2)) > tol:
        return False
    grid = np.union1d(v1, v2)
    sl1 = np.maximum(v1[None, :] - grid[:, None], 0.0) @ w1
    sl2 = np.maximum(v2[None, :] - grid[:, None], 0.0) @ w2
    return bool(np.all(sl1 <= sl2 + tol))
