"""Feature-function bases and order-free aggregate feature vectors.

A basis is a short list of scalar templates f: R -> R with closed-form
derivatives. Applying every template to every coordinate component of a
point set and averaging yields an aggregate vector that is independent of
the storage order of the set, which is what makes the whole estimation
pipeline correspondence-free.

Aggregation uses exactly-rounded summation (math.fsum), so permutation
invariance and duplication invariance hold bit-for-bit, not just to
rounding noise: the correctly rounded sum does not depend on summand
order, and doubling every summand scales it by exactly 2.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .exceptions import ZeroSpreadError
from .geometry import CorrespondenceModel, PointSet, PoseParams, map_points

N_COMPONENTS = 3  # every model output lives in R^3

# term kind -> (value, derivative), both as closed forms of precomputed pieces
_TERM_KINDS = ("x", "x2", "sin_pi", "cos_pi", "x_cos_pi", "sin2_pi")


@dataclass(frozen=True)
class Term:
    """One coefficient * primitive(x) summand of a scalar template."""

    kind: str
    coeff: float

    def __post_init__(self):
        if self.kind not in _TERM_KINDS:
            raise ValueError(f"unknown term kind {self.kind!r}; known: {_TERM_KINDS}")
        if not math.isfinite(self.coeff):
            raise ValueError("coefficient must be finite")


def _primitive_values(x: np.ndarray, kinds: set[str]) -> dict[str, np.ndarray]:
    out = {}
    if kinds & {"sin_pi", "sin2_pi", "x_cos_pi", "cos_pi"}:
        px = np.pi * x
        s = np.sin(px)
        c = np.cos(px)
        out["sin_pi"] = s
        out["cos_pi"] = c
        out["sin2_pi"] = s * s
        out["x_cos_pi"] = x * c
    out["x"] = x
    out["x2"] = x * x
    return out


def _primitive_derivs(x: np.ndarray, kinds: set[str]) -> dict[str, np.ndarray]:
    out = {}
    if kinds & {"sin_pi", "sin2_pi", "x_cos_pi", "cos_pi"}:
        px = np.pi * x
        s = np.sin(px)
        c = np.cos(px)
        out["sin_pi"] = np.pi * c
        out["cos_pi"] = -np.pi * s
        out["sin2_pi"] = np.pi * np.sin(2.0 * px)
        out["x_cos_pi"] = c - np.pi * x * s
    out["x"] = np.ones_like(x)
    out["x2"] = 2.0 * x
    return out


class TermFeature:
    """A scalar template assembled from :class:`Term` summands."""

    def __init__(self, terms: Sequence[Term]):
        if not terms:
            raise ValueError("a feature needs at least one term")
        self.terms = tuple(terms)

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        prim = _primitive_values(x, {t.kind for t in self.terms})
        out = np.zeros_like(x)
        for t in self.terms:
            out += t.coeff * prim[t.kind]
        return out

    def deriv(self, x):
        x = np.asarray(x, dtype=np.float64)
        prim = _primitive_derivs(x, {t.kind for t in self.terms})
        out = np.zeros_like(x)
        for t in self.terms:
            out += t.coeff * prim[t.kind]
        return out

    def to_json(self) -> list[dict]:
        return [{"kind": t.kind, "coeff": t.coeff} for t in self.terms]


class CallableFeature:
    """A user-supplied (value, derivative) pair of callables."""

    def __init__(self, fn: Callable, dfn: Callable):
        self.fn = fn
        self.dfn = dfn

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def deriv(self, x):
        return np.asarray(self.dfn(np.asarray(x, dtype=np.float64)), dtype=np.float64)


@dataclass(frozen=True)
class FeatureBasis:
    """An ordered tuple of scalar templates applied per coordinate component.

    With F templates and 3 components the aggregate vector has size 3 F;
    that size must be at least dim(theta) by solve time (checked there,
    not here, so partial bases can be built and extended freely).
    """

    functions: tuple
    name: str = "custom"

    def __post_init__(self):
        if len(self.functions) < 1:
            raise ValueError("basis needs at least one function")
        object.__setattr__(self, "functions", tuple(self.functions))

    @property
    def size(self) -> int:
        """Length of the aggregate vector this basis produces."""
        return len(self.functions) * N_COMPONENTS

    def values(self, comps: np.ndarray) -> np.ndarray:
        """Evaluate all templates on an array of components; adds a leading axis."""
        return np.stack([f(comps) for f in self.functions])

    def derivs(self, comps: np.ndarray) -> np.ndarray:
        return np.stack([f.deriv(comps) for f in self.functions])


# The stock six templates used throughout the benchmarks. Three have the
# odd form a*x + b*sin(pi x) + c*x*cos(pi x) and three the even form
# a*x^2 + b*sin^2(pi x) + c*cos(pi x); the x factor in the x*cos terms is
# the same component the rest of the template acts on.
_PAPER18_COEFFS = (
    (("x", -0.6578), ("sin_pi", -1.058), ("x_cos_pi", 0.123)),
    (("x2", -0.2567), ("sin2_pi", 0.3437), ("cos_pi", 1.286)),
    (("x2", -0.7620), ("sin2_pi", -1.288), ("cos_pi", 0.1921)),
    (("x", 1.245), ("sin_pi", -0.9539), ("x_cos_pi", -1.540)),
    (("x2", 2.998), ("sin2_pi", -1.620), ("cos_pi", 1.032)),
    (("x", -4.656), ("sin_pi", 2.290), ("x_cos_pi", -5.183)),
)


def default_basis_18() -> FeatureBasis:
    """The stock basis: six fixed templates, 18 aggregate features over R^3."""
    funcs = tuple(
        TermFeature([Term(kind, coeff) for kind, coeff in terms]) for terms in _PAPER18_COEFFS
    )
    return FeatureBasis(functions=funcs, name="paper18")


def basis_from_json(doc) -> FeatureBasis:
    """Load a basis from a JSON document (path, JSON text, or parsed object).

    Schema: {"name": str, "functions": [[{"kind": ..., "coeff": ...}, ...], ...]}
    """
    if isinstance(doc, (str, bytes)):
        text = doc
        try:
            obj = json.loads(text)
        except json.JSONDecodeError:
            with open(doc) as fh:
                obj = json.load(fh)
    else:
        obj = doc
    funcs = []
    for terms in obj["functions"]:
        funcs.append(TermFeature([Term(t["kind"], float(t["coeff"])) for t in terms]))
    return FeatureBasis(functions=tuple(funcs), name=obj.get("name", "custom"))


def basis_to_json(basis: FeatureBasis) -> dict:
    funcs = []
    for f in basis.functions:
        if not isinstance(f, TermFeature):
            raise ValueError("only term-based features serialize to JSON")
        funcs.append(f.to_json())
    return {"name": basis.name, "functions": funcs}


def get_basis(name: str) -> FeatureBasis:
    if name == "paper18":
        return default_basis_18()
    raise KeyError(f"unknown basis name {name!r}")


@dataclass(frozen=True)
class NormalizationStats:
    """Centering vector and scalar spread shared by both sides of a problem."""

    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        mu = np.asarray(self.mean, dtype=np.float64).reshape(3)
        object.__setattr__(self, "mean", mu)
        if not (self.sigma > 0.0):
            raise ValueError("sigma must be positive")

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.mean) / (2.0 * self.sigma)


@dataclass(frozen=True)
class AggregateFeatures:
    """Set-averaged feature values, laid out as values[i * 3 + c] for
    template i applied to component c."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(v)):
            raise ValueError("aggregate features must be finite")
        object.__setattr__(self, "values", v)


def _exact_means(feat: np.ndarray) -> np.ndarray:
    """Exactly rounded mean over the last axis of an (F, C, N) array."""
    f, c, n = feat.shape
    out = np.empty((f, c))
    for i in range(f):
        rows = feat[i].tolist()
        for j in range(c):
            out[i, j] = math.fsum(rows[j]) / n
    return out


def compute_stats(pts: np.ndarray) -> NormalizationStats:
    """Mean and norm-based spread (division by N - 1) of an (N, 3) array."""
    pts = np.asarray(pts, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("need at least two points to compute spread")
    mu = np.array([math.fsum(pts[:, c].tolist()) / n for c in range(3)])
    centered = pts - mu
    sq = np.einsum("nk,nk->n", centered, centered)
    sigma = math.sqrt(math.fsum(sq.tolist()) / (n - 1))
    if sigma < 1e-12:
        raise ZeroSpreadError(f"point spread {sigma:.3e} is below 1e-12")
    return NormalizationStats(mean=mu, sigma=sigma)


def normalize_bearing_set(raw: PointSet) -> tuple[PointSet, NormalizationStats]:
    """Center a set of unit bearings and scale by twice its norm spread.

    The stats are meant to be computed once, from the observation side,
    and reused for the mapped side so the aggregate equality between the
    two sides is preserved.
    """
    if len(raw) < 2:
        raise ValueError("need at least two bearings")
    norms = np.linalg.norm(raw.points, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("bearing set contains a near-zero vector")
    bearings = raw.points / norms[:, None]
    stats = compute_stats(bearings)
    return PointSet(3, stats.apply(bearings), raw.gray), stats


def aggregate(ps: PointSet, basis: FeatureBasis) -> AggregateFeatures:
    """Average every template over every coordinate component of the set.

    The result is exactly independent of point order and of duplicating
    the whole set.
    """
    comps = ps.points.T  # (3, N)
    feat = basis.values(comps)  # (F, 3, N)
    return AggregateFeatures(_exact_means(feat).reshape(-1))


def aggregate_mapped(
    ps: PointSet,
    model: CorrespondenceModel,
    theta: PoseParams,
    basis: FeatureBasis,
    stats: NormalizationStats | None = None,
) -> AggregateFeatures:
    """Aggregate of the mapped set h(p_k, theta), averaged over its own
    cardinality, so the two sides of a problem may have different sizes."""
    mapped = map_points(model, ps.points, theta)
    if stats is not None:
        mapped = stats.apply(mapped)
    feat = basis.values(mapped.T)
    return AggregateFeatures(_exact_means(feat).reshape(-1))
