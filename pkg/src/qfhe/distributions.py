"""Truncated discrete Gaussians over Z_q, finite densities and their distances.

The one-dimensional Gaussian of width B puts weight proportional to
exp(-pi x^2 / B^2) on the integers |x| <= B and nothing elsewhere; the
k-dimensional version is the product of k independent copies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Hashable, Iterable, Mapping

import numpy as np

from .errors import DimensionError


def support_radius(B: float) -> int:
    return int(math.floor(B))


@lru_cache(maxsize=16)
def _table(B: float) -> tuple[np.ndarray, np.ndarray]:
    """(support points, normalised pmf) for the 1-D truncated Gaussian."""
    r = support_radius(B)
    xs = np.arange(-r, r + 1, dtype=np.int64)
    logw = -math.pi * (xs.astype(np.float64) / B) ** 2
    # log-domain normaliser; the maximum is 0 at the origin
    log_z = np.logaddexp.reduce(logw)
    pmf = np.exp(logw - log_z)
    xs.setflags(write=False)
    pmf.setflags(write=False)
    return xs, pmf


@lru_cache(maxsize=16)
def _log_normaliser(B: float) -> float:
    xs, _ = _table(B)
    return float(np.logaddexp.reduce(-math.pi * (xs.astype(np.float64) / B) ** 2))


def gaussian_log_weight(x, B: float) -> np.ndarray:
    """Unnormalised log-density -pi ||x||^2 / B^2 over the last axis, -inf off support."""
    a = np.asarray(x, dtype=np.float64)
    r = support_radius(B)
    inside = np.all(np.abs(a) <= r, axis=-1)
    lw = -math.pi * np.sum((a / B) ** 2, axis=-1)
    return np.where(inside, lw, -np.inf)


def gaussian_pmf(x, B: float, q: int | None = None) -> float:
    """Probability of the integer vector x (entries taken in balanced form mod q).

    Entries are first reduced into (-q/2, q/2] when q is given, so a shift
    that wraps around the modulus is handled as on Z_q.
    """
    a = np.atleast_1d(np.asarray(x, dtype=np.int64))
    if q is not None:
        r = a & np.int64(q - 1)
        a = np.where(r > q // 2, r - q, r)
    if np.any(np.abs(a) > support_radius(B)):
        return 0.0
    log_z = _log_normaliser(B)
    return float(np.exp(-math.pi * np.sum((a / B) ** 2) - a.size * log_z))


def cumulative_weights(B: float, q: int | None = None, order: str = "balanced") -> np.ndarray:
    """Prefix sums of the 1-D pmf, starting with 0 and ending at 1.

    ``order="balanced"`` walks the support -r..r.  ``order="residue"``
    walks all of 0..q-1 (negative points appear at q - |x|), which is the
    order a little-endian register stores them in.
    """
    xs, pmf = _table(float(B))
    if order == "balanced":
        weights = pmf
    elif order == "residue":
        if q is None:
            raise ValueError("residue order needs q")
        weights = np.zeros(q, dtype=np.float64)
        weights[xs % q] = pmf
    else:
        raise ValueError(f"unknown order {order!r}")
    out = np.empty(len(weights) + 1, dtype=np.float64)
    out[0] = 0.0
    np.cumsum(weights, out=out[1:])
    return out


@lru_cache(maxsize=16)
def _balanced_cdf(B: float) -> np.ndarray:
    cdf = cumulative_weights(B)
    cdf.setflags(write=False)
    return cdf


def gaussian_sample(B: float, q: int | None, k: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw k i.i.d. coordinates (or ``size`` x k) by inverse CDF on the exact table."""
    xs, _ = _table(float(B))
    cdf = _balanced_cdf(float(B))
    shape = (k,) if size is None else (size, k)
    u = rng.random(shape) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right") - 1
    idx = np.clip(idx, 0, len(xs) - 1)
    return xs[idx]


@dataclass(frozen=True)
class TruncGaussian:
    """D_{Z_q^k, B}."""

    q: int
    B: float
    k: int = 1

    def pmf(self, x) -> float:
        return gaussian_pmf(x, self.B, self.q)

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        return gaussian_sample(self.B, self.q, self.k, rng, size)

    def density(self) -> "Density":
        """Full density over Z_q^k (only sensible for tiny q^k)."""
        pts = _zq_points(self.q, self.k)
        return Density(pts, np.array([self.pmf(p) for p in pts]))

    def shifted_density(self, shift) -> "Density":
        """Density of x + shift mod q for x drawn from this Gaussian."""
        pts = _zq_points(self.q, self.k)
        s = np.asarray(shift, dtype=np.int64)
        return Density(pts, np.array([self.pmf(np.asarray(p) - s) for p in pts]))


def _zq_points(q: int, k: int) -> tuple:
    half = q // 2
    vals = range(-half + 1, half + 1)
    grids = np.array(np.meshgrid(*([list(vals)] * k), indexing="ij")).reshape(k, -1).T
    return tuple(tuple(int(v) for v in row) for row in grids)


class Density:
    """A probability density on an explicit finite domain."""

    __slots__ = ("domain", "weights", "_index")

    def __init__(self, domain: Iterable[Hashable], weights, tol: float = 1e-12):
        self.domain = tuple(domain)
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(self.domain),):
            raise DimensionError("one weight per domain point required")
        if np.any(w < 0):
            raise ValueError("negative weight")
        if abs(w.sum() - 1.0) > tol:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        self.weights = w
        self._index = None

    @classmethod
    def from_mapping(cls, mapping: Mapping[Hashable, float], domain: Iterable[Hashable] | None = None, tol: float = 1e-12):
        pts = tuple(mapping.keys()) if domain is None else tuple(domain)
        extra = set(mapping) - set(pts)
        if extra:
            raise DimensionError(f"mapping has points outside the domain: {sorted(extra)[:3]}")
        return cls(pts, [mapping.get(p, 0.0) for p in pts], tol)

    def support(self) -> tuple:
        return tuple(p for p, w in zip(self.domain, self.weights) if w > 0)

    def prob(self, event: Iterable[Hashable]) -> float:
        if self._index is None:
            self._index = {p: i for i, p in enumerate(self.domain)}
        return float(sum(self.weights[self._index[p]] for p in set(event)))

    def aligned(self, other: "Density") -> np.ndarray:
        """other's weights in this domain's order, raising on mismatched domains."""
        if other.domain == self.domain:
            return other.weights
        if set(other.domain) != set(self.domain) or len(other.domain) != len(self.domain):
            raise DimensionError("densities live on different domains")
        lookup = dict(zip(other.domain, other.weights))
        return np.array([lookup[p] for p in self.domain])


def hellinger2(f1: Density, f2: Density) -> float:
    """Squared Hellinger distance 1 - sum sqrt(f1 f2)."""
    w2 = f1.aligned(f2)
    bc = float(np.sum(np.sqrt(f1.weights * w2)))
    return max(0.0, 1.0 - bc)


def tv_distance(f1: Density, f2: Density) -> float:
    w2 = f1.aligned(f2)
    return 0.5 * float(np.sum(np.abs(f1.weights - w2)))


def shift_bound(shift, B: float) -> float:
    """Upper bound 1 - exp(-2 pi sqrt(k) ||e|| / B) on H^2(D, D+e)."""
    e = np.asarray(shift, dtype=np.float64).ravel()
    return 1.0 - math.exp(-2 * math.pi * math.sqrt(e.size) * float(np.linalg.norm(e)) / B)


def trace_distance_from_hellinger(h2: float) -> float:
    """Trace distance of the two real superpositions sum sqrt(f)|x>: sqrt(1 - (1-H^2)^2)."""
    return math.sqrt(max(0.0, 1.0 - (1.0 - h2) ** 2))


def empirical_density(samples: Iterable[Hashable], domain: Iterable[Hashable] | None = None) -> Density:
    counts: dict = {}
    total = 0
    for s in samples:
        counts[s] = counts.get(s, 0) + 1
        total += 1
    if total == 0:
        raise ValueError("no samples")
    pts = tuple(counts) if domain is None else tuple(domain)
    return Density.from_mapping({p: c / total for p, c in counts.items()}, pts, tol=1e-9)


def tv_between_laws(p: Mapping[Hashable, float], r: Mapping[Hashable, float]) -> float:
    """TV between two laws given as sparse mappings over a shared implicit domain."""
    keys = set(p) | set(r)
    return 0.5 * sum(abs(p.get(k, 0.0) - r.get(k, 0.0)) for k in keys)
