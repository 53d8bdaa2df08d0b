"""Supports, canonical cones and sparse vectors.

The combinatorial side of every sparse model used here: an index set
I ⊆ {0, ..., N-1}, the canonical subspace span{e_i, i ∈ I}, and its
positive-orthant restriction {x ∈ span{e_i} : x_i >= 0}.  All types are
immutable value objects; the samplers are pure functions of (spec, seed).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

SUBSPACE = "subspace"
POSITIVE_ORTHANT = "positive_orthant"
CONE_KINDS = (SUBSPACE, POSITIVE_ORTHANT)


@dataclass(frozen=True)
class Support:
    """Sorted index set modulo an ambient dimension.

    `indices` must be strictly increasing, each in [0, ambient_dim).  The
    empty support is forbidden.  Sizes 1 are accepted everywhere although
    the embedding guarantees downstream assume sizes >= 2; the bounds
    module enforces that range where it matters.
    """

    indices: tuple
    ambient_dim: int

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        n = self.ambient_dim
        if n < 1:
            raise ValueError(f"ambient_dim must be positive, got {n}")
        if len(idx) == 0:
            raise ValueError("empty support is forbidden")
        if any(i < 0 or i >= n for i in idx):
            raise ValueError(f"indices {idx} out of range [0, {n})")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError(f"indices {idx} must be strictly increasing")

    @property
    def size(self) -> int:
        return len(self.indices)

    def as_array(self) -> np.ndarray:
        return np.array(self.indices, dtype=int)

    def to_json(self) -> dict:
        return {"n": self.ambient_dim, "indices": list(self.indices)}

    @staticmethod
    def from_json(obj: dict) -> "Support":
        return Support(tuple(obj["indices"]), int(obj["n"]))


@dataclass(frozen=True)
class ConeSpec:
    """A canonical cone: the subspace span{e_i, i ∈ I} or its positive orthant.

    The positive orthant is a convex cone (closed under nonnegative
    scaling); the subspace is the full span.
    """

    support: Support
    kind: str

    def __post_init__(self):
        if self.kind not in CONE_KINDS:
            raise ValueError(f"kind must be one of {CONE_KINDS}, got {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.support.size

    @property
    def ambient_dim(self) -> int:
        return self.support.ambient_dim

    def to_json(self) -> dict:
        return {
            "n": self.support.ambient_dim,
            "indices": list(self.support.indices),
            "kind": self.kind,
        }

    @staticmethod
    def from_json(obj: dict) -> "ConeSpec":
        return ConeSpec(Support(tuple(obj["indices"]), int(obj["n"])), obj["kind"])


@dataclass(frozen=True)
class SparseVector:
    """Dense length-N vector together with the support it is declared on.

    Invariant: every nonzero entry lies inside `declared_support`, hence
    the sparsity ||x||_0 is at most the declared support size.
    """

    values: np.ndarray
    declared_support: Support

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        n = self.declared_support.ambient_dim
        if vals.shape != (n,):
            raise ValueError(f"values must have shape ({n},), got {vals.shape}")
        outside = np.setdiff1d(np.flatnonzero(vals), self.declared_support.as_array())
        if outside.size:
            raise ValueError(f"nonzero entries at {outside.tolist()} outside declared support")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))

    @property
    def sparsity(self) -> int:
        """Number of nonzero entries (the l0 functional)."""
        return int(np.count_nonzero(self.values))


def support_from_indices(indices: Iterable[int], n: int) -> Support:
    """Build a Support from an arbitrary iterable (sorted and deduplicated)."""
    return Support(tuple(sorted(set(int(i) for i in indices))), n)


def support_sum(i_set: Support, j_set: Support) -> Support:
    """Modular sumset I ⊕ J = {(i + j) mod N : i ∈ I, j ∈ J}.

    This is exactly the support of the image of the coordinate subspaces
    under circular convolution.  |I ⊕ J| <= min(N, |I|·|J|).
    """
    n = i_set.ambient_dim
    if j_set.ambient_dim != n:
        raise ValueError(
            f"ambient dims differ: {n} vs {j_set.ambient_dim}"
        )
    sums = {(i + j) % n for i in i_set.indices for j in j_set.indices}
    return Support(tuple(sorted(sums)), n)


def is_properly_separated(i_set: Support, j_set: Support) -> bool:
    """True iff the sumset does not collide: |I ⊕ J| = |I|·|J|.

    On properly separated support pairs the circular convolution is
    norm-multiplicative (its image is isometric to simple tensors).
    """
    return support_sum(i_set, j_set).size == i_set.size * j_set.size


def unit_cone_directions(cone: ConeSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` unit vectors uniformly from the cone's sphere section.

    Returns a (count, N) dense array.  Subspace: gaussian direction on the
    support coordinates, normalized.  Positive orthant: absolute value of
    the same construction, which is exactly uniform on the orthant section
    of the sphere by symmetry of the gaussian.
    """
    s = cone.dim
    g = rng.standard_normal((count, s))
    norms = np.linalg.norm(g, axis=1)
    # resample the (measure-zero) degenerate rows
    while np.any(norms < 1e-12):
        bad = norms < 1e-12
        g[bad] = rng.standard_normal((int(bad.sum()), s))
        norms = np.linalg.norm(g, axis=1)
    g /= norms[:, None]
    if cone.kind == POSITIVE_ORTHANT:
        np.abs(g, out=g)
    out = np.zeros((count, cone.ambient_dim))
    out[:, cone.support.as_array()] = g
    return out


def sample_cone(cone: ConeSpec, rng_seed: int, norm: float = 1.0) -> SparseVector:
    """Deterministic uniform sample from the cone ∩ sphere of radius `norm`.

    Repeated calls with the same seed return the identical vector.
    """
    if norm <= 0:
        raise ValueError(f"norm must be positive, got {norm}")
    rng = np.random.default_rng(rng_seed)
    direction = unit_cone_directions(cone, 1, rng)[0]
    return SparseVector(norm * direction, cone.support)
