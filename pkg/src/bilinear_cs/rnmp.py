"""Estimation of restricted norm multiplicativity constants.

For a bilinear map T restricted to a cone pair (X, Y) the quantities of
interest are the extreme values of the ratio

    r(x, y) = ||T(x, y)|| / (||x|| ||y||),   (x, y) nonzero in X x Y.

`alpha` is the pairwise infimum of r over the cone pair and `beta` the
supremum.  The infimum computed here ranges over all nonzero pairs, which
is a conservative lower bound for the representation-optimized constant;
it keeps every probability bound built on top of it valid.

Three estimators with different trade-offs:

  estimate_brute        random unit pairs; alpha upper / beta lower bounds
  estimate_alternating  block coordinate descent on singular directions
  certify_exhaustive    deterministic angular grid (small dimensions only)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .bilinear_ops import (
    CIRCULAR_CONVOLUTION,
    POINTWISE,
    BilinearMapSpec,
    apply_map,
    apply_map_batch,
)
from .sparse_model import POSITIVE_ORTHANT, ConeSpec, Support, unit_cone_directions

GRID_GUARD = 10 ** 8
_BATCH = 20_000


@dataclass(frozen=True)
class RnmpEstimate:
    """Estimated multiplicativity constants with attaining direction pairs.

    Witnesses are unit-norm vectors supported on the declared cones; each
    reproduces its reported constant within `tol` when the ratio is
    re-evaluated.  `converged` is False when the alternating method hit
    its iteration cap before the improvement dropped below tol.
    """

    support_pair: Tuple[Support, Support]
    cone_kinds: Tuple[str, str]
    alpha_est: float
    beta_est: float
    alpha_witness: Tuple[np.ndarray, np.ndarray]
    beta_witness: Tuple[np.ndarray, np.ndarray]
    method: str  # brute | alternating | grid
    restarts: int
    tol: float
    converged: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha_est <= self.beta_est:
            raise ValueError(
                f"need 0 <= alpha <= beta, got alpha={self.alpha_est}, beta={self.beta_est}"
            )

    @property
    def multiplicative(self) -> bool:
        """Whether the estimates collapse to alpha = beta within tol."""
        return abs(self.beta_est - self.alpha_est) <= self.tol

    def to_json(self) -> dict:
        return {
            "support_x": self.support_pair[0].to_json(),
            "support_y": self.support_pair[1].to_json(),
            "cone_kinds": list(self.cone_kinds),
            "alpha_est": self.alpha_est,
            "beta_est": self.beta_est,
            "alpha_witness_x": self.alpha_witness[0].tolist(),
            "alpha_witness_y": self.alpha_witness[1].tolist(),
            "beta_witness_x": self.beta_witness[0].tolist(),
            "beta_witness_y": self.beta_witness[1].tolist(),
            "method": self.method,
            "restarts": self.restarts,
            "tol": self.tol,
            "converged": self.converged,
        }


def norm_ratio(spec: BilinearMapSpec, x, y) -> float:
    """||T(x,y)|| / (||x|| ||y||); 0-homogeneous in each argument."""
    xv = np.asarray(getattr(x, "values", x), dtype=float)
    yv = np.asarray(getattr(y, "values", y), dtype=float)
    nx = np.linalg.norm(xv)
    ny = np.linalg.norm(yv)
    if nx == 0 or ny == 0:
        raise ValueError("ratio undefined for zero vectors")
    return float(np.linalg.norm(apply_map(spec, xv, yv)) / (nx * ny))


def matricize(spec: BilinearMapSpec, j_set: Support, x) -> np.ndarray:
    """Matrix A(x) with columns T(x, e_j), j ∈ J, so T(x, y) = A(x) y_J.

    Linearity of T(x, ·) makes the restricted map an ordinary matrix;
    singular values of A(x) are the ratio extremes over y for fixed x.
    """
    n = spec.ambient_dim
    xv = np.asarray(getattr(x, "values", x), dtype=float)
    if xv.shape != (n,):
        raise ValueError(f"x must have length {n}")
    if spec.kind == CIRCULAR_CONVOLUTION:
        return np.column_stack([np.roll(xv, j) for j in j_set.indices])
    if spec.kind == POINTWISE:
        a = np.zeros((n, j_set.size))
        for c, j in enumerate(j_set.indices):
            a[j, c] = xv[j]
        return a
    basis = np.zeros(n)
    cols = []
    for j in j_set.indices:
        basis[j] = 1.0
        cols.append(apply_map(spec, xv, basis))
        basis[j] = 0.0
    return np.column_stack(cols)


def _check_geometry(spec: BilinearMapSpec, cone_x: ConeSpec, cone_y: ConeSpec):
    if cone_x.ambient_dim != spec.ambient_dim or cone_y.ambient_dim != spec.ambient_dim:
        raise ValueError("map and cones must share the ambient dimension")


def estimate_brute(spec: BilinearMapSpec, cone_x: ConeSpec, cone_y: ConeSpec,
                   samples: int = 10_000, seed: int = 0) -> RnmpEstimate:
    """Monte Carlo sweep over random unit cone pairs.

    With finitely many samples alpha_est is an upper bound on the true
    pairwise infimum and beta_est a lower bound on the supremum.  The
    sample streams for the two cones are independent, so enlarging
    `samples` at a fixed seed extends (rather than reshuffles) the sweep.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    _check_geometry(spec, cone_x, cone_y)
    ss = np.random.SeedSequence(seed)
    child_x, child_y = ss.spawn(2)
    rng_x = np.random.default_rng(child_x)
    rng_y = np.random.default_rng(child_y)

    best_min = np.inf
    best_max = -np.inf
    wit_min = wit_max = None
    done = 0
    while done < samples:
        count = min(_BATCH, samples - done)
        xs = unit_cone_directions(cone_x, count, rng_x)
        ys = unit_cone_directions(cone_y, count, rng_y)
        r = np.linalg.norm(apply_map_batch(spec, xs, ys), axis=1)
        i_min = int(np.argmin(r))
        i_max = int(np.argmax(r))
        if r[i_min] < best_min:
            best_min = float(r[i_min])
            wit_min = (xs[i_min].copy(), ys[i_min].copy())
        if r[i_max] > best_max:
            best_max = float(r[i_max])
            wit_max = (xs[i_max].copy(), ys[i_max].copy())
        done += count

    return RnmpEstimate(
        support_pair=(cone_x.support, cone_y.support),
        cone_kinds=(cone_x.kind, cone_y.kind),
        alpha_est=best_min,
        beta_est=best_max,
        alpha_witness=wit_min,
        beta_witness=wit_max,
        method="brute",
        restarts=samples,
        tol=1e-9,
    )


def _extreme_singular_direction(a: np.ndarray, mode: str, kind: str) -> Optional[np.ndarray]:
    """Smallest/largest right singular direction of A, projected to the cone.

    Orthant projection is clamp-to-zero plus renormalize after picking the
    sign with the larger nonnegative mass; returns None when the clamp
    annihilates the vector.  For nonnegative A the leading direction is
    already nonnegative (Perron), so the max mode loses nothing.
    """
    _, _, vt = np.linalg.svd(a, full_matrices=False)
    v = vt[0] if mode == "max" else vt[-1]
    if kind == POSITIVE_ORTHANT:
        pos = np.linalg.norm(np.clip(v, 0.0, None))
        neg = np.linalg.norm(np.clip(-v, 0.0, None))
        if neg > pos:
            v = -v
        v = np.clip(v, 0.0, None)
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            return None
        return v / nv
    return v / np.linalg.norm(v)


def _alternate(spec, cone_x, cone_y, x0, y0, mode, max_iters, tol):
    """One alternating run from (x0, y0); monotone in the objective."""
    better = (lambda a, b: a < b) if mode == "min" else (lambda a, b: a > b)
    i_set, j_set = cone_x.support, cone_y.support
    ix = i_set.as_array()
    jy = j_set.as_array()
    x, y = x0.copy(), y0.copy()
    current = float(np.linalg.norm(apply_map(spec, x, y)))
    converged = False
    for _ in range(max_iters):
        previous = current
        a = matricize(spec, j_set, x)
        v = _extreme_singular_direction(a, mode, cone_y.kind)
        if v is not None:
            cand = float(np.linalg.norm(a @ v))
            if better(cand, current):
                y = np.zeros_like(y)
                y[jy] = v
                current = cand
        # T is commutative for all kinds handled here, so the x-update
        # reuses matricize with the roles swapped
        b = matricize(spec, i_set, y)
        u = _extreme_singular_direction(b, mode, cone_x.kind)
        if u is not None:
            cand = float(np.linalg.norm(b @ u))
            if better(cand, current):
                x = np.zeros_like(x)
                x[ix] = u
                current = cand
        if abs(previous - current) < tol:
            converged = True
            break
    return current, x, y, converged


def estimate_alternating(spec: BilinearMapSpec, cone_x: ConeSpec, cone_y: ConeSpec,
                         restarts: int = 8, max_iters: int = 200,
                         tol: float = 1e-9, seed: int = 0) -> RnmpEstimate:
    """Alternating singular-direction search for alpha (min) and beta (max).

    Fixing one argument makes the restricted map linear; the update picks
    the extreme right singular direction of the matricized map, projected
    to the cone for positive orthants.  Updates are only accepted when
    they improve, so the objective is monotone across iterations.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    _check_geometry(spec, cone_x, cone_y)
    children = np.random.SeedSequence(seed).spawn(restarts)

    best_a = np.inf
    best_b = -np.inf
    wit_a = wit_b = None
    conv_a = conv_b = True
    for child in children:
        rng = np.random.default_rng(child)
        x0 = unit_cone_directions(cone_x, 1, rng)[0]
        y0 = unit_cone_directions(cone_y, 1, rng)[0]
        val, x, y, ok = _alternate(spec, cone_x, cone_y, x0, y0, "min", max_iters, tol)
        if val < best_a:
            best_a, wit_a, conv_a = val, (x, y), ok
        val, x, y, ok = _alternate(spec, cone_x, cone_y, x0, y0, "max", max_iters, tol)
        if val > best_b:
            best_b, wit_b, conv_b = val, (x, y), ok

    return RnmpEstimate(
        support_pair=(cone_x.support, cone_y.support),
        cone_kinds=(cone_x.kind, cone_y.kind),
        alpha_est=best_a,
        beta_est=best_b,
        alpha_witness=wit_a,
        beta_witness=wit_b,
        method="alternating",
        restarts=restarts,
        tol=tol,
        converged=conv_a and conv_b,
    )


def _sphere_grid(dim: int, kind: str, g: int) -> np.ndarray:
    """Deterministic angular grid of unit coefficient vectors.

    Subspace: polar angles on [0, pi], azimuth on [0, 2pi); positive
    orthant: all angles on [0, pi/2] so every coordinate is nonnegative.
    A 1-dimensional cone has the single direction e (the ratio is
    invariant under flipping the sign of a whole argument).
    """
    if dim == 1:
        return np.ones((1, 1))
    if kind == POSITIVE_ORTHANT:
        axes = [np.linspace(0.0, np.pi / 2, g)] * (dim - 1)
    else:
        axes = [np.linspace(0.0, np.pi, g)] * (dim - 2) + [
            np.linspace(0.0, 2 * np.pi, g, endpoint=False)
        ]
    mesh = np.meshgrid(*axes, indexing="ij")
    thetas = np.stack([m.ravel() for m in mesh], axis=1)
    coords = np.empty((thetas.shape[0], dim))
    sin_prod = np.ones(thetas.shape[0])
    for k in range(dim - 1):
        coords[:, k] = sin_prod * np.cos(thetas[:, k])
        sin_prod = sin_prod * np.sin(thetas[:, k])
    coords[:, dim - 1] = sin_prod
    return coords


def _basis_image_gram(spec: BilinearMapSpec, i_set: Support, j_set: Support) -> np.ndarray:
    """Gram tensor G[(a,a'),(b,b')] = <T(e_a, e_b), T(e_a', e_b')> flattened
    to (S^2, F^2); lets ||T(x,y)||^2 be evaluated for whole grids at once."""
    n = spec.ambient_dim
    s, f = i_set.size, j_set.size
    imgs = np.empty((s, f, n))
    ei = np.zeros(n)
    ej = np.zeros(n)
    for a, i in enumerate(i_set.indices):
        ei[i] = 1.0
        for b, j in enumerate(j_set.indices):
            ej[j] = 1.0
            imgs[a, b] = apply_map(spec, ei, ej)
            ej[j] = 0.0
        ei[i] = 0.0
    gram = np.einsum("abn,cdn->acbd", imgs, imgs)
    return gram.reshape(s * s, f * f)


def certify_exhaustive(spec: BilinearMapSpec, cone_x: ConeSpec, cone_y: ConeSpec,
                       grid_per_dim: int = 64) -> RnmpEstimate:
    """Deterministic min/max of the ratio over an angular product grid.

    Feasible only for small cone dimensions; the pair count is capped at
    10^8.  Serves as the oracle the randomized estimators are tested
    against: its resolution error is O(grid spacing) in the worst case.
    """
    if grid_per_dim < 3:
        raise ValueError("grid_per_dim must be >= 3")
    _check_geometry(spec, cone_x, cone_y)
    xs = _sphere_grid(cone_x.dim, cone_x.kind, grid_per_dim)
    ys = _sphere_grid(cone_y.dim, cone_y.kind, grid_per_dim)
    n_pairs = xs.shape[0] * ys.shape[0]
    if n_pairs > GRID_GUARD:
        raise ValueError(f"grid of {n_pairs} pairs exceeds the {GRID_GUARD} guard")

    gram = _basis_image_gram(spec, cone_x.support, cone_y.support)
    s, f = cone_x.dim, cone_y.dim
    xx = (xs[:, :, None] * xs[:, None, :]).reshape(xs.shape[0], s * s)
    left = xx @ gram  # (a, F^2)

    best_min = np.inf
    best_max = -np.inf
    arg_min = arg_max = (0, 0)
    chunk = max(1, int(4_000_000 // max(1, xs.shape[0])))
    for start in range(0, ys.shape[0], chunk):
        yc = ys[start:start + chunk]
        yy = (yc[:, :, None] * yc[:, None, :]).reshape(yc.shape[0], f * f)
        r2 = left @ yy.T  # (a, c)
        np.clip(r2, 0.0, None, out=r2)
        flat_min = int(np.argmin(r2))
        flat_max = int(np.argmax(r2))
        if r2.flat[flat_min] < best_min:
            best_min = float(r2.flat[flat_min])
            a, c = np.unravel_index(flat_min, r2.shape)
            arg_min = (int(a), start + int(c))
        if r2.flat[flat_max] > best_max:
            best_max = float(r2.flat[flat_max])
            a, c = np.unravel_index(flat_max, r2.shape)
            arg_max = (int(a), start + int(c))

    def embed(coeffs, cone):
        v = np.zeros(spec.ambient_dim)
        v[cone.support.as_array()] = coeffs
        return v

    wit_min = (embed(xs[arg_min[0]], cone_x), embed(ys[arg_min[1]], cone_y))
    wit_max = (embed(xs[arg_max[0]], cone_x), embed(ys[arg_max[1]], cone_y))
    return RnmpEstimate(
        support_pair=(cone_x.support, cone_y.support),
        cone_kinds=(cone_x.kind, cone_y.kind),
        alpha_est=float(np.sqrt(best_min)),
        beta_est=float(np.sqrt(best_max)),
        alpha_witness=wit_min,
        beta_witness=wit_max,
        method="grid",
        restarts=grid_per_dim,
        tol=1e-6,
    )
