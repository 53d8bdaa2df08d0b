"""Random measurement ensembles and empirical isometry experiments.

Covers four jobs: generating sub-Gaussian measurement matrices
(gaussian N(0, 1/M) or scaled Rademacher entries), measuring per-vector
distortion |Phi z| / |z| - 1, Monte Carlo sweeps of that distortion over
images of bilinear maps, and the single-vector concentration experiment
(how often |Phi r| strays from |r| by more than delta/2, against the
2 exp(-c0 M) ceiling).

Trials draw their randomness from per-trial child streams spawned off
the master seed, so trial t is reproducible regardless of execution
order and results merge associatively.  Everything runs single-threaded
here; the stream layout is what makes parallel runs legal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .bilinear_ops import BilinearMapSpec, apply_map_batch
from .bounds import c0
from .sparse_model import SUBSPACE, ConeSpec, unit_cone_directions

GAUSSIAN = "gaussian"
RADEMACHER = "rademacher"
ENSEMBLE_KINDS = (GAUSSIAN, RADEMACHER)

# below this output norm a sample is counted as degenerate and skipped
DEGENERATE_NORM = 1e-12

# dense Phi guard: M*N entries materialized
_SIZE_GUARD = 10 ** 7

_DEFAULT_QUANTILES = (0.5, 0.9, 0.99)


@dataclass(frozen=True)
class MeasurementEnsemble:
    """Spec for an M x N random measurement matrix.

    gaussian: i.i.d. N(0, 1/M) entries.  rademacher: i.i.d. +-1/sqrt(M)
    with equal probability.  Requires M <= N (compression, not
    expansion).
    """

    kind: str
    rows: int
    cols: int
    seed: int

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(f"kind must be one of {ENSEMBLE_KINDS}, got {self.kind!r}")
        if self.rows < 1:
            raise ValueError(f"rows must be >= 1, got {self.rows}")
        if self.rows > self.cols:
            raise ValueError(f"need rows <= cols, got {self.rows} > {self.cols}")
        if self.rows * self.cols > _SIZE_GUARD:
            raise ValueError(
                f"{self.rows}x{self.cols} exceeds the dense-matrix guard ({_SIZE_GUARD} entries)")

    def to_json(self) -> dict:
        return {"kind": self.kind, "rows": self.rows, "cols": self.cols,
                "seed": self.seed}


def _draw(kind: str, rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    if kind == GAUSSIAN:
        return rng.standard_normal((rows, cols)) / math.sqrt(rows)
    signs = rng.integers(0, 2, size=(rows, cols)).astype(np.float64)
    return (2.0 * signs - 1.0) / math.sqrt(rows)


def generate(ensemble: MeasurementEnsemble) -> np.ndarray:
    """Materialize the ensemble's matrix.  Deterministic in the seed."""
    rng = np.random.default_rng(ensemble.seed)
    return _draw(ensemble.kind, ensemble.rows, ensemble.cols, rng)


def orthonormal_rows(rows: int, cols: int, seed: int) -> np.ndarray:
    """M x N matrix with exactly orthonormal rows (QR of a gaussian
    draw).  An exact isometry on its row space; the M = N control case."""
    if rows > cols:
        raise ValueError(f"need rows <= cols, got {rows} > {cols}")
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((cols, cols)))
    return q[:rows]


def distortion(phi: np.ndarray, z: np.ndarray) -> float:
    """|Phi z| / |z| - 1 for a single nonzero vector."""
    z = np.asarray(z, dtype=np.float64)
    nz = float(np.linalg.norm(z))
    if nz == 0.0:
        raise ValueError("distortion of the zero vector is undefined")
    return float(np.linalg.norm(phi @ z)) / nz - 1.0


@dataclass(frozen=True, eq=False)
class DistortionReport:
    """Monte Carlo distortion statistics for one fixed matrix.

    `n_samples` counts evaluated samples; `skipped` the degenerate draws
    (output norm below 1e-12).  `quantiles` are (q, value) pairs of
    |distortion|; `exceed_count` is how many samples had |distortion| >
    delta.  The raw per-sample |distortion| array rides along for
    plotting but stays out of the JSON payload.
    """

    n_samples: int
    skipped: int
    max_abs_distortion: float
    quantiles: Tuple[Tuple[float, float], ...]
    exceed_count: int
    delta: float
    m: int
    n: int
    sample_seed: int
    ensemble_seed: Optional[int]
    abs_distortions: np.ndarray

    def __post_init__(self):
        if self.exceed_count > self.n_samples:
            raise ValueError("exceed_count cannot exceed n_samples")
        self.abs_distortions.setflags(write=False)

    def to_json(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "skipped": self.skipped,
            "max_abs_distortion": self.max_abs_distortion,
            "quantiles": [[q, v] for q, v in self.quantiles],
            "exceed_count": self.exceed_count,
            "delta": self.delta,
            "m": self.m,
            "n": self.n,
            "sample_seed": self.sample_seed,
            "ensemble_seed": self.ensemble_seed,
        }


def rip_monte_carlo(map_spec: BilinearMapSpec,
                    cone_x: ConeSpec,
                    cone_y: ConeSpec,
                    ensemble: Union[MeasurementEnsemble, np.ndarray],
                    n_samples: int,
                    delta: float,
                    seed: int,
                    extra_pairs: Optional[Sequence[Tuple[np.ndarray, np.ndarray]]] = None,
                    quantile_levels: Sequence[float] = _DEFAULT_QUANTILES) -> DistortionReport:
    """Sample unit cone pairs, push them through the map, and record
    |distortion| of the images under one fixed matrix realization.

    `ensemble` may be a MeasurementEnsemble or an explicit M x N matrix
    (e.g. orthonormalized rows for the isometry control).  `extra_pairs`
    are deterministic (x, y) pairs evaluated before the random draws;
    meant for adversarial seeding with known low-norm directions, since
    uniform sampling alone misses near-null images.  Outputs with norm
    below 1e-12 are skipped and counted; if everything degenerates
    that's an error, not an empty report.
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if isinstance(ensemble, MeasurementEnsemble):
        if ensemble.cols != map_spec.ambient_dim:
            raise ValueError(f"ensemble cols {ensemble.cols} != ambient dim "
                             f"{map_spec.ambient_dim}")
        phi = generate(ensemble)
        ensemble_seed: Optional[int] = ensemble.seed
    else:
        phi = np.asarray(ensemble, dtype=np.float64)
        if phi.ndim != 2 or phi.shape[1] != map_spec.ambient_dim:
            raise ValueError(f"explicit matrix must be M x {map_spec.ambient_dim}, "
                             f"got shape {phi.shape}")
        ensemble_seed = None

    ss_x, ss_y = np.random.SeedSequence(seed).spawn(2)
    xs = unit_cone_directions(cone_x, n_samples, np.random.default_rng(ss_x))
    ys = unit_cone_directions(cone_y, n_samples, np.random.default_rng(ss_y))
    if extra_pairs:
        ex = np.vstack([np.asarray(p[0], dtype=np.float64) for p in extra_pairs])
        ey = np.vstack([np.asarray(p[1], dtype=np.float64) for p in extra_pairs])
        xs = np.vstack([ex, xs])
        ys = np.vstack([ey, ys])

    zs = apply_map_batch(map_spec, xs, ys)
    norms = np.linalg.norm(zs, axis=1)
    keep = norms >= DEGENERATE_NORM
    skipped = int(np.sum(~keep))
    if not np.any(keep):
        raise ValueError("all sampled outputs were degenerate (norm < 1e-12); "
                         "the cone pair looks null under this map")

    image_norms = np.linalg.norm(zs[keep] @ phi.T, axis=1)
    abs_dist = np.abs(image_norms / norms[keep] - 1.0)
    qs = tuple((float(q), float(np.quantile(abs_dist, q))) for q in quantile_levels)
    return DistortionReport(
        n_samples=int(abs_dist.size),
        skipped=skipped,
        max_abs_distortion=float(np.max(abs_dist)),
        quantiles=qs,
        exceed_count=int(np.sum(abs_dist > delta)),
        delta=delta,
        m=phi.shape[0],
        n=phi.shape[1],
        sample_seed=seed,
        ensemble_seed=ensemble_seed,
        abs_distortions=abs_dist,
    )


@dataclass(frozen=True, eq=False)
class ConcentrationResult:
    """Outcome of the single-vector concentration experiment.

    Unpacks as (empirical_rate, theory_rate).  `ratios` holds the
    per-trial |Phi r| / |r| values (kept for diagnostics, not
    serialized); theory_rate is the raw ceiling 2 exp(-c0(delta) M),
    which can exceed 1 at small M.
    """

    empirical_rate: float
    theory_rate: float
    violations: int
    trials: int
    delta: float
    m: int
    seed: int
    ratios: np.ndarray

    def __post_init__(self):
        self.ratios.setflags(write=False)

    def __iter__(self):
        return iter((self.empirical_rate, self.theory_rate))

    def to_json(self) -> dict:
        return {
            "empirical_rate": self.empirical_rate,
            "theory_rate": self.theory_rate,
            "violations": self.violations,
            "trials": self.trials,
            "delta": self.delta,
            "m": self.m,
            "seed": self.seed,
        }


def concentration_test(r: np.ndarray,
                       ensemble_template: MeasurementEnsemble,
                       trials: int,
                       delta: float) -> ConcentrationResult:
    """Fraction of independent matrix draws with | |Phi r| - |r| | >
    (delta/2) |r|, against the ceiling 2 exp(-c0(delta) M).

    The template's seed is the master seed; trial t uses the t-th
    spawned child stream (SFC64 here for throughput; the stream layout,
    not the bit generator, is what fixes reproducibility).  Needs
    trials >= 100 so the empirical rate means anything.
    """
    if trials < 100:
        raise ValueError(f"trials must be >= 100, got {trials}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (ensemble_template.cols,):
        raise ValueError(f"r must have length {ensemble_template.cols}, "
                         f"got shape {r.shape}")
    norm_r = float(np.linalg.norm(r))
    if norm_r == 0.0:
        raise ValueError("r must be nonzero")

    m = ensemble_template.rows
    cols = ensemble_template.cols
    children = np.random.SeedSequence(ensemble_template.seed).spawn(trials)
    ratios = np.empty(trials)
    # hot loop: SFC64 streams and unscaled draws (the 1/sqrt(M) factor
    # moves into the final norm), worth ~20% at 10^5 trials of 500x500
    scale = math.sqrt(m) * norm_r
    buf = np.empty((m, cols))
    for t, child in enumerate(children):
        gen = np.random.Generator(np.random.SFC64(child))
        if ensemble_template.kind == GAUSSIAN:
            gen.standard_normal(out=buf)
            ratios[t] = np.linalg.norm(buf @ r) / scale
        else:
            signs = 2.0 * gen.integers(0, 2, size=(m, cols)) - 1.0
            ratios[t] = np.linalg.norm(signs @ r) / scale

    violations = int(np.sum(np.abs(ratios - 1.0) > delta / 2.0))
    return ConcentrationResult(
        empirical_rate=violations / trials,
        theory_rate=2.0 * math.exp(-c0(delta) * m),
        violations=violations,
        trials=trials,
        delta=delta,
        m=m,
        seed=ensemble_template.seed,
        ratios=ratios,
    )


@dataclass(frozen=True)
class ConjectureProbe:
    """Observed vs conjectured failure rate for the squared-norm
    isometry event on subspace-pair images.  Observational only; the
    conjectured form is evaluated for a caller-chosen constant d."""

    empirical_rate: float
    conjectured_rate: float
    failures: int
    evaluated: int
    skipped: int
    trials: int
    delta: float
    d: float
    s: int
    f: int
    m: int
    seed: int

    def to_json(self) -> dict:
        return {
            "empirical_rate": self.empirical_rate,
            "conjectured_rate": self.conjectured_rate,
            "failures": self.failures,
            "evaluated": self.evaluated,
            "skipped": self.skipped,
            "trials": self.trials,
            "delta": self.delta,
            "d": self.d,
            "s": self.s,
            "f": self.f,
            "m": self.m,
            "seed": self.seed,
        }


def conjecture_probe(map_spec: BilinearMapSpec,
                     cone_x: ConeSpec,
                     cone_y: ConeSpec,
                     ensemble_template: MeasurementEnsemble,
                     delta: float,
                     trials: int,
                     d: float = 12.0) -> ConjectureProbe:
    """Record how often (1 - delta) |z|^2 <= |Phi z|^2 <= (1 + delta)
    |z|^2 fails over fresh (Phi, z) pairs, z an image of a random
    subspace pair sample, against 2 (d/delta)^(S+F) exp(-c0 M).

    Restricted to subspace cones on purpose: the positive-cone cases
    are already covered by the composed bounds in the bounds module.
    This gathers evidence, it asserts nothing.
    """
    if cone_x.kind != SUBSPACE or cone_y.kind != SUBSPACE:
        raise ValueError("the probe is defined for subspace cone pairs only")
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if d <= 1.0:
        raise ValueError(f"the conjectured constant needs d > 1, got {d}")
    if ensemble_template.cols != map_spec.ambient_dim:
        raise ValueError(f"ensemble cols {ensemble_template.cols} != ambient dim "
                         f"{map_spec.ambient_dim}")

    m = ensemble_template.rows
    children = np.random.SeedSequence(ensemble_template.seed).spawn(trials)
    failures = 0
    evaluated = 0
    skipped = 0
    for child in children:
        rng = np.random.default_rng(child)
        phi = _draw(ensemble_template.kind, m, ensemble_template.cols, rng)
        x = unit_cone_directions(cone_x, 1, rng)[0]
        y = unit_cone_directions(cone_y, 1, rng)[0]
        z = apply_map_batch(map_spec, x[None, :], y[None, :])[0]
        nz2 = float(np.dot(z, z))
        if nz2 < DEGENERATE_NORM ** 2:
            skipped += 1
            continue
        evaluated += 1
        pz = phi @ z
        if abs(float(np.dot(pz, pz)) / nz2 - 1.0) > delta:
            failures += 1
    if evaluated == 0:
        raise ValueError("all probe samples were degenerate; nothing to report")

    s, f = cone_x.dim, cone_y.dim
    conjectured = 2.0 * (d / delta) ** (s + f) * math.exp(-c0(delta) * m)
    return ConjectureProbe(
        empirical_rate=failures / evaluated,
        conjectured_rate=conjectured,
        failures=failures,
        evaluated=evaluated,
        skipped=skipped,
        trials=trials,
        delta=delta,
        d=d,
        s=s,
        f=f,
        m=m,
        seed=ensemble_template.seed,
    )
