"""Distribution resampling: weight optimization, histogram matching, binarization.

The central routine optimizes one log-parameterized weight per candidate
sample so that the weighted mean and covariance of the candidates minimize
the Frechet distance to a fixed real distribution.  The optimized weights
become sampling probabilities, and drawing with replacement produces a
resampled set whose measured distance drops sharply even though no sample
changed.  Simpler variants match the argmax-class histogram directly or
run the same optimization on binarized class-indicator vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, PreconditionError, ShortfallError
from .frechet import frechet_distance, sqrtm_psd, value_and_gradients
from .stats import GaussianStats, compute_stats, weighted_stats

__all__ = [
    "SampleWeights",
    "OptimizationTrace",
    "optimize_resampling_weights",
    "weights_to_probabilities",
    "sample_with_replacement",
    "Top1MatchResult",
    "top1_histogram_match",
    "binarize_top_n",
    "binarize_middle_n",
    "SweepPoint",
    "top_n_sweep",
]

DEFAULT_LEARNING_RATE_FEATURES = 10.0
DEFAULT_LEARNING_RATE_INDICATORS = 5.0
DEFAULT_MAX_ITERS = 100_000
DEFAULT_EVAL_EVERY = 1000


@dataclass(frozen=True)
class SampleWeights:
    """Log-parameterized per-candidate resampling weights."""

    log_weights: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.log_weights, dtype=np.float64)
        object.__setattr__(self, "log_weights", arr)
        if arr.ndim != 1:
            raise PreconditionError("log-weights must be a 1-D vector")
        if not np.isfinite(arr).all():
            raise PreconditionError("log-weights must be finite")

    def relative_weights(self) -> np.ndarray:
        """exp(log-weights), rescaled so the largest weight is 1."""
        # Weighted moments are invariant to this rescaling; it only exists
        # to keep exp() away from overflow.  The tiny floor keeps samples
        # whose relative weight underflows representable and positive.
        w = np.exp(self.log_weights - self.log_weights.max())
        return np.maximum(w, 1e-300)


@dataclass
class OptimizationTrace:
    """Objective history plus the post-hoc sampled distances at checkpoints."""

    iterations: list[int] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    checkpoints: list[tuple[int, float]] = field(default_factory=list)
    best_iteration: int = 0

    def to_tsv(self) -> str:
        lines = ["iteration\tobjective"]
        lines += [f"{i}\t{obj:.10g}" for i, obj in zip(self.iterations, self.objectives)]
        return "\n".join(lines) + "\n"


def weights_to_probabilities(weights) -> np.ndarray:
    """Softmax of the log-weights, shifted by the maximum for overflow safety."""
    if isinstance(weights, SampleWeights):
        logw = weights.log_weights
    else:
        logw = np.asarray(weights, dtype=np.float64)
    e = np.exp(logw - logw.max())
    return e / e.sum()


def sample_with_replacement(probabilities, m: int, seed: int) -> np.ndarray:
    """Draw ``m`` i.i.d. categorical indices; deterministic per seed."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise PreconditionError("probabilities must be a nonempty 1-D vector")
    if not np.isfinite(p).all() or (p < 0).any():
        raise PreconditionError("probabilities must be finite and nonnegative")
    total = p.sum()
    if abs(total - 1.0) > 1e-8 or total <= 0:
        raise PreconditionError(f"probabilities sum to {total}, expected 1")
    if m < 0:
        raise PreconditionError(f"sample count must be nonnegative, got {m}")
    rng = np.random.default_rng(seed)
    return rng.choice(p.size, size=m, replace=True, p=p / total)


def optimize_resampling_weights(
    real_features,
    gen_features,
    learning_rate: float = DEFAULT_LEARNING_RATE_FEATURES,
    max_iters: int = DEFAULT_MAX_ITERS,
    eval_every: int = DEFAULT_EVAL_EVERY,
    seed: int = 0,
    sample_count: int | None = None,
) -> tuple[SampleWeights, OptimizationTrace]:
    """Full-batch gradient descent on per-candidate log-weights.

    Minimizes the Frechet distance between the real statistics and the
    weighted candidate statistics.  Plain descent from uniform weights:
    no momentum, no learning-rate decay, no weight averaging.  At every
    ``eval_every``-th iteration (and at iterations 0 and ``max_iters``)
    the current weights are turned into probabilities, ``sample_count``
    candidates are drawn with replacement, and the distance of that
    concrete sample is recorded; the returned weights are the checkpoint
    with the smallest sampled distance.  Checkpoints whose objective
    exceeds the uniform starting objective are never returned.

    The gradient chains the analytic moment gradients through the
    weighted mean/covariance in O(n d^2) per iteration.
    """
    real = np.asarray(real_features, dtype=np.float64)
    gen = np.asarray(gen_features, dtype=np.float64)
    if real.ndim != 2 or gen.ndim != 2:
        raise PreconditionError("feature sets must be 2-D (n, d) matrices")
    if real.shape[1] != gen.shape[1]:
        raise PreconditionError(
            f"dimension mismatch: {real.shape[1]} vs {gen.shape[1]}"
        )
    if max_iters < 0 or eval_every < 1:
        raise PreconditionError("max_iters must be >= 0 and eval_every >= 1")

    real_stats = compute_stats(real)
    root_r = sqrtm_psd(real_stats.cov)
    n = gen.shape[0]
    if sample_count is None:
        sample_count = real.shape[0]

    seed_seq = np.random.SeedSequence(seed)
    logw = np.zeros(n)
    trace = OptimizationTrace()
    best_fid = np.inf
    best_logw = logw.copy()
    best_iteration = 0
    initial_objective = None

    def sampled_fid(current_logw) -> float:
        probs = weights_to_probabilities(current_logw)
        child = seed_seq.spawn(1)[0]
        idx = np.random.default_rng(child).choice(
            n, size=sample_count, replace=True, p=probs
        )
        return frechet_distance(real_stats, compute_stats(gen[idx]))

    for t in range(max_iters + 1):
        w = np.maximum(np.exp(logw - logw.max()), 1e-300)
        gstats = weighted_stats(gen, w)
        value, grads = value_and_gradients(real_stats, gstats, real_cov_root=root_r)
        if not np.isfinite(value):
            raise DivergenceError(f"objective became non-finite at iteration {t}", t)
        trace.iterations.append(t)
        trace.objectives.append(value)
        if initial_objective is None:
            initial_objective = value

        if t % eval_every == 0 or t == max_iters:
            if value <= initial_objective:
                fid = sampled_fid(logw)
                trace.checkpoints.append((t, fid))
                if fid < best_fid:
                    best_fid = fid
                    best_logw = logw.copy()
                    best_iteration = t
        if t == max_iters:
            break

        total = w.sum()
        centered = gen - gstats.mean
        lin = centered @ grads.d_mean
        quad = np.einsum("ij,ij->i", centered @ grads.d_cov, centered)
        trace_term = float((grads.d_cov * gstats.cov).sum())
        grad_logw = w * ((lin + quad - trace_term) / total)
        if not np.isfinite(grad_logw).all():
            raise DivergenceError(f"gradient became non-finite at iteration {t}", t)

        logw -= learning_rate * grad_logw
        logw -= logw.mean()  # pure reparameterization; keeps exp() bounded

    trace.best_iteration = best_iteration
    return SampleWeights(log_weights=best_logw), trace


def _argmax_rows(probs: np.ndarray) -> np.ndarray:
    # np.argmax takes the first maximum, which is the lower class index.
    return probs.argmax(axis=1)


@dataclass
class Top1MatchResult:
    """Outcome of argmax-class histogram matching."""

    indices: np.ndarray
    real_histogram: np.ndarray
    selected_histogram: np.ndarray
    deficits: dict[int, int]

    @property
    def matched(self) -> bool:
        return not self.deficits


def top1_histogram_match(
    real_probs, gen_probs, seed: int, allow_shortfall: bool = False
) -> Top1MatchResult:
    """Select candidate rows whose argmax-class histogram equals the real one.

    Candidates are scanned in seeded random order and discarded once their
    class bin is full.  When a class runs out of candidates the default is
    a ``ShortfallError`` listing the per-class deficits;
    ``allow_shortfall`` instead tops up the selection from the classes
    with the most unused candidates, proportionally to their remaining
    supply, and reports the deviation through the result histograms.
    """
    real = np.asarray(real_probs, dtype=np.float64)
    gen = np.asarray(gen_probs, dtype=np.float64)
    if real.ndim != 2 or gen.ndim != 2 or real.shape[1] != gen.shape[1]:
        raise PreconditionError("probability matrices must be 2-D with equal class counts")
    n_classes = real.shape[1]

    target = np.bincount(_argmax_rows(real), minlength=n_classes)
    gen_top = _argmax_rows(gen)
    order = np.random.default_rng(seed).permutation(gen.shape[0])

    fill = np.zeros(n_classes, dtype=np.int64)
    selected: list[int] = []
    leftovers: list[int] = []
    for idx in order:
        c = gen_top[idx]
        if fill[c] < target[c]:
            fill[c] += 1
            selected.append(int(idx))
        else:
            leftovers.append(int(idx))

    deficits = {int(c): int(target[c] - fill[c]) for c in np.nonzero(target > fill)[0]}
    if deficits and not allow_shortfall:
        detail = ", ".join(f"class {c}: {k} missing" for c, k in sorted(deficits.items()))
        raise ShortfallError(f"candidate supply exhausted ({detail})", deficits)

    if deficits:
        needed = sum(deficits.values())
        extra = _fill_from_largest_bins(leftovers, gen_top, n_classes, needed)
        selected.extend(extra)
        fill = np.bincount(gen_top[selected], minlength=n_classes)

    return Top1MatchResult(
        indices=np.asarray(selected, dtype=np.int64),
        real_histogram=target,
        selected_histogram=fill,
        deficits=deficits,
    )


def _fill_from_largest_bins(
    leftovers: list[int], gen_top: np.ndarray, n_classes: int, needed: int
) -> list[int]:
    """Pick ``needed`` leftover candidates, proportionally to per-class supply."""
    if needed <= 0 or not leftovers:
        return []
    supply = np.bincount(gen_top[leftovers], minlength=n_classes).astype(np.float64)
    total = supply.sum()
    if needed >= total:
        return list(leftovers)

    quota = np.floor(needed * supply / total).astype(np.int64)
    shortfall = needed - int(quota.sum())
    if shortfall > 0:
        remainder = needed * supply / total - quota
        # Largest fractional parts first; ties to the better-supplied class,
        # then to the lower class index for determinism.
        order = sorted(
            range(n_classes), key=lambda c: (-remainder[c], -supply[c], c)
        )
        for c in order:
            if shortfall == 0:
                break
            if quota[c] < supply[c]:
                quota[c] += 1
                shortfall -= 1

    extra: list[int] = []
    taken = np.zeros(n_classes, dtype=np.int64)
    for idx in leftovers:
        c = gen_top[idx]
        if taken[c] < quota[c]:
            taken[c] += 1
            extra.append(idx)
    return extra


def _check_probs_for_binarize(probs) -> np.ndarray:
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 2:
        raise PreconditionError("probability matrix must be 2-D")
    return p


def binarize_top_n(probs, n_top: int) -> np.ndarray:
    """Row-wise indicator of the ``n_top`` most probable classes.

    Ties go to the lower class index.  Binarization happens once, up
    front; the weight optimization later never differentiates through it.
    """
    p = _check_probs_for_binarize(probs)
    n_classes = p.shape[1]
    if not 1 <= n_top <= n_classes:
        raise PreconditionError(f"n_top must be in [1, {n_classes}], got {n_top}")
    order = np.argsort(-p, axis=1, kind="stable")
    out = np.zeros(p.shape, dtype=np.uint8)
    np.put_along_axis(out, order[:, :n_top], 1, axis=1)
    return out


def binarize_middle_n(probs, n_mid: int) -> np.ndarray:
    """Indicator of ``n_mid`` classes taken from the middle of each row's ranking.

    Ranks (by descending probability) floor(C/2) - floor(N/2) through
    floor(C/2) - floor(N/2) + N - 1 are set.  Only sensible while at most
    half the classes are set, hence the N <= C/2 bound.
    """
    p = _check_probs_for_binarize(probs)
    n_classes = p.shape[1]
    if not 1 <= n_mid <= n_classes // 2:
        raise PreconditionError(
            f"n_mid must be in [1, {n_classes // 2}], got {n_mid}"
        )
    start = n_classes // 2 - n_mid // 2
    order = np.argsort(-p, axis=1, kind="stable")
    out = np.zeros(p.shape, dtype=np.uint8)
    np.put_along_axis(out, order[:, start : start + n_mid], 1, axis=1)
    return out


@dataclass(frozen=True)
class SweepPoint:
    n_top: int
    fid: float


def top_n_sweep(
    real_probs,
    gen_probs,
    real_features,
    gen_features,
    ns,
    mode: str = "top",
    learning_rate: float = DEFAULT_LEARNING_RATE_INDICATORS,
    max_iters: int = DEFAULT_MAX_ITERS,
    eval_every: int = DEFAULT_EVAL_EVERY,
    seed: int = 0,
) -> list[SweepPoint]:
    """Post-resampling distance (in feature space) as a function of N.

    For each N the class probabilities are binarized (top or middle N),
    the weight optimization runs on the indicator vectors, one sample of
    real-set size is drawn from the optimized probabilities, and the
    Frechet distance of the corresponding *feature* rows is reported.
    """
    if mode not in ("top", "middle"):
        raise PreconditionError(f"mode must be 'top' or 'middle', got {mode!r}")
    real_p = np.asarray(real_probs)
    gen_p = np.asarray(gen_probs)
    real_f = np.asarray(real_features, dtype=np.float64)
    gen_f = np.asarray(gen_features, dtype=np.float64)
    if real_p.shape[0] != real_f.shape[0] or gen_p.shape[0] != gen_f.shape[0]:
        raise PreconditionError("probabilities and features must be row-aligned")

    binarize = binarize_top_n if mode == "top" else binarize_middle_n
    real_stats = compute_stats(real_f)
    curve = []
    for point_index, n_top in enumerate(ns):
        sub_seed = np.random.SeedSequence([seed, point_index]).generate_state(1)[0]
        weights, _ = optimize_resampling_weights(
            binarize(real_p, n_top),
            binarize(gen_p, n_top),
            learning_rate=learning_rate,
            max_iters=max_iters,
            eval_every=eval_every,
            seed=int(sub_seed),
        )
        probs = weights_to_probabilities(weights)
        idx = sample_with_replacement(probs, real_f.shape[0], seed=int(sub_seed) + 1)
        fid = frechet_distance(real_stats, compute_stats(gen_f[idx]))
        curve.append(SweepPoint(n_top=int(n_top), fid=fid))
    return curve
