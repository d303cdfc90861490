"""Seeded class-structured Gaussian mixtures with closed-form ground truth.

Everything downstream of feature extraction (distances, gradients,
resampling attacks) only sees feature matrices and class probabilities,
so a mixture of diagonal Gaussians with one class label per component is
enough to exercise the full pipeline at desk scale.  Single-component
specs additionally admit an exact distance, which anchors the empirical
estimators.

Spec files are plain text, one statement per line::

    # lines starting with '#' are comments
    dim 16
    temperature 4.0
    component label=a proportion=0.5 mean=0 var=1
    component label=b proportion=0.5 mean=3,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0 var=0.5

``mean`` and ``var`` accept either a single number (broadcast to every
dimension) or ``dim`` comma-separated numbers.  Proportions must sum to 1.
Class-probability columns follow the order in which labels first appear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError, UndefinedCorrelationError, UnsupportedError
from .frechet import frechet_diagonal, frechet_distance
from .stats import compute_stats

__all__ = [
    "MixtureComponent",
    "MixtureSpec",
    "parse_mixture_spec",
    "load_mixture_spec",
    "format_mixture_spec",
    "SynthSample",
    "synth_generate",
    "oracle_frechet",
    "BiasPoint",
    "bias_probe",
    "CorrelationReport",
    "affine_correlation_probe",
]

PROPORTION_TOL = 1e-8


@dataclass(frozen=True)
class MixtureComponent:
    """One diagonal-Gaussian component with a class label."""

    label: str
    proportion: float
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        var = np.atleast_1d(np.asarray(self.var, dtype=np.float64))
        object.__setattr__(self, "label", str(self.label))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)
        if mean.ndim != 1 or var.ndim != 1 or mean.shape != var.shape:
            raise PreconditionError("component mean and var must be equal-length vectors")
        if not (np.isfinite(mean).all() and np.isfinite(var).all()):
            raise PreconditionError(f"component {self.label!r} has non-finite parameters")
        if (var < 0).any():
            raise PreconditionError(f"component {self.label!r} has negative variance")
        if not np.isfinite(self.proportion) or self.proportion < 0:
            raise PreconditionError(
                f"component {self.label!r} proportion must be nonnegative"
            )

    def __eq__(self, other):
        if not isinstance(other, MixtureComponent):
            return NotImplemented
        return (
            self.label == other.label
            and self.proportion == other.proportion
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.var, other.var)
        )


@dataclass(frozen=True)
class MixtureSpec:
    """A mixture of labeled diagonal-Gaussian components."""

    dim: int
    components: tuple[MixtureComponent, ...]
    temperature: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if self.dim < 1:
            raise PreconditionError(f"dim must be >= 1, got {self.dim}")
        if not self.components:
            raise PreconditionError("spec needs at least one component")
        if not (np.isfinite(self.temperature) and self.temperature > 0):
            raise PreconditionError(f"temperature must be positive, got {self.temperature}")
        for comp in self.components:
            if comp.mean.size != self.dim:
                raise PreconditionError(
                    f"component {comp.label!r} has dimension {comp.mean.size}, spec says {self.dim}"
                )
        total = sum(c.proportion for c in self.components)
        if abs(total - 1.0) > PROPORTION_TOL:
            raise PreconditionError(f"proportions sum to {total!r}, expected 1")

    @property
    def labels(self) -> tuple[str, ...]:
        """Distinct class labels in order of first appearance."""
        seen: dict[str, None] = {}
        for comp in self.components:
            seen.setdefault(comp.label, None)
        return tuple(seen)

    @property
    def n_classes(self) -> int:
        return len(self.labels)


def _parse_vector(text: str, dim: int, what: str) -> np.ndarray:
    try:
        values = [float(tok) for tok in text.split(",")]
    except ValueError:
        raise PreconditionError(f"cannot parse {what} {text!r}") from None
    if len(values) == 1:
        return np.full(dim, values[0])
    if len(values) != dim:
        raise PreconditionError(
            f"{what} has {len(values)} entries, expected 1 or {dim}"
        )
    return np.asarray(values)


def parse_mixture_spec(text: str) -> MixtureSpec:
    """Parse the plain-text key-value spec format (see module docstring)."""
    dim = None
    temperature = None
    component_lines: list[tuple[int, dict[str, str]]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key == "dim":
            if dim is not None:
                raise PreconditionError(f"line {lineno}: duplicate 'dim'")
            try:
                dim = int(rest)
            except ValueError:
                raise PreconditionError(f"line {lineno}: bad dim {rest!r}") from None
        elif key == "temperature":
            if temperature is not None:
                raise PreconditionError(f"line {lineno}: duplicate 'temperature'")
            try:
                temperature = float(rest)
            except ValueError:
                raise PreconditionError(
                    f"line {lineno}: bad temperature {rest!r}"
                ) from None
        elif key == "component":
            fields: dict[str, str] = {}
            for token in rest.split():
                fkey, eq, fval = token.partition("=")
                if not eq or fkey not in ("label", "proportion", "mean", "var"):
                    raise PreconditionError(
                        f"line {lineno}: bad component field {token!r}"
                    )
                if fkey in fields:
                    raise PreconditionError(f"line {lineno}: duplicate field {fkey!r}")
                fields[fkey] = fval
            missing = {"label", "proportion", "mean", "var"} - fields.keys()
            if missing:
                raise PreconditionError(
                    f"line {lineno}: component missing {sorted(missing)}"
                )
            component_lines.append((lineno, fields))
        else:
            raise PreconditionError(f"line {lineno}: unknown key {key!r}")

    if dim is None:
        raise PreconditionError("spec is missing 'dim'")
    if not component_lines:
        raise PreconditionError("spec has no components")

    components = []
    for lineno, fields in component_lines:
        try:
            proportion = float(fields["proportion"])
        except ValueError:
            raise PreconditionError(
                f"line {lineno}: bad proportion {fields['proportion']!r}"
            ) from None
        components.append(
            MixtureComponent(
                label=fields["label"],
                proportion=proportion,
                mean=_parse_vector(fields["mean"], dim, "mean"),
                var=_parse_vector(fields["var"], dim, "var"),
            )
        )
    kwargs = {} if temperature is None else {"temperature": temperature}
    return MixtureSpec(dim=dim, components=tuple(components), **kwargs)


def load_mixture_spec(path) -> MixtureSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mixture_spec(fh.read())


def format_mixture_spec(spec: MixtureSpec) -> str:
    """Render a spec back into the text format; parse(format(s)) == s."""
    lines = [f"dim {spec.dim}", f"temperature {float(spec.temperature)!r}"]
    for comp in spec.components:
        mean = ",".join(repr(float(v)) for v in comp.mean)
        var = ",".join(repr(float(v)) for v in comp.var)
        lines.append(
            f"component label={comp.label} proportion={float(comp.proportion)!r} "
            f"mean={mean} var={var}"
        )
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SynthSample:
    """One seeded draw: features, per-row class probabilities, provenance."""

    features: np.ndarray
    probabilities: np.ndarray
    components: np.ndarray
    labels: tuple[str, ...]


def synth_generate(spec: MixtureSpec, n: int, seed) -> SynthSample:
    """Draw ``n`` rows from the mixture, with soft class probabilities.

    Class probabilities are a softmax of the negative squared distances to
    the component means, scaled by 1/temperature and aggregated over
    components sharing a label; low temperature makes the argmax recover
    the generating component, high temperature blurs it.  Bitwise
    deterministic per seed.
    """
    if n < 0:
        raise PreconditionError(f"sample count must be nonnegative, got {n}")
    k = len(spec.components)
    proportions = np.asarray([c.proportion for c in spec.components])
    means = np.stack([c.mean for c in spec.components])
    stds = np.sqrt(np.stack([c.var for c in spec.components]))

    rng = np.random.default_rng(seed)
    comp_idx = rng.choice(k, size=n, p=proportions / proportions.sum())
    features = means[comp_idx] + stds[comp_idx] * rng.standard_normal((n, spec.dim))

    sq_dists = ((features[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    logits = -sq_dists / spec.temperature
    weights = np.exp(logits - logits.max(axis=1, keepdims=True))

    labels = spec.labels
    label_col = {lab: j for j, lab in enumerate(labels)}
    membership = np.zeros((k, len(labels)))
    for i, comp in enumerate(spec.components):
        membership[i, label_col[comp.label]] = 1.0
    class_weights = weights @ membership
    probabilities = class_weights / class_weights.sum(axis=1, keepdims=True)

    return SynthSample(
        features=features,
        probabilities=probabilities,
        components=comp_idx.astype(np.int64),
        labels=labels,
    )


def oracle_frechet(spec_a: MixtureSpec, spec_b: MixtureSpec) -> float:
    """Exact distance between two single-component specs."""
    if len(spec_a.components) != 1 or len(spec_b.components) != 1:
        raise UnsupportedError(
            "closed-form distance exists only for single-component specs"
        )
    if spec_a.dim != spec_b.dim:
        raise PreconditionError(f"dimension mismatch: {spec_a.dim} vs {spec_b.dim}")
    a, b = spec_a.components[0], spec_b.components[0]
    return frechet_diagonal(a.mean, a.var, b.mean, b.var)


def _derived_seed(*path) -> int:
    return int(np.random.SeedSequence(list(path)).generate_state(1)[0])


@dataclass(frozen=True)
class BiasPoint:
    sample_size: int
    mean_fid: float
    fids: tuple[float, ...]


def bias_probe(spec: MixtureSpec, sample_sizes, repeats: int, seed: int) -> list[BiasPoint]:
    """Mean empirical distance between independent same-spec draws, per size.

    The true distance is zero; everything measured here is estimator bias
    plus noise, which shrinks as the sample size grows.
    """
    sizes = [int(s) for s in sample_sizes]
    if any(s < 2 for s in sizes):
        raise PreconditionError("sample sizes must be >= 2")
    if repeats < 1:
        raise PreconditionError(f"repeats must be >= 1, got {repeats}")

    table = []
    for size_index, size in enumerate(sizes):
        fids = []
        for r in range(repeats):
            a = synth_generate(spec, size, _derived_seed(seed, size_index, r, 0))
            b = synth_generate(spec, size, _derived_seed(seed, size_index, r, 1))
            fids.append(
                frechet_distance(compute_stats(a.features), compute_stats(b.features))
            )
        table.append(
            BiasPoint(sample_size=size, mean_fid=float(np.mean(fids)), fids=tuple(fids))
        )
    return table


@dataclass(frozen=True)
class CorrelationReport:
    """Agreement between distances before and after a fixed affine map."""

    correlation: float
    feature_fids: np.ndarray
    affine_fids: np.ndarray
    low_rank: bool


def affine_correlation_probe(
    real_spec: MixtureSpec,
    gen_specs,
    affine_map: tuple[np.ndarray, np.ndarray],
    seed: int,
    n: int = 2000,
) -> CorrelationReport:
    """Pearson correlation of per-member distances across an affine map.

    One real draw is shared; each ensemble member contributes one distance
    in feature space and one after every feature is pushed through
    ``f -> A f + b``.  High correlation means the two spaces rank the
    ensemble the same way.  A rank-deficient map is allowed but flagged.
    """
    gen_specs = list(gen_specs)
    if len(gen_specs) < 10:
        raise PreconditionError(
            f"ensemble must have >= 10 members, got {len(gen_specs)}"
        )
    matrix, offset = affine_map
    matrix = np.asarray(matrix, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    if matrix.ndim != 2 or offset.ndim != 1 or matrix.shape[0] != offset.size:
        raise PreconditionError("affine map must be a (C, d) matrix and C-vector")
    if matrix.shape[1] != real_spec.dim:
        raise PreconditionError(
            f"affine map expects dimension {matrix.shape[1]}, spec has {real_spec.dim}"
        )
    for member in gen_specs:
        if member.dim != real_spec.dim:
            raise PreconditionError("ensemble members must share the real spec's dimension")

    real = synth_generate(real_spec, n, _derived_seed(seed, 0)).features
    real_stats = compute_stats(real)
    real_affine_stats = compute_stats(real @ matrix.T + offset)

    feature_fids = np.empty(len(gen_specs))
    affine_fids = np.empty(len(gen_specs))
    for i, member in enumerate(gen_specs):
        gen = synth_generate(member, n, _derived_seed(seed, i + 1)).features
        feature_fids[i] = frechet_distance(real_stats, compute_stats(gen))
        affine_fids[i] = frechet_distance(
            real_affine_stats, compute_stats(gen @ matrix.T + offset)
        )

    if np.ptp(feature_fids) == 0 or np.ptp(affine_fids) == 0:
        raise UndefinedCorrelationError(
            "constant distance series has no defined correlation"
        )
    if np.array_equal(feature_fids, affine_fids):
        correlation = 1.0
    else:
        correlation = float(np.corrcoef(feature_fids, affine_fids)[0, 1])
    # Flagged whenever the map cannot preserve the feature geometry, i.e.
    # its rank falls short of the source dimension.
    low_rank = int(np.linalg.matrix_rank(matrix)) < matrix.shape[1]
    return CorrelationReport(
        correlation=correlation,
        feature_fids=feature_fids,
        affine_fids=affine_fids,
        low_rank=low_rank,
    )
