"""Path-level pipelines shared by the command line and the HTTP service.

Each function takes file paths plus options, does one job end to end, and
returns a small report dataclass.  The CLI prints the reports; the service
serializes them.  Nothing here holds state between calls.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import feature_io
from .errors import PreconditionError, ValidationError
from .feature_io import FeatureKind, FeaturePayload
from .frechet import frechet_distance
from .kernels import DEFAULT_SUBSET_SIZE, DEFAULT_SUBSETS, kid_polynomial, kid_rbf
from .resampling import (
    DEFAULT_EVAL_EVERY,
    DEFAULT_LEARNING_RATE_FEATURES,
    DEFAULT_LEARNING_RATE_INDICATORS,
    DEFAULT_MAX_ITERS,
    binarize_middle_n,
    binarize_top_n,
    optimize_resampling_weights,
    sample_with_replacement,
    top1_histogram_match,
    top_n_sweep,
    weights_to_probabilities,
)
from .sensitivity import (
    add_masked_noise,
    heatmap_for_image,
    importance_masks,
    render_heatmap,
)
from .stats import GaussianStats, compute_stats, downdate_stats
from .synthetic import bias_probe, load_mixture_spec, synth_generate

__all__ = [
    "load_stats",
    "StatsReport",
    "compute_stats_file",
    "FidReport",
    "fid_between",
    "KidReport",
    "kid_between",
    "ResampleReport",
    "resample_attack",
    "Top1Report",
    "top1_match_files",
    "SweepReport",
    "topn_sweep_files",
    "HeatmapEntry",
    "HeatmapReport",
    "heatmap_files",
    "NoiseApplyReport",
    "noise_probe_apply",
    "NoiseEvalRow",
    "noise_probe_evaluate",
    "SynthReport",
    "synth_files",
    "BiasReport",
    "bias_probe_files",
    "ValidateReport",
    "validate_file",
]

RESAMPLE_SPACES = ("pre-logits", "logits", "binarized")
NOISE_REGIONS = ("important", "unimportant", "everywhere")
DEFAULT_HEATMAP_SIZE = 299


def _derived_seed(*path) -> int:
    return int(np.random.SeedSequence(list(path)).generate_state(1)[0])


def load_stats(path) -> tuple[GaussianStats, FeatureKind]:
    """Gaussian summary of a file: stats files as-is, feature files reduced."""
    if feature_io.is_stats_file(path):
        return feature_io.read_stats_file(path)
    payload = feature_io.read_feature_file(path)
    return compute_stats(payload.features), payload.kind


def _require_features(path) -> FeaturePayload:
    if feature_io.is_stats_file(path):
        raise PreconditionError(
            f"{path} holds only Gaussian statistics; this operation needs raw features"
        )
    return feature_io.read_feature_file(path)


@dataclass
class StatsReport:
    out_path: str
    kind: str
    count: int
    dim: int


def compute_stats_file(features_path, out_path) -> StatsReport:
    payload = _require_features(features_path)
    stats = compute_stats(payload.features)
    feature_io.write_stats_file(out_path, stats, payload.kind)
    return StatsReport(
        out_path=str(out_path), kind=payload.kind.label, count=stats.count, dim=stats.dim
    )


@dataclass
class FidReport:
    value: float
    kind_a: str
    kind_b: str
    count_a: int
    count_b: int


def fid_between(path_a, path_b, force: bool = False) -> FidReport:
    """Frechet distance between two inputs (feature files or stats files).

    Distances across feature kinds are numerically valid but almost always
    a mistake, so differing kind tags are refused unless ``force``.
    """
    stats_a, kind_a = load_stats(path_a)
    stats_b, kind_b = load_stats(path_b)
    if kind_a != kind_b and not force:
        raise PreconditionError(
            f"refusing to compare {kind_a.label} features against {kind_b.label};"
            " use force to override"
        )
    return FidReport(
        value=frechet_distance(stats_a, stats_b),
        kind_a=kind_a.label,
        kind_b=kind_b.label,
        count_a=stats_a.count,
        count_b=stats_b.count,
    )


@dataclass
class KidReport:
    value: float
    kernel: str
    gamma: float | None
    subset_size: int
    subsets: int


def kid_between(
    path_a,
    path_b,
    kernel: str = "polynomial",
    gamma: float | None = None,
    subset_size: int = DEFAULT_SUBSET_SIZE,
    subsets: int = DEFAULT_SUBSETS,
    seed: int = 0,
) -> KidReport:
    if kernel not in ("polynomial", "rbf"):
        raise PreconditionError(f"kernel must be 'polynomial' or 'rbf', got {kernel!r}")
    x = _require_features(path_a)
    y = _require_features(path_b)
    size = min(subset_size, x.count, y.count)
    if kernel == "polynomial":
        value = kid_polynomial(
            x.features, y.features, subset_size=size, subsets=subsets, seed=seed
        )
        used_gamma = None
    else:
        value = kid_rbf(
            x.features, y.features, gamma=gamma, subset_size=size, subsets=subsets, seed=seed
        )
        used_gamma = gamma if gamma is not None else 1.0 / x.dim
    return KidReport(
        value=value, kernel=kernel, gamma=used_gamma, subset_size=size, subsets=subsets
    )


def _probabilities_of(payload: FeaturePayload, which: str) -> np.ndarray:
    if payload.probabilities is not None:
        return payload.probabilities.astype(np.float64)
    if payload.kind == FeatureKind.PROBABILITIES:
        return payload.features.astype(np.float64)
    raise PreconditionError(
        f"the {which} file carries no class probabilities (needed for this space)"
    )


def _vectors_for_space(
    payload: FeaturePayload,
    space: str,
    which: str,
    top_n: int | None,
    middle_n: int | None,
) -> np.ndarray:
    if space == "pre-logits":
        allowed = (FeatureKind.PRE_LOGITS, FeatureKind.GENERIC)
    elif space == "logits":
        allowed = (FeatureKind.LOGITS, FeatureKind.GENERIC)
    elif space == "binarized":
        probs = _probabilities_of(payload, which)
        if top_n is not None:
            return binarize_top_n(probs, top_n).astype(np.float64)
        return binarize_middle_n(probs, middle_n).astype(np.float64)
    else:
        raise PreconditionError(f"space must be one of {RESAMPLE_SPACES}, got {space!r}")
    if payload.kind not in allowed:
        raise PreconditionError(
            f"the {which} file is tagged {payload.kind.label}, not usable as {space}"
        )
    return payload.features.astype(np.float64)


@dataclass
class ResampleReport:
    space: str
    n_real: int
    n_candidates: int
    sample_count: int
    learning_rate: float
    iterations: int
    best_iteration: int
    initial_objective: float
    final_objective: float
    uniform_fid: float
    resampled_fid: float
    reduction: float
    weights_path: str | None
    trace_path: str | None
    indices_path: str | None


def resample_attack(
    real_path,
    gen_path,
    space: str = "pre-logits",
    top_n: int | None = None,
    middle_n: int | None = None,
    learning_rate: float | None = None,
    max_iters: int = DEFAULT_MAX_ITERS,
    eval_every: int = DEFAULT_EVAL_EVERY,
    seed: int = 0,
    sample_count: int | None = None,
    min_oversample: float = 1.0,
    out_dir=None,
) -> ResampleReport:
    """Weight-optimization attack end to end, reporting FID before and after.

    Both the baseline and the attack draw ``sample_count`` rows (default:
    the real count) from the candidates; the baseline draws uniformly, the
    attack from the optimized weights.  Distances are measured in the
    chosen space.  ``min_oversample`` guards against candidate pools too
    small to resample from meaningfully.
    """
    if space == "binarized":
        if (top_n is None) == (middle_n is None):
            raise PreconditionError(
                "binarized space needs exactly one of top_n / middle_n"
            )
    elif top_n is not None or middle_n is not None:
        raise PreconditionError("top_n / middle_n only apply to the binarized space")
    real_payload = _require_features(real_path)
    gen_payload = _require_features(gen_path)
    real_vec = _vectors_for_space(real_payload, space, "real", top_n, middle_n)
    gen_vec = _vectors_for_space(gen_payload, space, "generated", top_n, middle_n)

    n_real, n_gen = real_vec.shape[0], gen_vec.shape[0]
    if min_oversample > 0 and n_gen < min_oversample * n_real:
        raise PreconditionError(
            f"{n_gen} candidates for {n_real} real samples is below the required"
            f" {min_oversample:g}x oversampling"
        )
    if sample_count is None:
        sample_count = n_real
    if learning_rate is None:
        learning_rate = (
            DEFAULT_LEARNING_RATE_FEATURES
            if space == "pre-logits"
            else DEFAULT_LEARNING_RATE_INDICATORS
        )

    weights, trace = optimize_resampling_weights(
        real_vec,
        gen_vec,
        learning_rate=learning_rate,
        max_iters=max_iters,
        eval_every=eval_every,
        seed=seed,
        sample_count=sample_count,
    )

    real_stats = compute_stats(real_vec)
    report_seed = _derived_seed(seed, 101)
    uniform = sample_with_replacement(
        np.full(n_gen, 1.0 / n_gen), sample_count, seed=report_seed
    )
    uniform_fid = frechet_distance(real_stats, compute_stats(gen_vec[uniform]))
    probs = weights_to_probabilities(weights)
    chosen = sample_with_replacement(probs, sample_count, seed=report_seed)
    resampled_fid = frechet_distance(real_stats, compute_stats(gen_vec[chosen]))

    weights_path = trace_path = indices_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        weights_path = str(out / "log_weights.txt")
        np.savetxt(weights_path, weights.log_weights, fmt="%.17g")
        trace_path = str(out / "trace.tsv")
        Path(trace_path).write_text(trace.to_tsv(), encoding="utf-8")
        indices_path = str(out / "indices.txt")
        np.savetxt(indices_path, chosen, fmt="%d")

    return ResampleReport(
        space=space,
        n_real=n_real,
        n_candidates=n_gen,
        sample_count=sample_count,
        learning_rate=learning_rate,
        iterations=trace.iterations[-1],
        best_iteration=trace.best_iteration,
        initial_objective=trace.objectives[0],
        final_objective=trace.objectives[-1],
        uniform_fid=uniform_fid,
        resampled_fid=resampled_fid,
        reduction=1.0 - resampled_fid / uniform_fid if uniform_fid > 0 else 0.0,
        weights_path=weights_path,
        trace_path=trace_path,
        indices_path=indices_path,
    )


@dataclass
class Top1Report:
    n_selected: int
    matched: bool
    deficits: dict[int, int]
    pre_fid: float
    post_fid: float
    real_histogram: list[int]
    selected_histogram: list[int]
    indices_path: str | None


def top1_match_files(
    real_path, gen_path, seed: int = 0, allow_shortfall: bool = False, out_dir=None
) -> Top1Report:
    """Argmax-class histogram matching, with feature-space FID before/after."""
    real_payload = _require_features(real_path)
    gen_payload = _require_features(gen_path)
    result = top1_histogram_match(
        _probabilities_of(real_payload, "real"),
        _probabilities_of(gen_payload, "generated"),
        seed=seed,
        allow_shortfall=allow_shortfall,
    )
    real_stats = compute_stats(real_payload.features)
    pre_fid = frechet_distance(real_stats, compute_stats(gen_payload.features))
    post_fid = frechet_distance(
        real_stats, compute_stats(gen_payload.features[result.indices])
    )
    indices_path = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        indices_path = str(out / "indices.txt")
        np.savetxt(indices_path, result.indices, fmt="%d")
    return Top1Report(
        n_selected=int(result.indices.size),
        matched=result.matched,
        deficits=result.deficits,
        pre_fid=pre_fid,
        post_fid=post_fid,
        real_histogram=[int(v) for v in result.real_histogram],
        selected_histogram=[int(v) for v in result.selected_histogram],
        indices_path=indices_path,
    )


@dataclass
class SweepReport:
    ns: list[int]
    top_fids: list[float]
    middle_fids: list[float] | None
    tsv: str
    out_path: str | None


def topn_sweep_files(
    real_path,
    gen_path,
    ns,
    modes=("top", "middle"),
    learning_rate: float = DEFAULT_LEARNING_RATE_INDICATORS,
    max_iters: int = DEFAULT_MAX_ITERS,
    eval_every: int = DEFAULT_EVAL_EVERY,
    seed: int = 0,
    out_path=None,
) -> SweepReport:
    """Post-resampling FID versus N for top-N (and optionally middle-N) masks."""
    ns = [int(n) for n in ns]
    if not ns:
        raise PreconditionError("the sweep needs at least one N")
    for mode in modes:
        if mode not in ("top", "middle"):
            raise PreconditionError(f"unknown sweep mode {mode!r}")
    real_payload = _require_features(real_path)
    gen_payload = _require_features(gen_path)
    real_probs = _probabilities_of(real_payload, "real")
    gen_probs = _probabilities_of(gen_payload, "generated")

    curves: dict[str, list[float]] = {}
    for mode in modes:
        points = top_n_sweep(
            real_probs,
            gen_probs,
            real_payload.features,
            gen_payload.features,
            ns,
            mode=mode,
            learning_rate=learning_rate,
            max_iters=max_iters,
            eval_every=eval_every,
            seed=seed,
        )
        curves[mode] = [p.fid for p in points]

    header = ["n"] + [f"{mode}_fid" for mode in modes]
    lines = ["\t".join(header)]
    for i, n in enumerate(ns):
        row = [str(n)] + [f"{curves[mode][i]:.10g}" for mode in modes]
        lines.append("\t".join(row))
    tsv = "\n".join(lines) + "\n"
    if out_path is not None:
        Path(out_path).write_text(tsv, encoding="utf-8")
    return SweepReport(
        ns=ns,
        top_fids=curves.get("top"),
        middle_fids=curves.get("middle"),
        tsv=tsv,
        out_path=None if out_path is None else str(out_path),
    )


def _safe_name(name: str) -> str:
    base = os.path.basename(name)
    return re.sub(r"[^A-Za-z0-9._-]", "_", base) or "image"


@dataclass
class HeatmapEntry:
    index: int
    name: str
    png_path: str
    grid_path: str
    min_value: float
    max_value: float


@dataclass
class HeatmapReport:
    entries: list[HeatmapEntry]
    target: int
    leave_out: bool


def heatmap_files(
    real_path,
    gen_path,
    out_dir,
    indices=None,
    image_ids=None,
    leave_out: bool = True,
    base_stats_path=None,
    target: int = DEFAULT_HEATMAP_SIZE,
) -> HeatmapReport:
    """Per-image sensitivity heatmaps for a generated set with activations.

    For each selected image the distance gradient is taken at the
    generated statistics with that image held out (or at fixed base
    statistics if ``base_stats_path`` is given), distributed over the
    image's activation grid, and upsampled to ``target`` squared.  Each
    image yields a rendered PNG and the raw signed grid as a generic
    feature file of shape (target, target).
    """
    real_stats, _ = load_stats(real_path)
    payload = _require_features(gen_path)
    if payload.activations is None:
        raise PreconditionError(
            "the generated file has no activations block; heatmaps need one"
        )
    if base_stats_path is not None and leave_out:
        raise PreconditionError("leave-one-out and fixed base statistics are exclusive")

    n = payload.count
    if image_ids:
        if payload.image_ids is None:
            raise PreconditionError("file has no image ids; select by index instead")
        lookup = {name: i for i, name in enumerate(payload.image_ids)}
        missing = [name for name in image_ids if name not in lookup]
        if missing:
            raise PreconditionError(f"unknown image ids: {missing}")
        selection = [lookup[name] for name in image_ids]
    elif indices:
        selection = [int(i) for i in indices]
        bad = [i for i in selection if not 0 <= i < n]
        if bad:
            raise PreconditionError(f"image indices out of range: {bad}")
    else:
        selection = list(range(n))

    features = payload.features.astype(np.float64)
    if base_stats_path is not None:
        fixed_base, _ = feature_io.read_stats_file(base_stats_path)
    else:
        full = compute_stats(features)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in selection:
        if base_stats_path is not None:
            base, new_count = fixed_base, fixed_base.count + 1
        elif leave_out:
            base, new_count = downdate_stats(full, features[i]), full.count
        else:
            base, new_count = full, full.count + 1
        heat = heatmap_for_image(
            real_stats,
            base,
            features[i],
            payload.activations[i].astype(np.float64),
            new_count,
            target,
            target,
        )
        name = (
            _safe_name(payload.image_ids[i])
            if payload.image_ids is not None
            else f"image{i:05d}"
        )
        stem = os.path.splitext(name)[0]
        png_path = str(out / f"{stem}.png")
        _write_png(png_path, render_heatmap(heat.values))
        grid_path = str(out / f"{stem}.fidl")
        feature_io.write_feature_file(
            grid_path,
            FeaturePayload(
                kind=FeatureKind.GENERIC,
                features=heat.values.astype(np.float32),
            ),
        )
        entries.append(
            HeatmapEntry(
                index=i,
                name=stem,
                png_path=png_path,
                grid_path=grid_path,
                min_value=float(heat.values.min()),
                max_value=float(heat.values.max()),
            )
        )
    return HeatmapReport(entries=entries, target=target, leave_out=leave_out)


def _write_png(path, rgb: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def _load_image(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class NoiseApplyReport:
    n_images: int
    regions: list[str]
    sigmas: list[float]
    out_dirs: list[str]
    layout_path: str


def noise_probe_apply(
    images_dir,
    heatmaps_dir,
    out_dir,
    sigmas,
    regions=NOISE_REGIONS,
    seed: int = 0,
) -> NoiseApplyReport:
    """Write noised copies of an image folder, masked by heatmap importance.

    Every image must have a matching raw heatmap grid (``<stem>.fidl``,
    as written by the heatmap pipeline) at the image's resolution.  For
    each region and sigma a full copy of the folder is written under
    ``<region>-sigma<σ>/``, plus a ``layout.tsv`` indexing the copies.
    The masks split each image into equal halves by absolute heatmap
    value; ``everywhere`` noises every pixel as an upper-bound condition.
    """
    sigmas = [float(s) for s in sigmas]
    if not sigmas:
        raise PreconditionError("need at least one sigma")
    if any(s < 0 for s in sigmas):
        raise PreconditionError("sigmas must be nonnegative")
    regions = list(regions)
    for region in regions:
        if region not in NOISE_REGIONS:
            raise PreconditionError(f"unknown region {region!r}")

    images = sorted(
        p for p in Path(images_dir).iterdir() if p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not images:
        raise PreconditionError(f"no images found under {images_dir}")
    heat_dir = Path(heatmaps_dir)
    missing = [p.name for p in images if not (heat_dir / f"{p.stem}.fidl").exists()]
    if missing:
        raise PreconditionError(f"heatmap grids missing for: {missing}")

    masks = {}
    for p in images:
        grid = feature_io.read_feature_file(heat_dir / f"{p.stem}.fidl")
        important, unimportant = importance_masks(grid.features)
        masks[p.name] = {
            "important": important,
            "unimportant": unimportant,
            "everywhere": np.ones_like(important),
        }

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    out_dirs = []
    layout_lines = ["region\tsigma\tdirectory"]
    for r_idx, region in enumerate(regions):
        for s_idx, sigma in enumerate(sigmas):
            sub = out / f"{region}-sigma{sigma:g}"
            sub.mkdir(exist_ok=True)
            for i_idx, p in enumerate(images):
                image = _load_image(p)
                mask = masks[p.name][region]
                if mask.shape != image.shape[:2]:
                    raise PreconditionError(
                        f"heatmap for {p.name} is {mask.shape}, image is {image.shape[:2]}"
                    )
                noised = add_masked_noise(
                    image, mask, sigma, _derived_seed(seed, r_idx, s_idx, i_idx)
                )
                rgb = np.clip(np.rint(noised * 255.0), 0, 255).astype(np.uint8)
                _write_png(str(sub / f"{p.stem}.png"), rgb)
            out_dirs.append(str(sub))
            layout_lines.append(f"{region}\t{sigma:g}\t{sub}")
    layout_path = str(out / "layout.tsv")
    Path(layout_path).write_text("\n".join(layout_lines) + "\n", encoding="utf-8")
    return NoiseApplyReport(
        n_images=len(images),
        regions=regions,
        sigmas=sigmas,
        out_dirs=out_dirs,
        layout_path=layout_path,
    )


@dataclass
class NoiseEvalRow:
    region: str
    sigma: float
    fid: float


def noise_probe_evaluate(real_path, manifest_path, force: bool = False) -> list[NoiseEvalRow]:
    """FID against the real set for each (region, sigma, features) manifest row.

    The manifest is a TSV with rows ``region<TAB>sigma<TAB>features-path``
    (header and '#' comments allowed); the feature files come from
    re-extracting the noised image folders.
    """
    real_stats, real_kind = load_stats(real_path)
    rows = []
    text = Path(manifest_path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.lower().startswith("region\t"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise PreconditionError(
                f"manifest line {lineno}: expected region<TAB>sigma<TAB>path"
            )
        region, sigma_text, feat_path = parts
        if region not in NOISE_REGIONS:
            raise PreconditionError(f"manifest line {lineno}: unknown region {region!r}")
        try:
            sigma = float(sigma_text)
        except ValueError:
            raise PreconditionError(
                f"manifest line {lineno}: bad sigma {sigma_text!r}"
            ) from None
        stats, kind = load_stats(feat_path)
        if kind != real_kind and not force:
            raise PreconditionError(
                f"manifest line {lineno}: {kind.label} features against"
                f" {real_kind.label} real set; use force to override"
            )
        rows.append(
            NoiseEvalRow(region=region, sigma=sigma, fid=frechet_distance(real_stats, stats))
        )
    if not rows:
        raise PreconditionError("manifest contains no data rows")
    return rows


def noise_eval_tsv(rows: list[NoiseEvalRow]) -> str:
    lines = ["region\tsigma\tfid"]
    for row in sorted(rows, key=lambda r: (r.region, r.sigma)):
        lines.append(f"{row.region}\t{row.sigma:g}\t{row.fid:.10g}")
    return "\n".join(lines) + "\n"


@dataclass
class SynthReport:
    out_path: str
    n: int
    dim: int
    n_classes: int
    has_activations: bool


def synth_files(
    spec_path, n: int, seed: int, out_path, activation_grid: int | None = None
) -> SynthReport:
    """Draw from a mixture spec and write the result as a feature file.

    The features stand in for pre-logits and are tagged as such; class
    probabilities ride along.  With ``activation_grid`` set, a synthetic
    (n, d, s, s) activation tensor is added whose spatial averages
    reproduce the features, so the heatmap pipeline can run end to end on
    synthetic data.
    """
    spec = load_mixture_spec(spec_path)
    sample = synth_generate(spec, n, seed)
    activations = None
    if activation_grid is not None:
        if activation_grid < 1:
            raise PreconditionError(f"activation grid must be >= 1, got {activation_grid}")
        s = activation_grid
        rng = np.random.default_rng(_derived_seed(seed, 202))
        spread = rng.standard_normal((n, spec.dim, s, s))
        spread -= spread.mean(axis=(2, 3), keepdims=True)
        activations = (sample.features[:, :, None, None] + spread).astype(np.float32)
    payload = FeaturePayload(
        kind=FeatureKind.PRE_LOGITS,
        features=sample.features.astype(np.float32),
        probabilities=sample.probabilities.astype(np.float32),
        activations=activations,
    )
    feature_io.write_feature_file(out_path, payload)
    return SynthReport(
        out_path=str(out_path),
        n=n,
        dim=spec.dim,
        n_classes=spec.n_classes,
        has_activations=activations is not None,
    )


@dataclass
class BiasReport:
    sizes: list[int]
    mean_fids: list[float]
    repeats: int
    tsv: str


def bias_probe_files(spec_path, sizes, repeats: int, seed: int) -> BiasReport:
    spec = load_mixture_spec(spec_path)
    table = bias_probe(spec, sizes, repeats, seed)
    lines = ["size\tmean_fid"]
    for point in table:
        lines.append(f"{point.sample_size}\t{point.mean_fid:.10g}")
    return BiasReport(
        sizes=[p.sample_size for p in table],
        mean_fids=[p.mean_fid for p in table],
        repeats=repeats,
        tsv="\n".join(lines) + "\n",
    )


@dataclass
class ValidateReport:
    path: str
    file_type: str
    kind: str
    count: int
    dim: int
    blocks: list[str]
    consistency_passed: bool | None
    worst_deviation: float | None


def validate_file(path) -> ValidateReport:
    """Structural checks plus the activation pooling check when applicable."""
    if feature_io.is_stats_file(path):
        stats, kind = feature_io.read_stats_file(path)
        return ValidateReport(
            path=str(path),
            file_type="stats",
            kind=kind.label,
            count=stats.count,
            dim=stats.dim,
            blocks=["mean", "cov"],
            consistency_passed=None,
            worst_deviation=None,
        )
    payload = feature_io.read_feature_file(path)
    blocks = ["features"]
    if payload.probabilities is not None:
        blocks.append("probabilities")
    if payload.activations is not None:
        blocks.append("activations")
    if payload.image_ids is not None:
        blocks.append("image-ids")
    consistency_passed = None
    worst = None
    if payload.activations is not None:
        report = feature_io.validate_activation_consistency(payload)
        consistency_passed = report.passed
        worst = float(max(report.deviations)) if len(report.deviations) else 0.0
    return ValidateReport(
        path=str(path),
        file_type="features",
        kind=payload.kind.label,
        count=payload.count,
        dim=payload.dim,
        blocks=blocks,
        consistency_passed=consistency_passed,
        worst_deviation=worst,
    )
