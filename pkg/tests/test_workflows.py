import numpy as np
import pytest
from PIL import Image

from fidlens import feature_io, workflows
from fidlens.errors import PreconditionError
from fidlens.feature_io import FeatureKind, FeaturePayload
from fidlens.stats import compute_stats


def write_features(path, features, kind=FeatureKind.GENERIC, **blocks):
    payload = FeaturePayload(
        kind=kind, features=np.asarray(features, dtype=np.float32), **blocks
    )
    feature_io.write_feature_file(path, payload)
    return str(path)


def soft_probs(classes, n_classes):
    out = np.full((len(classes), n_classes), 0.1 / (n_classes - 1), dtype=np.float32)
    for i, c in enumerate(classes):
        out[i, c] = 0.9
    return out


@pytest.fixture
def gaussian_pair(tmp_path, rng):
    a = write_features(tmp_path / "a.fidl", rng.standard_normal((60, 4)))
    b = write_features(tmp_path / "b.fidl", rng.standard_normal((60, 4)) + 0.5)
    return a, b


class TestStatsAndLoading:
    def test_load_stats_matches_direct(self, tmp_path, rng):
        features = rng.standard_normal((30, 3))
        path = write_features(tmp_path / "f.fidl", features)
        stats, kind = workflows.load_stats(path)
        direct = compute_stats(np.asarray(features, dtype=np.float32))
        np.testing.assert_array_equal(stats.mean, direct.mean)
        assert kind == FeatureKind.GENERIC

    def test_compute_stats_file_roundtrip(self, tmp_path, rng):
        src = write_features(
            tmp_path / "f.fidl", rng.standard_normal((30, 3)), kind=FeatureKind.LOGITS
        )
        out = tmp_path / "f.fids"
        report = workflows.compute_stats_file(src, out)
        assert report.kind == "logits"
        assert report.count == 30 and report.dim == 3
        stats, kind = workflows.load_stats(out)
        assert kind == FeatureKind.LOGITS
        assert stats.count == 30

    def test_stats_file_rejected_where_features_needed(self, tmp_path, rng):
        src = write_features(tmp_path / "f.fidl", rng.standard_normal((30, 3)))
        out = tmp_path / "f.fids"
        workflows.compute_stats_file(src, out)
        with pytest.raises(PreconditionError, match="raw features"):
            workflows.compute_stats_file(out, tmp_path / "again.fids")


class TestFidBetween:
    def test_self_distance_zero(self, tmp_path, rng):
        path = write_features(tmp_path / "f.fidl", rng.standard_normal((50, 4)))
        report = workflows.fid_between(path, path)
        assert report.value <= 1e-6 * 4
        assert report.count_a == report.count_b == 50

    def test_feature_vs_stats_input(self, tmp_path, rng):
        feats = write_features(tmp_path / "f.fidl", rng.standard_normal((50, 4)))
        stats = tmp_path / "f.fids"
        workflows.compute_stats_file(feats, stats)
        report = workflows.fid_between(feats, stats)
        assert report.value <= 1e-6 * 4

    def test_kind_mismatch_refused_unless_forced(self, tmp_path, rng):
        a = write_features(
            tmp_path / "a.fidl", rng.standard_normal((40, 4)), kind=FeatureKind.PRE_LOGITS
        )
        # logits dodge the pooling check that pre-logits files get
        b = write_features(
            tmp_path / "b.fidl", rng.standard_normal((40, 4)), kind=FeatureKind.LOGITS
        )
        with pytest.raises(PreconditionError, match="refusing"):
            workflows.fid_between(a, b)
        report = workflows.fid_between(a, b, force=True)
        assert report.kind_a == "pre-logits" and report.kind_b == "logits"


class TestKidBetween:
    def test_subset_size_shrinks_to_data(self, gaussian_pair):
        a, b = gaussian_pair
        report = workflows.kid_between(a, b, subset_size=1000, subsets=5, seed=0)
        assert report.subset_size == 60
        assert report.kernel == "polynomial"
        assert report.gamma is None
        assert np.isfinite(report.value)

    def test_rbf_reports_default_gamma(self, gaussian_pair):
        a, b = gaussian_pair
        report = workflows.kid_between(a, b, kernel="rbf", subsets=5, seed=0)
        assert report.gamma == pytest.approx(1.0 / 4)

    def test_unknown_kernel(self, gaussian_pair):
        a, b = gaussian_pair
        with pytest.raises(PreconditionError):
            workflows.kid_between(a, b, kernel="sigmoid")


class TestResampleAttack:
    def make_instance(self, tmp_path, rng):
        real = rng.standard_normal((40, 4))
        inliers = rng.standard_normal((80, 4))
        outliers = rng.standard_normal((80, 4)) + 2.0
        real_path = write_features(tmp_path / "real.fidl", real)
        gen_path = write_features(tmp_path / "gen.fidl", np.vstack([inliers, outliers]))
        return real_path, gen_path

    def test_attack_beats_uniform(self, tmp_path, rng):
        real_path, gen_path = self.make_instance(tmp_path, rng)
        report = workflows.resample_attack(
            real_path,
            gen_path,
            max_iters=60,
            eval_every=20,
            seed=0,
            out_dir=tmp_path / "out",
        )
        assert report.resampled_fid < report.uniform_fid
        assert 0 < report.reduction <= 1
        assert report.n_real == 40 and report.n_candidates == 160
        assert report.sample_count == 40
        assert report.learning_rate == 10.0  # feature-space default
        weights = np.loadtxt(report.weights_path)
        assert weights.shape == (160,)
        trace_lines = open(report.trace_path).read().splitlines()
        assert trace_lines[0] == "iteration\tobjective"
        indices = np.loadtxt(report.indices_path, dtype=int)
        assert indices.shape == (40,)
        assert ((0 <= indices) & (indices < 160)).all()

    def test_binarized_needs_exactly_one_selector(self, tmp_path, rng):
        real_path, gen_path = self.make_instance(tmp_path, rng)
        with pytest.raises(PreconditionError, match="exactly one"):
            workflows.resample_attack(real_path, gen_path, space="binarized")
        with pytest.raises(PreconditionError, match="exactly one"):
            workflows.resample_attack(
                real_path, gen_path, space="binarized", top_n=1, middle_n=1
            )

    def test_selectors_rejected_outside_binarized(self, tmp_path, rng):
        real_path, gen_path = self.make_instance(tmp_path, rng)
        with pytest.raises(PreconditionError, match="binarized"):
            workflows.resample_attack(real_path, gen_path, top_n=1)

    def test_oversample_guard(self, tmp_path, rng):
        real_path, gen_path = self.make_instance(tmp_path, rng)
        with pytest.raises(PreconditionError, match="oversampling"):
            workflows.resample_attack(
                real_path, gen_path, min_oversample=10.0, max_iters=1, eval_every=1
            )

    def test_binarized_space(self, tmp_path, rng):
        classes_real = rng.integers(0, 4, 40)
        classes_gen = rng.integers(0, 4, 160)
        real_path = write_features(
            tmp_path / "real.fidl",
            rng.standard_normal((40, 3)),
            probabilities=soft_probs(classes_real, 4),
        )
        gen_path = write_features(
            tmp_path / "gen.fidl",
            rng.standard_normal((160, 3)),
            probabilities=soft_probs(classes_gen, 4),
        )
        report = workflows.resample_attack(
            real_path,
            gen_path,
            space="binarized",
            top_n=2,
            max_iters=20,
            eval_every=10,
            seed=0,
        )
        assert report.space == "binarized"
        assert report.learning_rate == 5.0  # indicator-space default
        assert np.isfinite(report.resampled_fid)


class TestTop1Match:
    def test_end_to_end(self, tmp_path, rng):
        classes_real = rng.integers(0, 3, 30)
        classes_gen = rng.integers(0, 3, 120)
        real_path = write_features(
            tmp_path / "real.fidl",
            rng.standard_normal((30, 4)),
            probabilities=soft_probs(classes_real, 3),
        )
        gen_path = write_features(
            tmp_path / "gen.fidl",
            rng.standard_normal((120, 4)) + 0.4,
            probabilities=soft_probs(classes_gen, 3),
        )
        report = workflows.top1_match_files(
            real_path, gen_path, seed=0, out_dir=tmp_path / "sel"
        )
        assert report.matched
        assert report.n_selected == 30
        assert report.selected_histogram == report.real_histogram
        assert report.deficits == {}
        indices = np.loadtxt(report.indices_path, dtype=int)
        assert indices.size == 30
        assert report.pre_fid > 0 and report.post_fid > 0

    def test_needs_probabilities(self, tmp_path, rng):
        a = write_features(tmp_path / "a.fidl", rng.standard_normal((20, 4)))
        b = write_features(tmp_path / "b.fidl", rng.standard_normal((20, 4)))
        with pytest.raises(PreconditionError, match="probabilities"):
            workflows.top1_match_files(a, b)


class TestTopnSweep:
    def make_files(self, tmp_path, rng):
        real_path = write_features(
            tmp_path / "real.fidl",
            rng.standard_normal((50, 3)),
            probabilities=soft_probs(rng.integers(0, 4, 50), 4),
        )
        gen_path = write_features(
            tmp_path / "gen.fidl",
            rng.standard_normal((200, 3)) + 0.3,
            probabilities=soft_probs(rng.integers(0, 4, 200), 4),
        )
        return real_path, gen_path

    def test_both_modes_tsv(self, tmp_path, rng):
        real_path, gen_path = self.make_files(tmp_path, rng)
        out = tmp_path / "sweep.tsv"
        report = workflows.topn_sweep_files(
            real_path, gen_path, [1, 2], max_iters=10, eval_every=5, seed=0, out_path=out
        )
        lines = report.tsv.splitlines()
        assert lines[0] == "n\ttop_fid\tmiddle_fid"
        assert len(lines) == 3
        assert report.ns == [1, 2]
        assert len(report.top_fids) == 2 and len(report.middle_fids) == 2
        assert out.read_text() == report.tsv

    def test_top_only(self, tmp_path, rng):
        real_path, gen_path = self.make_files(tmp_path, rng)
        report = workflows.topn_sweep_files(
            real_path, gen_path, [1], modes=("top",), max_iters=10, eval_every=5, seed=0
        )
        assert report.middle_fids is None
        assert report.tsv.splitlines()[0] == "n\ttop_fid"

    def test_validation(self, tmp_path, rng):
        real_path, gen_path = self.make_files(tmp_path, rng)
        with pytest.raises(PreconditionError):
            workflows.topn_sweep_files(real_path, gen_path, [])
        with pytest.raises(PreconditionError):
            workflows.topn_sweep_files(real_path, gen_path, [1], modes=("bottom",))


def consistent_activations(features, s=2):
    """(n, d, s, s) tensor whose spatial means equal the features exactly."""
    n, d = features.shape
    delta = np.array([[0.25, -0.25], [0.125, -0.125]], dtype=np.float32)
    return features[:, :, None, None].astype(np.float32) + delta


class TestHeatmapFiles:
    def make_files(self, tmp_path, rng, with_ids=True):
        real_path = write_features(
            tmp_path / "real.fidl",
            rng.standard_normal((30, 3)),
            kind=FeatureKind.PRE_LOGITS,
        )
        features = rng.standard_normal((5, 3)).astype(np.float32)
        ids = [f"gen-{i}.png" for i in range(5)] if with_ids else None
        gen_path = write_features(
            tmp_path / "gen.fidl",
            features,
            kind=FeatureKind.PRE_LOGITS,
            activations=consistent_activations(features),
            image_ids=ids,
        )
        return real_path, gen_path

    def test_writes_png_and_grid(self, tmp_path, rng):
        real_path, gen_path = self.make_files(tmp_path, rng)
        report = workflows.heatmap_files(
            real_path, gen_path, tmp_path / "maps", indices=[0, 3], target=16
        )
        assert [e.index for e in report.entries] == [0, 3]
        for entry in report.entries:
            img = Image.open(entry.png_path)
            assert img.size == (16, 16)
            grid = feature_io.read_feature_file(entry.grid_path)
            assert grid.features.shape == (16, 16)
            assert grid.kind == FeatureKind.GENERIC
            assert entry.min_value <= entry.max_value

    def test_select_by_id(self, tmp_path, rng):
        real_path, gen_path = self.make_files(tmp_path, rng)
        report = workflows.heatmap_files(
            real_path, gen_path, tmp_path / "maps", image_ids=["gen-2.png"], target=16
        )
        assert len(report.entries) == 1
        assert report.entries[0].index == 2
        assert report.entries[0].name == "gen-2"

    def test_unknown_id_and_bad_index(self, tmp_path, rng):
        real_path, gen_path = self.make_files(tmp_path, rng)
        with pytest.raises(PreconditionError, match="unknown image ids"):
            workflows.heatmap_files(
                real_path, gen_path, tmp_path / "maps", image_ids=["nope.png"]
            )
        with pytest.raises(PreconditionError, match="out of range"):
            workflows.heatmap_files(real_path, gen_path, tmp_path / "maps", indices=[9])

    def test_requires_activations(self, tmp_path, rng):
        real_path, _ = self.make_files(tmp_path, rng)
        bare = write_features(tmp_path / "bare.fidl", rng.standard_normal((5, 3)))
        with pytest.raises(PreconditionError, match="activations"):
            workflows.heatmap_files(real_path, bare, tmp_path / "maps")

    def test_leave_out_and_base_stats_exclusive(self, tmp_path, rng):
        real_path, gen_path = self.make_files(tmp_path, rng)
        base = tmp_path / "base.fids"
        workflows.compute_stats_file(gen_path, base)
        with pytest.raises(PreconditionError, match="exclusive"):
            workflows.heatmap_files(
                real_path, gen_path, tmp_path / "maps", base_stats_path=base
            )
        # with leave_out disabled the fixed base is accepted
        report = workflows.heatmap_files(
            real_path,
            gen_path,
            tmp_path / "maps",
            indices=[0],
            leave_out=False,
            base_stats_path=base,
            target=16,
        )
        assert not report.leave_out


class TestNoiseProbe:
    def make_inputs(self, tmp_path, rng):
        images = tmp_path / "images"
        heatmaps = tmp_path / "heat"
        images.mkdir()
        heatmaps.mkdir()
        for i in range(2):
            pixels = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
            Image.fromarray(pixels, mode="RGB").save(images / f"img{i}.png")
            write_features(
                heatmaps / f"img{i}.fidl", rng.standard_normal((8, 8))
            )
        return images, heatmaps

    def test_apply_layout(self, tmp_path, rng):
        images, heatmaps = self.make_inputs(tmp_path, rng)
        report = workflows.noise_probe_apply(
            images, heatmaps, tmp_path / "noised", sigmas=[0.0, 0.3], seed=0
        )
        assert report.n_images == 2
        assert len(report.out_dirs) == 6  # 3 regions x 2 sigmas
        layout = open(report.layout_path).read().splitlines()
        assert layout[0] == "region\tsigma\tdirectory"
        assert len(layout) == 7

    def test_sigma_zero_is_identity(self, tmp_path, rng):
        images, heatmaps = self.make_inputs(tmp_path, rng)
        report = workflows.noise_probe_apply(
            images, heatmaps, tmp_path / "noised", sigmas=[0.0], regions=["important"], seed=0
        )
        for i in range(2):
            original = np.asarray(Image.open(images / f"img{i}.png"))
            copied = np.asarray(Image.open(f"{report.out_dirs[0]}/img{i}.png"))
            np.testing.assert_array_equal(original, copied)

    def test_missing_heatmap_rejected(self, tmp_path, rng):
        images, heatmaps = self.make_inputs(tmp_path, rng)
        (heatmaps / "img1.fidl").unlink()
        with pytest.raises(PreconditionError, match="img1.png"):
            workflows.noise_probe_apply(images, heatmaps, tmp_path / "noised", sigmas=[0.1])

    def test_validation(self, tmp_path, rng):
        images, heatmaps = self.make_inputs(tmp_path, rng)
        with pytest.raises(PreconditionError):
            workflows.noise_probe_apply(images, heatmaps, tmp_path / "o", sigmas=[])
        with pytest.raises(PreconditionError):
            workflows.noise_probe_apply(images, heatmaps, tmp_path / "o", sigmas=[-1.0])
        with pytest.raises(PreconditionError):
            workflows.noise_probe_apply(
                images, heatmaps, tmp_path / "o", sigmas=[0.1], regions=["elsewhere"]
            )

    def test_evaluate_manifest(self, tmp_path, rng):
        real = write_features(tmp_path / "real.fidl", rng.standard_normal((40, 3)))
        f1 = write_features(tmp_path / "f1.fidl", rng.standard_normal((40, 3)))
        f2 = write_features(tmp_path / "f2.fidl", rng.standard_normal((40, 3)) + 1.0)
        manifest = tmp_path / "manifest.tsv"
        manifest.write_text(
            "region\tsigma\tpath\n"
            "# comment line\n"
            f"unimportant\t0.2\t{f2}\n"
            f"important\t0.2\t{f1}\n",
            encoding="utf-8",
        )
        rows = workflows.noise_probe_evaluate(real, manifest)
        assert len(rows) == 2
        assert {r.region for r in rows} == {"important", "unimportant"}
        tsv = workflows.noise_eval_tsv(rows)
        lines = tsv.splitlines()
        assert lines[0] == "region\tsigma\tfid"
        assert lines[1].startswith("important\t")  # sorted by region
        assert lines[2].startswith("unimportant\t")

    def test_evaluate_kind_mismatch(self, tmp_path, rng):
        real = write_features(
            tmp_path / "real.fidl", rng.standard_normal((40, 3)), kind=FeatureKind.LOGITS
        )
        f1 = write_features(tmp_path / "f1.fidl", rng.standard_normal((40, 3)))
        manifest = tmp_path / "m.tsv"
        manifest.write_text(f"important\t0.1\t{f1}\n", encoding="utf-8")
        with pytest.raises(PreconditionError, match="force"):
            workflows.noise_probe_evaluate(real, manifest)
        rows = workflows.noise_probe_evaluate(real, manifest, force=True)
        assert len(rows) == 1

    def test_evaluate_malformed_manifest(self, tmp_path, rng):
        real = write_features(tmp_path / "real.fidl", rng.standard_normal((40, 3)))
        bad = tmp_path / "bad.tsv"
        bad.write_text("important\t0.1\n", encoding="utf-8")
        with pytest.raises(PreconditionError, match="line 1"):
            workflows.noise_probe_evaluate(real, bad)
        empty = tmp_path / "empty.tsv"
        empty.write_text("# nothing\n", encoding="utf-8")
        with pytest.raises(PreconditionError, match="no data rows"):
            workflows.noise_probe_evaluate(real, empty)


SPEC_TEXT = """\
dim 4
temperature 2.0
component label=a proportion=0.5 mean=0 var=1
component label=b proportion=0.5 mean=2 var=1
"""


class TestSynthFiles:
    def test_writes_tagged_features(self, tmp_path):
        spec_path = tmp_path / "spec.txt"
        spec_path.write_text(SPEC_TEXT)
        out = tmp_path / "synth.fidl"
        report = workflows.synth_files(spec_path, 50, seed=3, out_path=out)
        assert report.n == 50 and report.dim == 4 and report.n_classes == 2
        assert not report.has_activations
        payload = feature_io.read_feature_file(out)
        assert payload.kind == FeatureKind.PRE_LOGITS
        assert payload.probabilities.shape == (50, 2)

    def test_activation_grid_consistent(self, tmp_path):
        spec_path = tmp_path / "spec.txt"
        spec_path.write_text(SPEC_TEXT)
        out = tmp_path / "synth.fidl"
        report = workflows.synth_files(
            spec_path, 20, seed=3, out_path=out, activation_grid=2
        )
        assert report.has_activations
        check = workflows.validate_file(out)
        assert check.consistency_passed
        assert "activations" in check.blocks

    def test_deterministic_bytes(self, tmp_path):
        spec_path = tmp_path / "spec.txt"
        spec_path.write_text(SPEC_TEXT)
        a, b = tmp_path / "a.fidl", tmp_path / "b.fidl"
        workflows.synth_files(spec_path, 30, seed=9, out_path=a)
        workflows.synth_files(spec_path, 30, seed=9, out_path=b)
        assert a.read_bytes() == b.read_bytes()


class TestBiasProbeFiles:
    def test_tsv(self, tmp_path):
        spec_path = tmp_path / "spec.txt"
        spec_path.write_text("dim 3\ncomponent label=x proportion=1 mean=0 var=1\n")
        report = workflows.bias_probe_files(spec_path, [100, 400], repeats=2, seed=0)
        lines = report.tsv.splitlines()
        assert lines[0] == "size\tmean_fid"
        assert lines[1].startswith("100\t")
        assert lines[2].startswith("400\t")
        assert report.sizes == [100, 400]
        assert report.mean_fids[1] < report.mean_fids[0]


class TestValidateFile:
    def test_feature_file_with_all_blocks(self):
        report = workflows.validate_file("tests/data/golden_v1.fidl")
        assert report.file_type == "features"
        assert report.kind == "pre-logits"
        assert report.blocks == ["features", "probabilities", "activations", "image-ids"]
        assert report.consistency_passed is True
        assert report.worst_deviation is not None

    def test_stats_file(self, tmp_path, rng):
        src = write_features(tmp_path / "f.fidl", rng.standard_normal((20, 3)))
        out = tmp_path / "f.fids"
        workflows.compute_stats_file(src, out)
        report = workflows.validate_file(out)
        assert report.file_type == "stats"
        assert report.blocks == ["mean", "cov"]
        assert report.consistency_passed is None

    def test_features_only(self, tmp_path, rng):
        path = write_features(tmp_path / "f.fidl", rng.standard_normal((20, 3)))
        report = workflows.validate_file(path)
        assert report.blocks == ["features"]
        assert report.consistency_passed is None
