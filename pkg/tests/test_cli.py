import shutil
import subprocess

import numpy as np
import pytest
from click.testing import CliRunner

from fidlens import feature_io
from fidlens.cli import RemoteError, cli
from fidlens.errors import PreconditionError, UnsupportedError
from fidlens.feature_io import FeatureKind, FeaturePayload

GOLDEN = "tests/data/golden_v1.fidl"


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
def runner():
    return CliRunner()


@pytest.fixture
def pair(tmp_path, rng):
    a = write_features(tmp_path / "a.fidl", rng.standard_normal((50, 4)))
    b = write_features(tmp_path / "b.fidl", rng.standard_normal((50, 4)) + 0.5)
    return a, b


class TestFidCommand:
    def test_self_distance_prints_four_decimals(self, runner, pair):
        a, _ = pair
        result = runner.invoke(cli, ["fid", a, a])
        assert result.exit_code == 0
        assert result.output == "0.0000\n"

    def test_kind_mismatch_and_force(self, runner, tmp_path, rng):
        a = write_features(
            tmp_path / "a.fidl", rng.standard_normal((30, 4)), kind=FeatureKind.LOGITS
        )
        b = write_features(tmp_path / "b.fidl", rng.standard_normal((30, 4)))
        refused = runner.invoke(cli, ["fid", a, b])
        assert refused.exit_code != 0
        assert isinstance(refused.exception, PreconditionError)
        forced = runner.invoke(cli, ["fid", "--force", a, b])
        assert forced.exit_code == 0

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["fid", str(tmp_path / "no.fidl"), str(tmp_path / "x")])
        assert result.exit_code != 0


class TestKidCommand:
    def test_value_printed(self, runner, pair):
        a, b = pair
        result = runner.invoke(cli, ["kid", a, b, "--subsets", "5"])
        assert result.exit_code == 0
        float(result.output.strip())  # parseable scalar

    def test_gamma_requires_rbf(self, runner, pair):
        a, b = pair
        result = runner.invoke(cli, ["kid", a, b, "--gamma", "0.5"])
        assert result.exit_code == 2

    def test_rbf_with_gamma(self, runner, pair):
        a, b = pair
        result = runner.invoke(
            cli, ["kid", a, b, "--rbf", "--gamma", "0.5", "--subsets", "5"]
        )
        assert result.exit_code == 0


class TestStatsCommand:
    def test_stats_then_fid(self, runner, pair, tmp_path):
        a, _ = pair
        out = str(tmp_path / "a.fids")
        result = runner.invoke(cli, ["stats", a, out])
        assert result.exit_code == 0
        assert f"out_path\t{out}" in result.output
        assert "count\t50" in result.output
        fid = runner.invoke(cli, ["fid", a, out])
        assert fid.exit_code == 0
        assert fid.output == "0.0000\n"


class TestResampleCommand:
    def test_attack_with_outputs(self, runner, tmp_path, rng):
        real = write_features(tmp_path / "real.fidl", rng.standard_normal((30, 3)))
        gen = write_features(
            tmp_path / "gen.fidl",
            np.vstack([rng.standard_normal((60, 3)), rng.standard_normal((60, 3)) + 2]),
        )
        out = tmp_path / "attack"
        result = runner.invoke(
            cli,
            [
                "resample", real, gen,
                "--iters", "40", "--eval-every", "20", "--seed", "0",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0
        kv = dict(line.split("\t") for line in result.stdout.splitlines())
        assert kv["space"] == "pre-logits"
        assert float(kv["resampled_fid"]) < float(kv["uniform_fid"])
        assert (out / "log_weights.txt").exists()
        assert (out / "trace.tsv").exists()
        assert (out / "indices.txt").exists()
        assert "optimizing weights" in result.stderr

    def test_oversample_guard(self, runner, pair):
        a, b = pair  # 50 candidates for 50 real rows
        result = runner.invoke(
            cli, ["resample", a, b, "--oversample", "4", "--iters", "1"]
        )
        assert result.exit_code != 0
        assert isinstance(result.exception, PreconditionError)


class TestTop1MatchCommand:
    def test_match(self, runner, tmp_path, rng):
        real = write_features(
            tmp_path / "real.fidl",
            rng.standard_normal((20, 3)),
            probabilities=soft_probs(rng.integers(0, 3, 20), 3),
        )
        gen = write_features(
            tmp_path / "gen.fidl",
            rng.standard_normal((80, 3)),
            probabilities=soft_probs(rng.integers(0, 3, 80), 3),
        )
        result = runner.invoke(cli, ["top1-match", real, gen])
        assert result.exit_code == 0
        assert "matched\ttrue" in result.output
        assert "deficits\tnone" in result.output


class TestTopnSweepCommand:
    def test_tsv_output(self, runner, tmp_path, rng):
        real = write_features(
            tmp_path / "real.fidl",
            rng.standard_normal((40, 3)),
            probabilities=soft_probs(rng.integers(0, 4, 40), 4),
        )
        gen = write_features(
            tmp_path / "gen.fidl",
            rng.standard_normal((160, 3)),
            probabilities=soft_probs(rng.integers(0, 4, 160), 4),
        )
        out = tmp_path / "sweep.tsv"
        result = runner.invoke(
            cli,
            [
                "topn-sweep", real, gen,
                "--ns", "1,2", "--iters", "10", "--eval-every", "5",
                "--out", str(out),
            ],
        )
        assert result.exit_code == 0
        lines = result.stdout.splitlines()
        assert lines[0] == "n\ttop_fid\tmiddle_fid"
        assert len(lines) == 3
        assert out.read_text() == result.stdout
        assert "sweeping N" in result.stderr

    def test_bad_ns_list(self, runner, pair):
        a, b = pair
        result = runner.invoke(cli, ["topn-sweep", a, b, "--ns", "1,x"])
        assert result.exit_code == 2


class TestHeatmapCommand:
    def test_writes_outputs(self, runner, tmp_path, rng):
        real = write_features(tmp_path / "real.fidl", rng.standard_normal((20, 3)))
        feats = rng.standard_normal((4, 3)).astype(np.float32)
        delta = np.array([[0.25, -0.25], [0.125, -0.125]], dtype=np.float32)
        gen = write_features(
            tmp_path / "gen.fidl",
            feats,
            activations=feats[:, :, None, None] + delta,
        )
        result = runner.invoke(
            cli,
            ["heatmap", real, gen, "--out", str(tmp_path / "maps"),
             "--index", "1", "--target", "16"],
        )
        assert result.exit_code == 0
        lines = result.output.splitlines()
        assert lines[0] == "index\tname\tpng\tgrid"
        assert lines[1].startswith("1\timage00001\t")
        assert (tmp_path / "maps" / "image00001.png").exists()


class TestNoiseProbeCommands:
    def make_inputs(self, tmp_path, rng):
        from PIL import Image

        images = tmp_path / "images"
        heatmaps = tmp_path / "heat"
        images.mkdir()
        heatmaps.mkdir()
        for i in range(2):
            pixels = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
            Image.fromarray(pixels, mode="RGB").save(images / f"img{i}.png")
            write_features(heatmaps / f"img{i}.fidl", rng.standard_normal((8, 8)))
        return images, heatmaps

    def test_apply_then_evaluate(self, runner, tmp_path, rng):
        images, heatmaps = self.make_inputs(tmp_path, rng)
        out = tmp_path / "noised"
        result = runner.invoke(
            cli,
            ["noise-probe", "apply", str(images), str(heatmaps),
             "--out", str(out), "--sigmas", "0.1", "--regions", "important"],
        )
        assert result.exit_code == 0
        assert "n_images\t2" in result.output
        assert (out / "layout.tsv").exists()

        real = write_features(tmp_path / "real.fidl", rng.standard_normal((30, 3)))
        f1 = write_features(tmp_path / "f1.fidl", rng.standard_normal((30, 3)))
        manifest = tmp_path / "m.tsv"
        manifest.write_text(f"important\t0.1\t{f1}\n", encoding="utf-8")
        result = runner.invoke(cli, ["noise-probe", "evaluate", real, str(manifest)])
        assert result.exit_code == 0
        assert result.stdout.splitlines()[0] == "region\tsigma\tfid"

    def test_apply_refuses_server_mode(self, runner, tmp_path, rng):
        images, heatmaps = self.make_inputs(tmp_path, rng)
        result = runner.invoke(
            cli,
            ["--server", "http://example.invalid", "noise-probe", "apply",
             str(images), str(heatmaps), "--out", str(tmp_path / "o")],
        )
        assert result.exit_code != 0
        assert isinstance(result.exception, UnsupportedError)


SPEC_TEXT = "dim 3\ncomponent label=x proportion=1 mean=0 var=1\n"


class TestSynthCommand:
    def test_deterministic_bytes(self, runner, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(SPEC_TEXT)
        a, b = tmp_path / "a.fidl", tmp_path / "b.fidl"
        for out in (a, b):
            result = runner.invoke(
                cli, ["synth", "--spec", str(spec), "--n", "40", "--seed", "7",
                      "--out", str(out)],
            )
            assert result.exit_code == 0
            assert "n_classes\t1" in result.output
        assert a.read_bytes() == b.read_bytes()


class TestBiasProbeCommand:
    def test_tsv(self, runner, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(SPEC_TEXT)
        result = runner.invoke(
            cli,
            ["bias-probe", "--spec", str(spec), "--sizes", "50,200", "--repeats", "2"],
        )
        assert result.exit_code == 0
        lines = result.stdout.splitlines()
        assert lines[0] == "size\tmean_fid"
        assert lines[1].startswith("50\t")


class TestValidateCommand:
    def test_golden_passes(self, runner):
        result = runner.invoke(cli, ["validate", GOLDEN])
        assert result.exit_code == 0
        assert "consistency_passed\ttrue" in result.output
        assert "blocks\tfeatures,probabilities,activations,image-ids" in result.output

    def test_inconsistent_file_exits_one(self, runner, tmp_path, rng):
        feats = rng.standard_normal((3, 2)).astype(np.float32)
        # generic kind skips the write-time pooling check, so the bad
        # activations land on disk and only validate flags them
        bad = write_features(
            tmp_path / "bad.fidl",
            feats,
            activations=rng.standard_normal((3, 2, 2, 2)).astype(np.float32),
        )
        result = runner.invoke(cli, ["validate", bad])
        assert result.exit_code == 1
        assert "consistency_passed\tfalse" in result.output


class TestVersion:
    def test_version_flag(self, runner):
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert "fidlens" in result.output


class TestServerDispatch:
    """The --server path, with HTTP swapped for an in-process test client."""

    @pytest.fixture
    def served(self, monkeypatch):
        import httpx
        from fastapi.testclient import TestClient

        from fidlens.service import create_app

        client = TestClient(create_app(), raise_server_exceptions=False)

        def fake_post(url, json=None, timeout=None):
            assert url.startswith("http://testserver/")
            return client.post(url[len("http://testserver") :], json=json)

        monkeypatch.setattr(httpx, "post", fake_post)
        return "http://testserver"

    def test_fid_via_server(self, runner, served, pair):
        a, _ = pair
        result = runner.invoke(cli, ["--server", served, "fid", a, a])
        assert result.exit_code == 0
        assert result.output == "0.0000\n"

    def test_server_error_payload_surfaces(self, runner, served, tmp_path):
        result = runner.invoke(
            cli,
            ["--server", served, "fid", str(tmp_path / "no.fidl"), str(tmp_path / "x")],
        )
        assert result.exit_code != 0
        assert isinstance(result.exception, RemoteError)
        assert "FileNotFoundError" in str(result.exception)

    def test_unreachable_server(self, runner, monkeypatch, pair):
        import httpx

        def refuse(url, json=None, timeout=None):
            raise httpx.ConnectError("connection refused")

        monkeypatch.setattr(httpx, "post", refuse)
        a, _ = pair
        result = runner.invoke(cli, ["--server", "http://down.invalid", "fid", a, a])
        assert result.exit_code != 0
        assert isinstance(result.exception, RemoteError)
        assert "cannot reach" in str(result.exception)

    def test_synth_via_server(self, runner, served, tmp_path):
        spec = tmp_path / "spec.txt"
        spec.write_text(SPEC_TEXT)
        out = tmp_path / "s.fidl"
        result = runner.invoke(
            cli,
            ["--server", served, "synth", "--spec", str(spec), "--n", "30",
             "--out", str(out)],
        )
        assert result.exit_code == 0
        assert out.exists()


@pytest.fixture(scope="module")
def binary():
    path = shutil.which("fidlens")
    assert path, "console script not installed"
    return path


class TestInstalledEntryPoint:
    """Exit-code contract of the console script, via real subprocesses."""

    def run(self, binary, *args, env=None):
        import os

        full_env = dict(os.environ)
        if env:
            full_env.update(env)
        return subprocess.run(
            [binary, *args], capture_output=True, text=True, env=full_env, timeout=120
        )

    def test_fid_success_exit_zero(self, binary, pair):
        a, _ = pair
        proc = self.run(binary, "fid", a, a)
        assert proc.returncode == 0
        assert proc.stdout == "0.0000\n"

    def test_missing_file_exit_one(self, binary, tmp_path):
        proc = self.run(binary, "fid", str(tmp_path / "no.fidl"), str(tmp_path / "x"))
        assert proc.returncode == 1
        assert proc.stderr.startswith("error:")

    def test_domain_error_exit_one(self, binary, tmp_path, rng):
        a = write_features(
            tmp_path / "a.fidl", rng.standard_normal((20, 3)), kind=FeatureKind.LOGITS
        )
        b = write_features(tmp_path / "b.fidl", rng.standard_normal((20, 3)))
        proc = self.run(binary, "fid", a, b)
        assert proc.returncode == 1
        assert "refusing" in proc.stderr

    def test_unknown_subcommand_exit_two(self, binary):
        proc = self.run(binary, "frobnicate")
        assert proc.returncode == 2

    def test_usage_error_exit_two(self, binary, pair):
        a, b = pair
        proc = self.run(binary, "kid", a, b, "--gamma", "0.5")
        assert proc.returncode == 2

    def test_threads_env_accepted(self, binary, pair):
        a, _ = pair
        proc = self.run(binary, "fid", a, a, env={"FIDLENS_THREADS": "2"})
        assert proc.returncode == 0
        assert proc.stdout == "0.0000\n"

    def test_threads_env_invalid_warns(self, binary, pair):
        a, _ = pair
        proc = self.run(binary, "fid", a, a, env={"FIDLENS_THREADS": "lots"})
        assert proc.returncode == 0
        assert "ignoring invalid FIDLENS_THREADS" in proc.stderr
