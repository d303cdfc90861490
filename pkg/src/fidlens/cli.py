"""Command-line frontend for the distance / sensitivity / resampling pipelines.

Every subcommand runs in-process by default.  With ``--server URL`` the
same request is sent to a running service instead and the response is
rendered identically, so scripts do not care where the work happens; paths
are then resolved on the server's filesystem.

Exit codes: 0 success, 1 domain or I/O error, 2 usage error.
"""

import os
import sys

# BLAS pools must be capped before numpy loads, hence this block sits
# above every numpy-importing module.
_threads = os.environ.get("FIDLENS_THREADS", "").strip()
if _threads:
    if _threads.isdigit() and int(_threads) > 0:
        for _var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
            "VECLIB_MAXIMUM_THREADS",
        ):
            os.environ.setdefault(_var, _threads)
    else:
        print(
            f"warning: ignoring invalid FIDLENS_THREADS={_threads!r}",
            file=sys.stderr,
        )

import dataclasses  # noqa: E402

import click  # noqa: E402

from . import __version__, workflows  # noqa: E402
from .errors import FidlensError, UnsupportedError  # noqa: E402


class RemoteError(FidlensError):
    """The service answered with an error payload."""


def _progress(message: str) -> None:
    print(message, file=sys.stderr, flush=True)


def _dispatch(ctx, endpoint: str, body: dict, local):
    """Run ``local()`` in-process, or POST ``body`` to the server."""
    server = ctx.obj.get("server")
    if server is None:
        result = local()
        if dataclasses.is_dataclass(result):
            return dataclasses.asdict(result)
        return result
    import httpx

    url = server.rstrip("/") + "/v1/" + endpoint
    try:
        response = httpx.post(url, json=body, timeout=None)
    except httpx.HTTPError as exc:
        raise RemoteError(f"cannot reach {url}: {exc}") from exc
    if response.status_code >= 400:
        try:
            payload = response.json()
            message = payload.get("message", response.text)
            error = payload.get("error", "error")
        except ValueError:
            message, error = response.text, "error"
        raise RemoteError(f"{error}: {message}")
    return response.json()


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _print_kv(data: dict, keys) -> None:
    for key in keys:
        value = data.get(key)
        if value is None:
            continue
        if isinstance(value, list):
            value = ",".join(_fmt(v) for v in value)
        elif isinstance(value, dict):
            value = (
                ",".join(f"{k}:{_fmt(v)}" for k, v in sorted(value.items()))
                or "none"
            )
        click.echo(f"{key}\t{_fmt(value)}")


def _int_list(text: str, what: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise click.UsageError(f"bad {what} list {text!r}") from None


def _float_list(text: str, what: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise click.UsageError(f"bad {what} list {text!r}") from None


@click.group()
@click.option(
    "--server",
    metavar="URL",
    default=None,
    envvar="FIDLENS_SERVER",
    help="Send the request to a running service instead of computing locally.",
)
@click.version_option(__version__, prog_name="fidlens")
@click.pass_context
def cli(ctx, server):
    """Distribution distances, sensitivity heatmaps and resampling attacks."""
    ctx.obj = {"server": server}


@cli.command("stats")
@click.argument("features")
@click.argument("out")
@click.pass_context
def stats_cmd(ctx, features, out):
    """Reduce a feature file to a Gaussian statistics file."""
    data = _dispatch(
        ctx,
        "stats",
        {"features_path": features, "out_path": out},
        lambda: workflows.compute_stats_file(features, out),
    )
    _print_kv(data, ("out_path", "kind", "count", "dim"))


@cli.command("fid")
@click.argument("path_a")
@click.argument("path_b")
@click.option("--force", is_flag=True, help="Compare across different feature kinds.")
@click.pass_context
def fid_cmd(ctx, path_a, path_b, force):
    """Frechet distance between two feature or statistics files."""
    data = _dispatch(
        ctx,
        "fid",
        {"path_a": path_a, "path_b": path_b, "force": force},
        lambda: workflows.fid_between(path_a, path_b, force=force),
    )
    click.echo(f"{data['value']:.4f}")


@cli.command("kid")
@click.argument("path_a")
@click.argument("path_b")
@click.option("--rbf", is_flag=True, help="Gaussian kernel instead of polynomial.")
@click.option("--gamma", type=float, default=None, help="RBF scale (default 1/d).")
@click.option("--subset-size", type=int, default=1000, show_default=True)
@click.option("--subsets", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def kid_cmd(ctx, path_a, path_b, rbf, gamma, subset_size, subsets, seed):
    """Kernel distance (unbiased squared MMD, subset-averaged)."""
    kernel = "rbf" if rbf else "polynomial"
    if gamma is not None and not rbf:
        raise click.UsageError("--gamma only applies with --rbf")
    data = _dispatch(
        ctx,
        "kid",
        {
            "path_a": path_a,
            "path_b": path_b,
            "kernel": kernel,
            "gamma": gamma,
            "subset_size": subset_size,
            "subsets": subsets,
            "seed": seed,
        },
        lambda: workflows.kid_between(
            path_a,
            path_b,
            kernel=kernel,
            gamma=gamma,
            subset_size=subset_size,
            subsets=subsets,
            seed=seed,
        ),
    )
    click.echo(f"{data['value']:.10g}")


@cli.command("resample")
@click.argument("real")
@click.argument("gen")
@click.option(
    "--space",
    type=click.Choice(workflows.RESAMPLE_SPACES),
    default="pre-logits",
    show_default=True,
)
@click.option("--top-n", type=int, default=None, help="Binarize to the top-N classes.")
@click.option("--middle-n", type=int, default=None, help="Binarize to N mid-ranked classes.")
@click.option("--lr", type=float, default=None, help="Step size (default per space).")
@click.option("--iters", type=int, default=100000, show_default=True)
@click.option("--eval-every", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--sample-count", type=int, default=None, help="Rows per drawn sample.")
@click.option(
    "--oversample",
    type=float,
    default=1.0,
    show_default=True,
    help="Fail unless candidates >= RATIO x real samples.",
)
@click.option("--out", "out_dir", default=None, help="Directory for weights/trace/indices.")
@click.pass_context
def resample_cmd(
    ctx, real, gen, space, top_n, middle_n, lr, iters, eval_every, seed,
    sample_count, oversample, out_dir,
):
    """Optimize resampling weights to shrink the distance to the real set."""
    _progress(f"optimizing weights in {space} space ({iters} iterations)")
    data = _dispatch(
        ctx,
        "resample",
        {
            "real_path": real,
            "gen_path": gen,
            "space": space,
            "top_n": top_n,
            "middle_n": middle_n,
            "learning_rate": lr,
            "max_iters": iters,
            "eval_every": eval_every,
            "seed": seed,
            "sample_count": sample_count,
            "min_oversample": oversample,
            "out_dir": out_dir,
        },
        lambda: workflows.resample_attack(
            real,
            gen,
            space=space,
            top_n=top_n,
            middle_n=middle_n,
            learning_rate=lr,
            max_iters=iters,
            eval_every=eval_every,
            seed=seed,
            sample_count=sample_count,
            min_oversample=oversample,
            out_dir=out_dir,
        ),
    )
    _print_kv(
        data,
        (
            "space",
            "n_real",
            "n_candidates",
            "sample_count",
            "learning_rate",
            "iterations",
            "best_iteration",
            "initial_objective",
            "final_objective",
            "uniform_fid",
            "resampled_fid",
            "reduction",
            "weights_path",
            "trace_path",
            "indices_path",
        ),
    )


@cli.command("top1-match")
@click.argument("real")
@click.argument("gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--allow-shortfall",
    is_flag=True,
    help="Fill missing classes from the best-supplied ones instead of failing.",
)
@click.option("--out", "out_dir", default=None, help="Directory for indices.txt.")
@click.pass_context
def top1_match_cmd(ctx, real, gen, seed, allow_shortfall, out_dir):
    """Match the real argmax-class histogram by selecting candidates."""
    data = _dispatch(
        ctx,
        "top1-match",
        {
            "real_path": real,
            "gen_path": gen,
            "seed": seed,
            "allow_shortfall": allow_shortfall,
            "out_dir": out_dir,
        },
        lambda: workflows.top1_match_files(
            real, gen, seed=seed, allow_shortfall=allow_shortfall, out_dir=out_dir
        ),
    )
    _print_kv(
        data,
        (
            "n_selected",
            "matched",
            "deficits",
            "pre_fid",
            "post_fid",
            "real_histogram",
            "selected_histogram",
            "indices_path",
        ),
    )


@cli.command("topn-sweep")
@click.argument("real")
@click.argument("gen")
@click.option("--ns", default="1,2,4,8", show_default=True, help="Comma-separated N values.")
@click.option(
    "--mode",
    type=click.Choice(["top", "middle", "both"]),
    default="both",
    show_default=True,
)
@click.option("--lr", type=float, default=5.0, show_default=True)
@click.option("--iters", type=int, default=100000, show_default=True)
@click.option("--eval-every", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", default=None, help="Also write the TSV here.")
@click.pass_context
def topn_sweep_cmd(ctx, real, gen, ns, mode, lr, iters, eval_every, seed, out_path):
    """Post-resampling distance versus the number of binarized classes."""
    ns_list = _int_list(ns, "N")
    modes = ["top", "middle"] if mode == "both" else [mode]
    _progress(f"sweeping N in {ns_list} for modes {modes}")
    data = _dispatch(
        ctx,
        "topn-sweep",
        {
            "real_path": real,
            "gen_path": gen,
            "ns": ns_list,
            "modes": modes,
            "learning_rate": lr,
            "max_iters": iters,
            "eval_every": eval_every,
            "seed": seed,
            "out_path": out_path,
        },
        lambda: workflows.topn_sweep_files(
            real,
            gen,
            ns_list,
            modes=tuple(modes),
            learning_rate=lr,
            max_iters=iters,
            eval_every=eval_every,
            seed=seed,
            out_path=out_path,
        ),
    )
    click.echo(data["tsv"], nl=False)


@cli.command("heatmap")
@click.argument("real")
@click.argument("gen")
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--index", "indices", type=int, multiple=True, help="Image row index.")
@click.option("--id", "image_ids", multiple=True, help="Image id (repeatable).")
@click.option(
    "--base-stats",
    default=None,
    help="Fixed generated-side statistics file instead of leave-one-out.",
)
@click.option(
    "--no-leave-out",
    is_flag=True,
    help="Take the gradient at the full generated statistics.",
)
@click.option("--target", type=int, default=299, show_default=True, help="Output side length.")
@click.pass_context
def heatmap_cmd(ctx, real, gen, out_dir, indices, image_ids, base_stats, no_leave_out, target):
    """Per-image distance-sensitivity heatmaps (PNG plus raw grid)."""
    leave_out = not no_leave_out and base_stats is None
    data = _dispatch(
        ctx,
        "heatmap",
        {
            "real_path": real,
            "gen_path": gen,
            "out_dir": out_dir,
            "indices": list(indices) or None,
            "image_ids": list(image_ids) or None,
            "leave_out": leave_out,
            "base_stats_path": base_stats,
            "target": target,
        },
        lambda: workflows.heatmap_files(
            real,
            gen,
            out_dir,
            indices=list(indices) or None,
            image_ids=list(image_ids) or None,
            leave_out=leave_out,
            base_stats_path=base_stats,
            target=target,
        ),
    )
    click.echo("index\tname\tpng\tgrid")
    for entry in data["entries"]:
        click.echo(
            f"{entry['index']}\t{entry['name']}\t{entry['png_path']}\t{entry['grid_path']}"
        )


@cli.group("noise-probe")
def noise_probe_cmd():
    """Masked-noise harness: apply noise to images, then score feature files."""


@noise_probe_cmd.command("apply")
@click.argument("images_dir")
@click.argument("heatmaps_dir")
@click.option("--out", "out_dir", required=True)
@click.option("--sigmas", default="0.05,0.1,0.2", show_default=True)
@click.option(
    "--regions",
    default="important,unimportant,everywhere",
    show_default=True,
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def noise_apply_cmd(ctx, images_dir, heatmaps_dir, out_dir, sigmas, regions, seed):
    """Write noised image folders, one per (region, sigma)."""
    if ctx.obj.get("server"):
        raise UnsupportedError("noise-probe apply reads image folders and runs locally only")
    report = workflows.noise_probe_apply(
        images_dir,
        heatmaps_dir,
        out_dir,
        sigmas=_float_list(sigmas, "sigma"),
        regions=[r.strip() for r in regions.split(",") if r.strip()],
        seed=seed,
    )
    data = dataclasses.asdict(report)
    _print_kv(data, ("n_images", "regions", "sigmas", "layout_path"))


@noise_probe_cmd.command("evaluate")
@click.argument("real")
@click.argument("manifest")
@click.option("--force", is_flag=True, help="Score across different feature kinds.")
@click.pass_context
def noise_evaluate_cmd(ctx, real, manifest, force):
    """FID versus the real set for every manifest row; prints a TSV."""
    def local():
        rows = workflows.noise_probe_evaluate(real, manifest, force=force)
        return {"tsv": workflows.noise_eval_tsv(rows)}

    data = _dispatch(
        ctx,
        "noise-evaluate",
        {"real_path": real, "manifest_path": manifest, "force": force},
        local,
    )
    click.echo(data["tsv"], nl=False)


@cli.command("synth")
@click.option("--spec", "spec_path", required=True, help="Mixture spec file.")
@click.option("--n", type=int, required=True, help="Rows to draw.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, help="Output feature file.")
@click.option(
    "--activations",
    "activation_grid",
    type=int,
    default=None,
    help="Also write an (n, d, S, S) activation tensor with this grid size.",
)
@click.pass_context
def synth_cmd(ctx, spec_path, n, seed, out_path, activation_grid):
    """Draw a synthetic feature file from a mixture spec."""
    data = _dispatch(
        ctx,
        "synth",
        {
            "spec_path": spec_path,
            "n": n,
            "seed": seed,
            "out_path": out_path,
            "activation_grid": activation_grid,
        },
        lambda: workflows.synth_files(
            spec_path, n, seed, out_path, activation_grid=activation_grid
        ),
    )
    _print_kv(data, ("out_path", "n", "dim", "n_classes", "has_activations"))


@cli.command("bias-probe")
@click.option("--spec", "spec_path", required=True, help="Mixture spec file.")
@click.option("--sizes", default="1000,5000,20000", show_default=True)
@click.option("--repeats", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.pass_context
def bias_probe_cmd(ctx, spec_path, sizes, repeats, seed):
    """Mean same-distribution distance per sample size; prints a TSV."""
    sizes_list = _int_list(sizes, "size")
    _progress(f"probing sizes {sizes_list} with {repeats} repeats")
    data = _dispatch(
        ctx,
        "bias-probe",
        {"spec_path": spec_path, "sizes": sizes_list, "repeats": repeats, "seed": seed},
        lambda: workflows.bias_probe_files(spec_path, sizes_list, repeats, seed),
    )
    click.echo(data["tsv"], nl=False)


@cli.command("validate")
@click.argument("path")
@click.pass_context
def validate_cmd(ctx, path):
    """Structural and consistency checks for a feature or statistics file."""
    data = _dispatch(
        ctx,
        "validate",
        {"path": path},
        lambda: workflows.validate_file(path),
    )
    _print_kv(
        data,
        (
            "path",
            "file_type",
            "kind",
            "count",
            "dim",
            "blocks",
            "consistency_passed",
            "worst_deviation",
        ),
    )
    if data.get("consistency_passed") is False:
        sys.exit(1)


@cli.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve_cmd(host, port):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.UsageError as exc:
        exc.show()
        sys.exit(2)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)
    except FidlensError as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
