"""Distribution distances over image-feature embeddings.

The package computes Frechet and kernel two-sample distances between sets
of feature vectors, renders per-image sensitivity heatmaps for the Frechet
distance, and quantifies how far the metric can be moved by resampling a
candidate pool without changing the underlying images.

Submodules are imported lazily so that the CLI can configure thread caps
before numpy loads.
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "errors",
    "stats",
    "frechet",
    "kernels",
    "sensitivity",
    "resampling",
    "feature_io",
    "synthetic",
    "workflows",
    "service",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f"{__name__}.{name}")
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
