"""Python bindings for the nam domain-mapping library."""

from ._core import (
    BlobGenerator,
    ConvGenerator,
    Error,
    FormatError,
    Generator,
    Mapper,
    NumericError,
    OrientedBarGenerator,
    ShapeError,
    bench_tasks,
    infer,
    make_domain_pair,
    pixel_l1,
    project_to_simplex,
    run_bench,
    run_cli,
    train,
    transform,
)

__all__ = [
    "BlobGenerator",
    "ConvGenerator",
    "Error",
    "FormatError",
    "Generator",
    "Mapper",
    "NumericError",
    "OrientedBarGenerator",
    "ShapeError",
    "bench_tasks",
    "infer",
    "make_domain_pair",
    "pixel_l1",
    "project_to_simplex",
    "run_bench",
    "run_cli",
    "train",
    "transform",
]
