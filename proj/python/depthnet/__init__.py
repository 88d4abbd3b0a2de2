"""Monocular depth estimation with gated large-kernel attention and global depth bins.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports its public surface.
"""

from ._core import (
    Model,
    bin_centers,
    build_validity_mask,
    compute_metrics,
    generate_scene,
    gradcheck_worst_error,
    lka_receptive_extents,
    read_container,
    silog_loss,
    write_container,
)

__version__ = "0.1.0"

__all__ = [
    "Model",
    "bin_centers",
    "build_validity_mask",
    "compute_metrics",
    "generate_scene",
    "gradcheck_worst_error",
    "lka_receptive_extents",
    "read_container",
    "silog_loss",
    "write_container",
    "__version__",
]
