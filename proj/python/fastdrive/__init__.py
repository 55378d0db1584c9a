# SPDX-License-Identifier: Apache-2.0
"""Reconstruction-based visual token pruning."""

from ._fastdrive import (  # noqa: F401
    FastDriveError,
    Model,
    __version__,
    prefill_flops,
    retained_count,
    saliency_auroc,
    scene,
    ssim,
    top_k_indices,
)
