"""Compounded blind degradation operator with seeded, replayable manifests."""

from .jpeg import block_dct, block_idct, dct_matrix, jpeg_proxy, quant_table
from .kernels import build_blur_kernel, generalized_gaussian
from .manifest import (
    ELQ_PRESET,
    IDENTITY_PRESET,
    LQ_PRESET,
    PRESETS,
    DegradationManifest,
    DegradationPreset,
    DegradationStage,
    apply_manifest,
    get_preset,
    identity_manifest,
    noise_stream,
    sample_manifest,
)

__all__ = [
    "ELQ_PRESET", "IDENTITY_PRESET", "LQ_PRESET", "PRESETS", "DegradationManifest",
    "DegradationPreset", "DegradationStage", "apply_manifest", "block_dct", "block_idct",
    "build_blur_kernel", "dct_matrix", "generalized_gaussian", "get_preset", "identity_manifest",
    "jpeg_proxy", "noise_stream", "quant_table", "sample_manifest",
]
