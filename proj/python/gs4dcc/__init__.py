"""4DGS scene codec: synthetic scenes, encode/decode, entropy-coding primitives."""

from ._core import (
    Error,
    SynthSpec,
    TrainConfig,
    decode,
    dg_pmf,
    encode,
    inspect,
    range_decode,
    range_encode,
    rate_preset,
    read_scene,
    route_context,
    synth,
    voxel_gain,
)

__all__ = [
    "Error",
    "SynthSpec",
    "TrainConfig",
    "decode",
    "dg_pmf",
    "encode",
    "inspect",
    "range_decode",
    "range_encode",
    "rate_preset",
    "read_scene",
    "route_context",
    "synth",
    "voxel_gain",
]
