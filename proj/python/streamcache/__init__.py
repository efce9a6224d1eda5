"""Python bindings for the streamcache C++ core."""

from ._core import (
    ParseError,
    PipelineConfig,
    SimResult,
    StreamConfig,
    __version__,
    build_masks,
    calibrate_contention,
    chunk_playback_ms,
    compute_delta,
    derived_metrics,
    format_prompt,
    load_stream_config,
    parse_stream_config,
    rollout_difference,
    rope_rotate,
    run_episode,
    run_rollout,
    simulate,
    sweep_file,
    validate_config,
)

__all__ = [
    "ParseError",
    "PipelineConfig",
    "SimResult",
    "StreamConfig",
    "__version__",
    "build_masks",
    "calibrate_contention",
    "chunk_playback_ms",
    "compute_delta",
    "derived_metrics",
    "format_prompt",
    "load_stream_config",
    "parse_stream_config",
    "rollout_difference",
    "rope_rotate",
    "run_episode",
    "run_rollout",
    "simulate",
    "sweep_file",
    "validate_config",
]
