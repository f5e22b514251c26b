"""Model construction from JSON-friendly specs, plus the BSC example scenarios."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np

from .bc_model import SourceBcModel
from .info_core import Channel, ProbVector, binary_erasure, bsc, product_channel

ENCODER_CROSSOVER = 0.05


def channel_from_spec(spec) -> Channel:
    """``{"bsc": p}``, ``{"erasure": e}``, ``{"identity": k}`` or ``{"rows": [[...]]}``.

    Any of these may carry ``"measurements": k`` for k independent uses.
    """
    if not isinstance(spec, dict):
        raise ValueError(f"channel spec must be an object, got {spec!r}")
    if "bsc" in spec:
        ch = bsc(float(spec["bsc"]))
    elif "erasure" in spec:
        ch = binary_erasure(float(spec["erasure"]))
    elif "identity" in spec:
        ch = Channel.identity(int(spec["identity"]))
    elif "rows" in spec:
        ch = Channel(np.asarray(spec["rows"], dtype=np.float64))
    else:
        raise ValueError(f"unrecognised channel spec {spec!r}")
    k = int(spec.get("measurements", 1))
    return product_channel(ch, k) if k > 1 else ch


def model_from_spec(spec: dict, base_dir: Path | None = None) -> SourceBcModel:
    """Build a model from a scenario entry.

    Accepted forms: ``{"model_file": path}``, ``{"model": <model JSON>}``, a
    bare model JSON, or ``{"source": [...], "encoder": <channel>, "decoder":
    <channel>}`` for separate measurements.
    """
    if not isinstance(spec, dict):
        raise ValueError("scenario model must be a JSON object")
    if "model_file" in spec:
        path = Path(spec["model_file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return SourceBcModel.load(path)
    if "model" in spec:
        return SourceBcModel.from_json(spec["model"])
    if "px" in spec:
        return SourceBcModel.from_json(spec)
    if {"source", "encoder", "decoder"} <= spec.keys():
        return SourceBcModel.from_separate_measurements(
            ProbVector(np.asarray(spec["source"], dtype=np.float64)),
            channel_from_spec(spec["encoder"]),
            channel_from_spec(spec["decoder"]),
        )
    raise ValueError(f"cannot build a model from scenario keys {sorted(spec)}")


def bsc_example(decoder_crossover: float, measurements: int = 1) -> SourceBcModel:
    """Uniform binary source, encoder BSC(0.05), ``measurements`` decoder BSCs."""
    return SourceBcModel.from_separate_measurements(
        ProbVector.uniform(2),
        bsc(ENCODER_CROSSOVER),
        product_channel(bsc(decoder_crossover), measurements),
    )


# decoder scenarios of the BSC example, compared against the single measurement
EXAMPLE_SCENARIOS = {
    "dec_1x_bsc0.05": (0.05, 1),
    "dec_2x_bsc0.15": (0.15, 2),
    "dec_3x_bsc0.15": (0.15, 3),
    "dec_4x_bsc0.15": (0.15, 4),
}


def bundled_config(name: str) -> Path:
    """Path of a config file shipped in ``bckey/configs``."""
    path = resources.files("bckey") / "configs" / name
    return Path(str(path))


def load_json(path: str | Path):
    with open(path) as fh:
        return json.load(fh)
