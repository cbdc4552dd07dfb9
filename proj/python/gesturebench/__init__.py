"""Python access to the gesture benchmark core (models, data, streaming, CLI)."""

import json

from . import _core
from ._core import (
    Model,
    DimensionError,
    ParseError,
    decode_checkpoint,
    encode_checkpoint,
    generate_dataset,
    generate_stream,
    load_checkpoint,
    normalize_landmarks,
    save_checkpoint,
)

__all__ = [
    "Model",
    "DimensionError",
    "ParseError",
    "StreamPipeline",
    "decode_checkpoint",
    "descriptor",
    "encode_checkpoint",
    "generate_dataset",
    "generate_stream",
    "load_checkpoint",
    "make_model",
    "normalize_landmarks",
    "run_cli",
    "save_checkpoint",
]


def make_model(family, config=None, seed=0):
    """Fresh model of `family` ("lstm" or "cnn3d"); `config` overrides defaults."""
    return _core.make_model(json.dumps({"family": family, "config": config or {}}), seed)


def descriptor(model):
    return json.loads(model.descriptor_json())


class StreamPipeline:
    """Frame-by-frame stream inference; events come back as dicts."""

    def __init__(self, model, config=None):
        self._p = _core.StreamPipeline(model, json.dumps(config or {}))

    def push_frame(self, frame):
        return [json.loads(e) for e in self._p.push_frame(frame)]

    def run(self, frames):
        events = []
        for f in frames:
            events.extend(self.push_frame(f))
        return events

    @property
    def frames_accepted(self):
        return self._p.frames_accepted


def run_cli(args, stdin=""):
    """Runs one CLI command in-process. Returns (exit_code, stdout, stderr)."""
    return _core.run_cli([str(a) for a in args], stdin)
