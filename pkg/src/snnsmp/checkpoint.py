"""Checkpoint files: controls, iteration counter and stream position as JSON.

Training draws for iteration ``k`` are a pure function of ``(seed, k)``
(chunked counter-based streams), so the stream state reduces to the seed,
the chunk size and the next iteration.  The per-iteration log is stored as
base64 float64/int64 columns so a resumed run reports exactly what an
uninterrupted run would.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import ControlPath, NetConfig
from .exceptions import CheckpointError
from .trainer import CHUNK, TrainingLog

__all__ = ["Checkpoint", "save_checkpoint", "load_checkpoint"]

FORMAT = "snnsmp-checkpoint/1"

_LOG_COLUMNS = (("iteration", "<i8"), ("index", "<i8"), ("loss", "<f8"), ("grad_norm", "<f8"), ("lr", "<f8"))


def _pack(values, dtype) -> str:
    return base64.b64encode(np.asarray(values, dtype=dtype).tobytes()).decode("ascii")


def _unpack(text, dtype) -> list:
    return np.frombuffer(base64.b64decode(text.encode("ascii"), validate=True), dtype=dtype).tolist()


@dataclass
class Checkpoint:
    net: NetConfig
    controls: ControlPath
    iteration: int
    rng_state: dict
    config_hash: str
    config: dict = field(default_factory=dict)
    log: TrainingLog = field(default_factory=TrainingLog)

    @classmethod
    def after(cls, k, controls, log, run_config) -> "Checkpoint":
        """Checkpoint taken once iteration ``k`` of ``run_config`` has completed."""
        return cls(
            net=run_config.net,
            controls=controls,
            iteration=int(k),
            rng_state={
                "generator": "philox-chunked",
                "seed": int(run_config.train.seed),
                "chunk": CHUNK,
                "next_iteration": int(k) + 1,
            },
            config_hash=run_config.digest(),
            config=run_config.to_dict(),
            log=log,
        )

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "net": self.net.to_dict(),
            "controls": self.controls.to_dict(),
            "iteration": int(self.iteration),
            "rng_state": dict(self.rng_state),
            "config_hash": self.config_hash,
            "config": self.config,
            "log": {name: _pack(getattr(self.log, name), dt) for name, dt in _LOG_COLUMNS},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        if d.get("format") != FORMAT:
            raise CheckpointError(f"unsupported checkpoint format {d.get('format')!r}")
        try:
            net = NetConfig.from_dict(d["net"])
            controls = ControlPath.from_dict(d["controls"])
            controls.check(net)
            log = TrainingLog(**{name: _unpack(d["log"][name], dt) for name, dt in _LOG_COLUMNS})
            ckpt = cls(net, controls, int(d["iteration"]), dict(d["rng_state"]), str(d["config_hash"]), dict(d["config"]), log)
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"corrupted checkpoint: {type(exc).__name__}: {exc}") from None
        if ckpt.iteration < 0 or ckpt.rng_state.get("next_iteration") != ckpt.iteration + 1:
            raise CheckpointError("iteration counter and stream position disagree")
        if ckpt.rng_state.get("chunk") != CHUNK:
            raise CheckpointError(f"checkpoint uses stream chunk {ckpt.rng_state.get('chunk')}, this build uses {CHUNK}")
        if len(log) != ckpt.iteration:
            raise CheckpointError(f"log holds {len(log)} iterations, checkpoint is at {ckpt.iteration}")
        return ckpt

    def __eq__(self, other) -> bool:
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(ckpt.to_dict(), sort_keys=True) + "\n")
    tmp.replace(path)
    return path


def load_checkpoint(path) -> Checkpoint:
    """Read a checkpoint; any I/O or format problem becomes :class:`CheckpointError`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupted checkpoint {path}: {exc.msg} at line {exc.lineno}") from None
    if not isinstance(doc, dict):
        raise CheckpointError(f"corrupted checkpoint {path}: top level is not an object")
    return Checkpoint.from_dict(doc)
