"""Flat evolvable parameter vectors and their segment layout.

A genome is a flat float64 vector plus an ordered layout mapping named
segments to matrix shapes. Segment kinds drive how raw evolved values decode
into network parameters:

    weight  -> clipped to [w_min, w_max] (initial weight matrices)
    rate    -> min(raw^2, 1): nonnegative learning-rate-like coefficients
    coeff   -> used as-is (signed rule coefficients)

Genome files are JSON with a base64 payload, a layout descriptor, the creating
config's hash, and a sha256 checksum, so reruns are byte-comparable and
corruption is detectable.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .config import TOOL_VERSION
from .errors import GenomeFormatError

SEGMENT_KINDS = ("weight", "rate", "coeff")


@dataclass(frozen=True)
class Segment:
    name: str
    shape: tuple
    kind: str

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


class GenomeLayout:
    """Ordered segment descriptors with flatten/unflatten views."""

    def __init__(self, segments):
        self.segments = tuple(segments)
        names = [s.name for s in self.segments]
        if len(set(names)) != len(names):
            raise ValueError("duplicate segment names in layout")
        for s in self.segments:
            if s.kind not in SEGMENT_KINDS:
                raise ValueError(f"segment {s.name}: unknown kind {s.kind!r}")
        self._slices = {}
        offset = 0
        for s in self.segments:
            self._slices[s.name] = slice(offset, offset + s.size)
            offset += s.size
        self.size = offset

    def unflatten(self, theta: np.ndarray) -> dict:
        """Views (no copies) of theta, one reshaped array per segment."""
        theta = np.asarray(theta)
        if theta.shape != (self.size,):
            raise ValueError(f"theta has size {theta.shape}, layout expects ({self.size},)")
        return {s.name: theta[self._slices[s.name]].reshape(s.shape)
                for s in self.segments}

    def flatten(self, parts: dict) -> np.ndarray:
        theta = np.empty(self.size)
        seen = set(parts)
        for s in self.segments:
            if s.name not in parts:
                raise ValueError(f"missing segment {s.name!r}")
            part = np.asarray(parts[s.name], dtype=float)
            if part.shape != s.shape:
                raise ValueError(f"segment {s.name!r}: shape {part.shape} != {s.shape}")
            theta[self._slices[s.name]] = part.ravel()
            seen.discard(s.name)
        if seen:
            raise ValueError(f"unexpected segments: {sorted(seen)}")
        return theta

    def describe(self) -> list:
        return [{"name": s.name, "shape": list(s.shape), "kind": s.kind}
                for s in self.segments]

    @classmethod
    def from_description(cls, desc) -> "GenomeLayout":
        return cls([Segment(d["name"], tuple(d["shape"]), d["kind"]) for d in desc])

    def __eq__(self, other):
        return isinstance(other, GenomeLayout) and self.segments == other.segments

    def __repr__(self):
        return f"GenomeLayout({len(self.segments)} segments, size={self.size})"


@dataclass
class Genome:
    theta: np.ndarray
    layout: GenomeLayout

    def __post_init__(self):
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.layout.size,):
            raise ValueError(
                f"theta size {self.theta.size} does not match layout size {self.layout.size}")

    @classmethod
    def zeros(cls, layout: GenomeLayout) -> "Genome":
        return cls(np.zeros(layout.size), layout)

    def copy(self) -> "Genome":
        return Genome(self.theta.copy(), self.layout)


def decode_segment(values: np.ndarray, kind: str, w_min: float, w_max: float) -> np.ndarray:
    """Raw evolved values -> usable parameter matrix (always a new array)."""
    if kind == "weight":
        return np.clip(values, w_min, w_max)
    if kind == "rate":
        return np.minimum(values ** 2, 1.0)
    if kind == "coeff":
        return np.array(values, dtype=float)
    raise ValueError(f"unknown segment kind {kind!r}")


def _payload(genome: Genome, config_hash: str, extra: dict | None) -> dict:
    data = {
        "format": "plasticlab-genome",
        "version": 1,
        "tool_version": TOOL_VERSION,
        "config_hash": config_hash,
        "layout": genome.layout.describe(),
        "theta_b64": base64.b64encode(genome.theta.tobytes()).decode("ascii"),
    }
    if extra:
        data["meta"] = extra
    return data


def _checksum(data: dict) -> str:
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def save_genome(path, genome: Genome, config_hash: str = "",
                extra: dict | None = None) -> None:
    data = _payload(genome, config_hash, extra)
    data["checksum"] = _checksum({k: v for k, v in data.items() if k != "checksum"})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_genome(path) -> tuple:
    """Load a genome file; returns (genome, metadata dict). Verifies the checksum."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise GenomeFormatError(f"cannot read genome file {path}: {exc}") from None
    if not isinstance(data, dict) or data.get("format") != "plasticlab-genome":
        raise GenomeFormatError(f"{path} is not a genome file")
    stored = data.get("checksum")
    actual = _checksum({k: v for k, v in data.items() if k != "checksum"})
    if stored != actual:
        raise GenomeFormatError(f"{path}: checksum mismatch (file corrupted?)")
    layout = GenomeLayout.from_description(data["layout"])
    raw = base64.b64decode(data["theta_b64"])
    theta = np.frombuffer(raw, dtype=np.float64).copy()
    if theta.size != layout.size:
        raise GenomeFormatError(
            f"{path}: payload has {theta.size} values, layout expects {layout.size}")
    meta = {"config_hash": data.get("config_hash", ""),
            "tool_version": data.get("tool_version", ""),
            **data.get("meta", {})}
    return Genome(theta, layout), meta
