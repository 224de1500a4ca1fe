"""Quantitative parameter maps and their export containers.

Maps are stored flat (one value per voxel) together with an optional 2-D
shape for image export. The binary container keeps a u8 engine tag after
the geometry so a round trip preserves which estimator produced the maps.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .formats import PayloadWriter, open_payload

__all__ = ["QMaps", "save_qmaps", "load_qmaps", "write_qmaps_csv"]

MAGIC = b"MRFQ"
VERSION = 1

_ENGINE_CODES = {"DM": 0, "NET": 1}
_ENGINE_NAMES = {v: k for k, v in _ENGINE_CODES.items()}


@dataclass(eq=False)
class QMaps:
    """Per-voxel T1/T2/scale estimates with a degeneracy flag mask."""

    t1_map: np.ndarray
    t2_map: np.ndarray
    scale_map: np.ndarray
    flags: np.ndarray
    engine_tag: str
    height: int
    width: int

    def __post_init__(self):
        n = self.height * self.width
        self.t1_map = np.ascontiguousarray(self.t1_map, dtype=np.float64).reshape(n)
        self.t2_map = np.ascontiguousarray(self.t2_map, dtype=np.float64).reshape(n)
        self.scale_map = np.ascontiguousarray(self.scale_map, dtype=np.float64).reshape(n)
        self.flags = np.ascontiguousarray(self.flags, dtype=np.uint8).reshape(n)
        if self.engine_tag not in _ENGINE_CODES:
            raise ValueError(f"engine_tag must be DM or NET, got {self.engine_tag!r}")

    @property
    def n_voxels(self):
        return self.t1_map.size

    def image(self, name):
        """One map reshaped to (height, width); name in t1/t2/scale/flags."""
        arr = {
            "t1": self.t1_map,
            "t2": self.t2_map,
            "scale": self.scale_map,
            "flags": self.flags,
        }[name]
        return arr.reshape(self.height, self.width)


def save_qmaps(maps, path):
    w = PayloadWriter(MAGIC, VERSION)
    w.u32(maps.height)
    w.u32(maps.width)
    w.u8(_ENGINE_CODES[maps.engine_tag])
    w.f32_array(maps.t1_map)
    w.f32_array(maps.t2_map)
    w.f32_array(maps.scale_map)
    w.raw(maps.flags.tobytes())
    w.save(path)


def load_qmaps(path):
    r = open_payload(path, MAGIC, VERSION)
    height = r.u32()
    width = r.u32()
    code = r.u8()
    if code not in _ENGINE_NAMES:
        raise FormatError(f"{path}: unknown engine code {code}")
    n = height * width
    t1 = r.f32_array(n)
    t2 = r.f32_array(n)
    scale = r.f32_array(n)
    flags = np.frombuffer(r.raw(n), dtype=np.uint8).copy()
    r.expect_end()
    return QMaps(t1, t2, scale, flags, _ENGINE_NAMES[code], height, width)


def write_qmaps_csv(maps, path):
    """Plot-friendly long format: x, y, t1, t2, scale, flag."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "t1", "t2", "scale", "flag"])
        t1 = maps.image("t1")
        t2 = maps.image("t2")
        scale = maps.image("scale")
        flags = maps.image("flags")
        for y in range(maps.height):
            for x in range(maps.width):
                writer.writerow(
                    [x, y, repr(float(t1[y, x])), repr(float(t2[y, x])),
                     repr(float(scale[y, x])), int(flags[y, x])]
                )
