"""Scene/obstacle parsing, structure extraction and the crowd database file.

Database file layout (all integers little-endian)::

    b"CROWDDB v1\\n"
    section*            tag: 4 ASCII bytes, length: uint64, payload: length bytes

    PARM  UTF-8 ``key=value`` config text (same syntax as config files)
    STRC  uint64 count, then ``count`` structure records
    INDX  optional, written by ``MatchIndex.to_bytes``

    structure record:
        uint32 len + UTF-8 scene name, int64 pedestrian id, int64 end frame
        float64 x3   transform (tx, ty, rotation)
        traj         central history
        traj         future
        uint32 n + n * traj        neighbor fragments
        uint32 n + n * polygon     obstacles

    traj:    float64 dt, int64 first step, uint32 n, n * (float64 x, float64 y)
    polygon: uint32 n, n * (float64 x, float64 y)

Unknown section tags are skipped so later versions can add sections.
"""

from __future__ import annotations

import io
import logging
import os
import struct
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .config import Config
from .core import (DatabaseStructure, FrameTransform, ObstaclePolygon, Trajectory,
                   make_structure)
from .errors import DataError, FormatError, InvalidGeometryError, ParseError

log = logging.getLogger(__name__)

MAGIC = b"CROWDDB v1\n"

# parameters that must agree between a database and the config used to query it
GEOMETRY_KEYS = ("f_obs", "p_pred", "dt", "window_length", "window_width",
                 "anchor_fraction", "cell_size")


@dataclass(frozen=True)
class Scene:
    name: str
    trajectories: Dict[int, Trajectory]
    obstacles: Tuple[ObstaclePolygon, ...] = ()
    dt: float = 0.4
    frame_origin: int = 0
    frame_stride: int = 1

    def frame_of(self, step):
        return self.frame_origin + step * self.frame_stride

    def step_of(self, frame):
        step, rem = divmod(frame - self.frame_origin, self.frame_stride)
        if rem:
            raise DataError(f"frame {frame} is not on the scene's {self.frame_stride}-frame grid")
        return step

    def positions_at(self, step, exclude=None):
        """Positions of every pedestrian present at ``step`` (optionally minus one id)."""
        table = self.__dict__.get("_by_step")
        if table is None:
            rows = defaultdict(list)
            for pid, traj in self.trajectories.items():
                for s, p in zip(traj.steps, traj.xy):
                    rows[int(s)].append((pid, p))
            table = {s: (np.array([pid for pid, _ in r]), np.array([p for _, p in r]))
                     for s, r in rows.items()}
            object.__setattr__(self, "_by_step", table)
        if step not in table:
            return np.zeros((0, 2))
        ids, xy = table[step]
        return xy[ids != exclude] if exclude is not None else xy


@dataclass(frozen=True)
class CrowdDatabase:
    structures: Tuple[DatabaseStructure, ...]
    params: Config = field(default_factory=Config)

    def __len__(self):
        return len(self.structures)

    def __eq__(self, other):
        if not isinstance(other, CrowdDatabase):
            return NotImplemented
        return (self.params == other.params and len(self) == len(other)
                and all(a == b for a, b in zip(self.structures, other.structures)))

    def without_scene(self, name):
        return CrowdDatabase(tuple(s for s in self.structures if s.source_id[0] != name),
                             self.params)

    def scenes(self):
        return sorted({s.source_id[0] for s in self.structures})


# --------------------------------------------------------------------------
# text formats

def _lines(stream):
    if isinstance(stream, str):
        return io.StringIO(stream)
    return stream


def _as_int(token, what, lineno):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"{what} {token!r} is not a number", lineno) from None
    if not value.is_integer():
        raise ParseError(f"{what} {token!r} is not an integer", lineno)
    return int(value)


def parse_scene(stream, dt=0.4, name="scene"):
    """Read ``frame ped x y`` annotation lines into a Scene.

    Frames are mapped to scene-wide step indices using the dataset's native
    frame stride (the most common frame gap within a track). A track with a
    missing annotation is cut to its longest gap-free run.
    """
    records = defaultdict(list)
    seen = set()
    for lineno, raw in enumerate(_lines(stream), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields (frame ped x y), got {len(parts)}", lineno)
        frame = _as_int(parts[0], "frame", lineno)
        ped = _as_int(parts[1], "pedestrian id", lineno)
        try:
            x, y = float(parts[2]), float(parts[3])
        except ValueError:
            raise ParseError(f"bad coordinate in {line!r}", lineno) from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise ParseError("coordinates must be finite", lineno)
        if (frame, ped) in seen:
            raise DataError(f"line {lineno}: duplicate annotation for pedestrian {ped} at frame {frame}")
        seen.add((frame, ped))
        track = records[ped]
        if track and frame < track[-1][0]:
            raise DataError(f"line {lineno}: frames for pedestrian {ped} go backwards "
                            f"({track[-1][0]} then {frame})")
        track.append((frame, x, y))

    if not records:
        return Scene(name, {}, (), dt)

    gaps = Counter()
    for track in records.values():
        frames = [f for f, _, _ in track]
        gaps.update(b - a for a, b in zip(frames, frames[1:]))
    stride = min(gaps, key=lambda g: (-gaps[g], g)) if gaps else 1
    origin = min(track[0][0] for track in records.values())

    trajectories = {}
    for ped in sorted(records):
        track = records[ped]
        steps = []
        for frame, _, _ in track:
            step, rem = divmod(frame - origin, stride)
            if rem:
                raise DataError(f"pedestrian {ped}: frame {frame} is off the {stride}-frame grid")
            steps.append(step)
        steps = np.array(steps)
        xy = np.array([(x, y) for _, x, y in track])
        breaks = np.flatnonzero(np.diff(steps) != 1) + 1
        if len(breaks):
            runs = np.split(np.arange(len(steps)), breaks)
            best = max(runs, key=len)
            log.warning("pedestrian %s in %s has annotation gaps; keeping %d of %d points",
                        ped, name, len(best), len(steps))
            steps, xy = steps[best], xy[best]
        trajectories[ped] = Trajectory(steps, xy, dt)
    return Scene(name, trajectories, (), dt, origin, stride)


def parse_obstacles(stream):
    """One polygon per line: ``x1 y1 x2 y2 ...`` with at least three vertices."""
    polygons = []
    for lineno, raw in enumerate(_lines(stream), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            values = [float(tok) for tok in line.replace(",", " ").split()]
        except ValueError:
            raise ParseError(f"non-numeric coordinate in {line!r}", lineno) from None
        if len(values) % 2:
            raise ParseError(f"odd number of coordinates ({len(values)})", lineno)
        if len(values) < 6:
            raise ParseError(f"a polygon needs at least 3 vertices, got {len(values) // 2}", lineno)
        try:
            polygons.append(ObstaclePolygon(np.reshape(values, (-1, 2))))
        except InvalidGeometryError as exc:
            raise ParseError(str(exc), lineno) from None
    return polygons


def read_scene(path, dt=0.4, name=None, obstacles_path=None):
    if name is None:
        name = os.path.splitext(os.path.basename(path))[0]
    with open(path, encoding="utf-8") as fh:
        scene = parse_scene(fh, dt, name)
    if obstacles_path:
        with open(obstacles_path, encoding="utf-8") as fh:
            scene = Scene(scene.name, scene.trajectories, tuple(parse_obstacles(fh)),
                          scene.dt, scene.frame_origin, scene.frame_stride)
    return scene


# --------------------------------------------------------------------------
# extraction

def extract_structures(scene, config, stride=None):
    """Slide the observation/prediction window over every track of ``scene``."""
    stride = config.stride if stride is None else stride
    f, p = config.f_obs, config.p_pred
    ids = list(scene.trajectories)
    starts = np.array([scene.trajectories[i].start for i in ids])
    ends = np.array([scene.trajectories[i].end for i in ids])
    out = []
    for k, pid in enumerate(ids):
        traj = scene.trajectories[pid]
        for e in range(traj.start + f - 1, traj.end - p + 1, stride):
            lo = e - f + 1
            mask = (starts <= e) & (ends >= lo)
            mask[k] = False
            neighbors = [scene.trajectories[ids[j]] for j in np.flatnonzero(mask)]
            out.append(make_structure(traj.between(lo, e), traj.between(e + 1, e + p),
                                      neighbors, scene.obstacles, config,
                                      (scene.name, int(pid), scene.frame_of(e))))
    return out


def build_database(scenes, config, stride=None):
    structures = []
    for scene in scenes:
        structures.extend(extract_structures(scene, config, stride))
    return CrowdDatabase(tuple(structures), config)


# --------------------------------------------------------------------------
# binary container

def _pack_traj(buf, t):
    buf += struct.pack("<dqI", t.dt, t.start, len(t))
    buf += np.ascontiguousarray(t.xy, dtype="<f8").tobytes()


def _pack_structure(buf, s):
    name = s.source_id[0].encode("utf-8")
    buf += struct.pack("<I", len(name)) + name
    buf += struct.pack("<qq", s.source_id[1], s.source_id[2])
    buf += struct.pack("<ddd", s.transform.translation[0], s.transform.translation[1],
                       s.transform.rotation)
    _pack_traj(buf, s.central_history)
    _pack_traj(buf, s.future)
    buf += struct.pack("<I", len(s.neighbors))
    for nb in s.neighbors:
        _pack_traj(buf, nb)
    buf += struct.pack("<I", len(s.obstacles))
    for poly in s.obstacles:
        buf += struct.pack("<I", len(poly.vertices))
        buf += np.ascontiguousarray(poly.vertices, dtype="<f8").tobytes()


class _Reader:
    def __init__(self, data):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError("truncated database stream")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def points(self, n):
        return np.frombuffer(self.take(16 * n), dtype="<f8").astype(np.float64).reshape(n, 2)

    def traj(self):
        dt, start, n = self.unpack("<dqI")
        xy = self.points(n)
        return Trajectory(np.arange(start, start + n), xy, dt)

    def structure(self):
        (name_len,) = self.unpack("<I")
        name = bytes(self.take(name_len)).decode("utf-8")
        ped, frame = self.unpack("<qq")
        tx, ty, rot = self.unpack("<ddd")
        central = self.traj()
        future = self.traj()
        (n_nb,) = self.unpack("<I")
        neighbors = tuple(self.traj() for _ in range(n_nb))
        (n_obs,) = self.unpack("<I")
        obstacles = []
        for _ in range(n_obs):
            (nv,) = self.unpack("<I")
            obstacles.append(ObstaclePolygon(self.points(nv)))
        return DatabaseStructure(central, neighbors, tuple(obstacles),
                                 FrameTransform((tx, ty), rot), (name, ped, frame), future)


def _section(tag, payload):
    return tag + struct.pack("<Q", len(payload)) + bytes(payload)


def save_db(db, sink, index=None):
    """Write ``db`` (and optionally a MatchIndex) to a binary stream or path."""
    if isinstance(sink, (str, bytes)) or hasattr(sink, "__fspath__"):
        with open(sink, "wb") as fh:
            return save_db(db, fh, index)
    body = bytearray(struct.pack("<Q", len(db.structures)))
    for s in db.structures:
        _pack_structure(body, s)
    sink.write(MAGIC)
    sink.write(_section(b"PARM", db.params.to_text().encode("utf-8")))
    sink.write(_section(b"STRC", body))
    if index is not None:
        sink.write(_section(b"INDX", index.to_bytes()))


def read_container(source):
    """Return ``(params, structures, index_payload_or_None)`` from a database stream."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "rb") as fh:
            return read_container(fh)
    data = source.read()
    if not data.startswith(MAGIC):
        if data.startswith(b"CROWDDB"):
            raise FormatError(f"unsupported database version {data[:16]!r}")
        raise FormatError("not a crowd database (missing 'CROWDDB v1' header)")
    reader = _Reader(data)
    reader.take(len(MAGIC))
    sections = {}
    while reader.pos < len(data):
        tag = bytes(reader.take(4))
        (length,) = reader.unpack("<Q")
        sections[tag] = reader.take(length)
    if b"PARM" not in sections or b"STRC" not in sections:
        raise FormatError("database is missing its PARM or STRC section")
    params = Config.from_text(bytes(sections[b"PARM"]).decode("utf-8"))
    body = _Reader(sections[b"STRC"])
    (count,) = body.unpack("<Q")
    structures = tuple(body.structure() for _ in range(count))
    if body.pos != len(body.data):
        raise FormatError("trailing bytes in STRC section")
    index = sections.get(b"INDX")
    return params, structures, (bytes(index) if index is not None else None)


def load_db(source, config=None):
    """Read a database. Its stored parameters win over ``config`` (with a warning)."""
    params, structures, _ = read_container(source)
    if config is not None:
        differing = [k for k in GEOMETRY_KEYS if getattr(config, k) != getattr(params, k)]
        if differing:
            warnings.warn("database parameters override the config for: " + ", ".join(differing),
                          stacklevel=2)
    return CrowdDatabase(structures, params)
