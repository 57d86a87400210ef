"""
Synthetic surveillance-like scenes with exact ground truth.

Objects are solid high-contrast shapes moving over a static background along
piecewise-linear velocity segments. Every rendered object's tight bounding
box is its Track box for that frame.
"""
import csv
import json
import logging
import os
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple  # noqa

import cv2
import numpy as np
import yaml

from accdecoder.codec import MB, Frame
from accdecoder.exceptions import ConfigError, SpecError
from accdecoder.utils import derive_rng, round_half_up


__all__ = (
    'BBox',
    'ObjectSpec',
    'SceneSpec',
    'Track',
    'generate',
    'downscale',
    'scale_tracks',
    'random_scene',
    'load_scene_spec',
    'export_frames',
    'import_frames',
    'export_tracks',
    'load_tracks',
)

logger = logging.getLogger(__name__)

BACKGROUNDS = ('flat', 'gradient', 'texture')
SHAPES = ('rectangle', 'ellipse')


BBox = NamedTuple('BBox', [('x', float), ('y', float), ('w', float), ('h', float)])


class ObjectSpec(object):
    """
    Kwargs:
        size: (w, h) in HR pixels
        position: (x, y) of the top-left corner at the entry frame
        contrast: signed 8-bit offset of the fill from the scene level
        texture: amplitude of the pattern painted on the object, which
            moves with it (0 = a flat fill)
        segments: [(start_frame, vx, vy), ...] velocities in px/frame, each
            holding until the next segment starts
        entry: first live frame
        exit: first frame the object is gone (None = live to the end)
    """

    def __init__(self, size, position, shape='rectangle', contrast=80, texture=24,
                 segments=((0, 0.0, 0.0),), entry=0, exit=None, class_id=0):
        self.shape = shape
        self.size = (int(size[0]), int(size[1]))
        self.position = (float(position[0]), float(position[1]))
        self.contrast = int(contrast)
        self.texture = int(texture)
        self.segments = sorted((int(s[0]), float(s[1]), float(s[2])) for s in segments)
        self.entry = int(entry)
        self.exit = None if exit is None else int(exit)
        self.class_id = int(class_id)

    def velocity(self, frame):
        # type: (int) -> Tuple[float, float]
        vx = vy = 0.0
        for start, sx, sy in self.segments:
            if start <= frame:
                vx, vy = sx, sy
        return vx, vy

    def live(self, frame):
        # type: (int) -> bool
        return frame >= self.entry and (self.exit is None or frame < self.exit)

    def mask(self):
        # type: () -> np.ndarray
        w, h = self.size
        if self.shape == 'rectangle':
            return np.ones((h, w), dtype=bool)
        ys, xs = np.mgrid[0:h, 0:w]
        return ((xs + 0.5 - w / 2.0) / (w / 2.0)) ** 2 + ((ys + 0.5 - h / 2.0) / (h / 2.0)) ** 2 <= 1.0

    @classmethod
    def from_dict(cls, data):
        # type: (Dict[str, Any]) -> ObjectSpec
        try:
            return cls(
                size=data['size'],
                position=data['position'],
                shape=data.get('shape', 'rectangle'),
                contrast=data.get('contrast', 80),
                texture=data.get('texture', 24),
                segments=[tuple(s) for s in data.get('segments', [(0, 0, 0)])],
                entry=data.get('entry', 0),
                exit=data.get('exit'),
                class_id=data.get('class_id', 0),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError('bad object spec {!r}: {}'.format(data, e))


class SceneSpec(object):

    def __init__(self, width, height, frame_count, seed=0, background='flat', level=100,
                 noise=0.0, objects=(), max_speed=None, texture_cell=4, texture_amplitude=40):
        self.width = int(width)
        self.height = int(height)
        self.frame_count = int(frame_count)
        self.seed = int(seed)
        self.background = background
        self.level = int(level)
        self.noise = float(noise)
        self.objects = list(objects)  # type: List[ObjectSpec]
        self.max_speed = max_speed  # type: Optional[float]
        self.texture_cell = int(texture_cell)
        self.texture_amplitude = int(texture_amplitude)

    def validate(self, scale_factor=1):
        # type: (int) -> None
        if self.frame_count < 1:
            raise SpecError('frame_count must be >= 1')
        unit = MB * scale_factor
        if self.width % unit or self.height % unit:
            raise SpecError('scene size {}x{} is not a multiple of {}'.format(self.width, self.height, unit))
        if self.background not in BACKGROUNDS:
            raise SpecError('unknown background {!r}'.format(self.background))
        for i, obj in enumerate(self.objects):
            if obj.shape not in SHAPES:
                raise SpecError('object {}: unknown shape {!r}'.format(i, obj.shape))
            if min(obj.size) < 1:
                raise SpecError('object {}: empty size'.format(i))
            if self.max_speed is not None:
                for _, vx, vy in obj.segments:
                    if max(abs(vx), abs(vy)) > self.max_speed:
                        raise SpecError('object {}: velocity ({}, {}) exceeds {} px/frame'.format(
                            i, vx, vy, self.max_speed))

    @classmethod
    def from_dict(cls, data):
        # type: (Dict[str, Any]) -> SceneSpec
        data = dict(data)
        objects = [ObjectSpec.from_dict(o) for o in data.pop('objects', [])]
        try:
            return cls(objects=objects, **data)
        except TypeError as e:
            raise ConfigError('bad scene spec: {}'.format(e))


class Track(object):
    """
    Ground truth of one object: a box per frame, None while not visible.
    """

    def __init__(self, object_id, class_id, boxes):
        # type: (int, int, List[Optional[BBox]]) -> None
        self.object_id = object_id
        self.class_id = class_id
        self.boxes = boxes

    def visible(self, frame):
        # type: (int) -> bool
        return self.boxes[frame] is not None

    def __repr__(self):
        return 'Track({}, visible in {} frames)'.format(
            self.object_id, sum(b is not None for b in self.boxes))


def _background(spec):
    # type: (SceneSpec) -> np.ndarray
    h, w = spec.height, spec.width
    if spec.background == 'flat':
        return np.full((h, w), float(spec.level))
    if spec.background == 'gradient':
        ramp = np.linspace(spec.level - 40, spec.level + 40, w)
        return np.tile(ramp, (h, 1))
    return spec.level + spec.texture_amplitude * _pattern(derive_rng(spec.seed, 0xBAC), h, w, spec.texture_cell)


def _pattern(rng, h, w, cell):
    # type: (np.random.Generator, int, int, int) -> np.ndarray
    """
    Smooth noise, roughly in [-1, 1], with features about `cell` pixels across.
    """
    cell = max(1, cell)
    grid = rng.uniform(-1.0, 1.0, size=(h // cell + 2, w // cell + 2)).astype(np.float32)
    smooth = cv2.resize(grid, (w + 2 * cell, h + 2 * cell), interpolation=cv2.INTER_CUBIC)[cell:cell + h, cell:cell + w]
    return smooth.astype(np.float64)


def _appearance(spec, obj, object_id):
    # type: (SceneSpec, ObjectSpec, int) -> np.ndarray
    w, h = obj.size
    fill = np.full((h, w), float(spec.level + obj.contrast))
    if obj.texture:
        fill += obj.texture * _pattern(derive_rng(spec.seed, 0x0B1, object_id), h, w, spec.texture_cell)
    return fill


def _trajectory(obj, frame_count):
    # type: (ObjectSpec, int) -> List[Optional[Tuple[int, int]]]
    positions = []  # type: List[Optional[Tuple[int, int]]]
    x, y = obj.position
    for t in range(frame_count):
        if t < obj.entry:
            positions.append(None)
            continue
        if t > obj.entry:
            vx, vy = obj.velocity(t - 1)
            x, y = x + vx, y + vy
        if obj.live(t):
            px, py = round_half_up([x, y])
            positions.append((int(px), int(py)))
        else:
            positions.append(None)
    return positions


def generate(spec):
    # type: (SceneSpec) -> Tuple[List[Frame], List[Track]]
    """
    Render `spec` deterministically.

    Returns:
        (HR frames in display order, one Track per object)
    """
    spec.validate()
    background = _background(spec)
    masks = [obj.mask() for obj in spec.objects]
    fills = [_appearance(spec, obj, i) for i, obj in enumerate(spec.objects)]
    tight = []
    for m in masks:
        ys, xs = np.nonzero(m)
        tight.append((xs.min(), ys.min(), xs.max() - xs.min() + 1, ys.max() - ys.min() + 1))
    paths = [_trajectory(obj, spec.frame_count) for obj in spec.objects]

    frames = []  # type: List[Frame]
    boxes = [[] for _ in spec.objects]  # type: List[List[Optional[BBox]]]
    for t in range(spec.frame_count):
        canvas = background.copy()
        for i, obj in enumerate(spec.objects):
            pos = paths[i][t]
            if pos is None:
                boxes[i].append(None)
                continue
            x, y = pos
            w, h = obj.size
            if x < 0 or y < 0 or x + w > spec.width or y + h > spec.height:
                raise SpecError('object {} leaves the frame at frame {} without an exit'.format(i, t))
            # opaque, later objects on top
            canvas[y:y + h, x:x + w][masks[i]] = fills[i][masks[i]]
            ox, oy, tw, th = tight[i]
            boxes[i].append(BBox(int(x + ox), int(y + oy), int(tw), int(th)))
        if spec.noise > 0:
            canvas += derive_rng(spec.seed, t, 0x401).normal(0.0, spec.noise, size=canvas.shape)
        frames.append(Frame(np.clip(round_half_up(canvas), 0, 255), t))

    tracks = [Track(i, obj.class_id, boxes[i]) for i, obj in enumerate(spec.objects)]
    return frames, tracks


def downscale(frames, factor):
    # type: (Sequence[Frame], int) -> List[Frame]
    """
    Box-filter average over factor x factor tiles, rounded half up.
    """
    if factor < 1:
        raise ConfigError('downscale factor must be >= 1')
    out = []
    for f in frames:
        h, w = f.pixels.shape
        if h % factor or w % factor:
            raise ConfigError('factor {} does not divide {}x{}'.format(factor, w, h))
        if factor == 1:
            out.append(Frame(f.pixels.copy(), f.display_index))
            continue
        n = factor * factor
        sums = f.pixels.astype(np.int64).reshape(h // factor, factor, w // factor, factor).sum(axis=(1, 3))
        out.append(Frame((2 * sums + n) // (2 * n), f.display_index))
    return out


def scale_tracks(tracks, factor):
    # type: (Sequence[Track], float) -> List[Track]
    """
    Tracks in a space `factor` times smaller (e.g. LR coordinates).
    """
    scaled = []
    for tr in tracks:
        boxes = [None if b is None else BBox(b.x / factor, b.y / factor, b.w / factor, b.h / factor)
                 for b in tr.boxes]
        scaled.append(Track(tr.object_id, tr.class_id, boxes))
    return scaled


def _random_object(rng, spec, frame_count, max_speed, object_id, first_frame=0):
    # type: (np.random.Generator, SceneSpec, int, float, int, int) -> ObjectSpec
    w = int(rng.integers(12, max(13, spec.width // 4)))
    h = int(rng.integers(12, max(13, spec.height // 4)))
    x = float(rng.integers(0, spec.width - w))
    y = float(rng.integers(0, spec.height - h))
    entry = first_frame + int(rng.integers(0, max(1, frame_count // 4)))
    segments = []
    start = entry
    while start < frame_count:
        speed = rng.uniform(0.0, max_speed)
        angle = rng.uniform(0.0, 2 * np.pi)
        segments.append((start, round(speed * np.cos(angle), 2), round(speed * np.sin(angle), 2)))
        start += int(rng.integers(10, 40))
    obj = ObjectSpec(
        size=(w, h), position=(x, y),
        shape=SHAPES[int(rng.integers(0, len(SHAPES)))],
        contrast=int(rng.choice([-1, 1]) * rng.integers(50, 100)),
        segments=segments, entry=entry, class_id=int(object_id % 3),
    )
    # exit at the first frame the box would leave the picture
    for t, pos in enumerate(_trajectory(obj, frame_count)):
        if pos is None:
            continue
        if pos[0] < 0 or pos[1] < 0 or pos[0] + w > spec.width or pos[1] + h > spec.height:
            obj.exit = t
            break
    return obj


def random_scene(seed, width=256, height=256, frame_count=120, objects=6, max_speed=6.0,
                 background='texture', noise=1.0, density_changes=True):
    # type: (int, int, int, int, int, float, str, float, bool) -> SceneSpec
    """
    A busy scene for training and benchmarking corpora. With
    `density_changes`, every 30-frame stretch draws its own crowd size, so
    neighbouring chunks need different thresholds.
    """
    rng = derive_rng(seed, 0x5CE)
    spec = SceneSpec(width, height, frame_count, seed=seed, background=background,
                     level=int(rng.integers(80, 170)), noise=noise, max_speed=max_speed)
    stretches = range(0, frame_count, 30) if density_changes else [0]
    object_id = 0
    for first in stretches:
        count = int(rng.integers(1, objects + 1)) if density_changes else objects
        speed = max_speed * (rng.uniform(0.3, 1.0) if density_changes else 1.0)
        for _ in range(count):
            spec.objects.append(_random_object(rng, spec, frame_count, speed, object_id, first_frame=first))
            object_id += 1
    return spec


def load_scene_spec(path):
    # type: (str) -> SceneSpec
    """
    YAML schema:

        width: 256
        height: 256
        frame_count: 120
        seed: 7
        background: texture      # flat | gradient | texture
        level: 100
        noise: 1.0               # per-frame Gaussian sigma
        max_speed: 8             # px/frame, optional
        objects:
          - shape: rectangle     # rectangle | ellipse
            size: [32, 24]
            position: [10, 40]
            contrast: 80
            texture: 24          # 0 = flat fill
            segments: [[0, 4, 0], [30, 2, -1]]
            entry: 0
            exit: 90
            class_id: 1

    A file with `random: {seed: 3, ...}` instead builds a `random_scene`.
    """
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError('cannot read scene spec {}: {}'.format(path, e))
    if not isinstance(data, dict):
        raise ConfigError('scene spec {} is not a mapping'.format(path))
    if 'random' in data:
        return random_scene(**data['random'])
    return SceneSpec.from_dict(data)


def export_frames(frames, directory, prefix='frame'):
    # type: (Sequence[Frame], str, str) -> str
    """
    Raw 8-bit planar files plus a JSON manifest; returns the manifest path.
    """
    os.makedirs(directory, exist_ok=True)
    entries = []
    for f in frames:
        name = '{}_{:05d}.y'.format(prefix, f.display_index)
        f.pixels.tofile(os.path.join(directory, name))
        entries.append({'file': name, 'display_index': f.display_index})
    manifest = os.path.join(directory, '{}_manifest.json'.format(prefix))
    with open(manifest, 'w') as out:
        json.dump({'width': frames[0].width if frames else 0,
                   'height': frames[0].height if frames else 0,
                   'frames': entries}, out, indent=1)
    return manifest


def import_frames(manifest_path):
    # type: (str) -> List[Frame]
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
        base = os.path.dirname(manifest_path)
        w, h = manifest['width'], manifest['height']
        frames = []
        for entry in manifest['frames']:
            data = np.fromfile(os.path.join(base, entry['file']), dtype=np.uint8)
            if data.size != w * h:
                raise ConfigError('{} holds {} bytes, expected {}'.format(entry['file'], data.size, w * h))
            frames.append(Frame(data.reshape(h, w), entry['display_index']))
    except (OSError, KeyError, ValueError) as e:
        raise ConfigError('cannot read frame manifest {}: {}'.format(manifest_path, e))
    return sorted(frames, key=lambda f: f.display_index)


TRACK_COLUMNS = ('frame', 'object_id', 'x', 'y', 'w', 'h', 'visible')


def export_tracks(tracks, path):
    # type: (Sequence[Track], str) -> None
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(TRACK_COLUMNS)
        frame_count = max((len(t.boxes) for t in tracks), default=0)
        for frame in range(frame_count):
            for tr in tracks:
                b = tr.boxes[frame]
                if b is None:
                    writer.writerow((frame, tr.object_id, 0, 0, 0, 0, 0))
                else:
                    writer.writerow((frame, tr.object_id, b.x, b.y, b.w, b.h, 1))


def load_tracks(path, class_ids=None):
    # type: (str, Optional[Dict[int, int]]) -> List[Track]
    rows = {}  # type: Dict[int, Dict[int, Optional[BBox]]]
    frame_count = 0
    with open(path, newline='') as f:
        for row in csv.DictReader(f):
            frame, oid = int(row['frame']), int(row['object_id'])
            frame_count = max(frame_count, frame + 1)
            box = None
            if int(row['visible']):
                box = BBox(float(row['x']), float(row['y']), float(row['w']), float(row['h']))
            rows.setdefault(oid, {})[frame] = box
    class_ids = class_ids or {}
    return [Track(oid, class_ids.get(oid, 0), [rows[oid].get(t) for t in range(frame_count)])
            for oid in sorted(rows)]
