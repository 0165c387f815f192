"""
Deterministic two-frame scenes of moving and static rectangles
over a textured background, with optional camera ego-motion
and an analytic optical flow field.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from modetr.autograd import Tensor
from modetr.boxes import BoxCXCYWH, GroundTruthObject, MotionLabel
from modetr.exceptions import ModetrConfigError, ModetrDataError
from modetr.model.config import check_known_keys

__all__ = [
    'SceneSpec', 'SceneObject', 'SamplePair',
    'PALETTE', 'SceneLayout', 'background_texture', 'draw_scene', 'render_pair',
    'generate_sample', 'generate_samples',
]

logger = logging.getLogger(__name__)

#: Fill colors available to objects; every object in a scene gets a distinct one
PALETTE: tuple[tuple[float, float, float], ...] = tuple(
    itertools.product((0.05, 0.5, 0.95), repeat=3),
)

#: Unit steps of the eight compass directions
DIRECTIONS = tuple(
    (dx, dy) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dx, dy) != (0, 0)
)

#: Attempts to place a single object before the scene is declared infeasible
PLACEMENT_ATTEMPTS = 200

#: Side of a value-noise cell in pixels
NOISE_CELL = 8


@dataclass(frozen=True)
class SceneSpec:
    """
    Distribution of synthetic scenes.
    """
    #: Image height in pixels
    height: int = 64

    #: Image width in pixels
    width: int = 64

    #: Minimum object count
    n_min: int = 1

    #: Maximum object count
    n_max: int = 4

    #: Smallest object side as a fraction of the image width
    size_min: float = 0.10

    #: Largest object side as a fraction of the image width
    size_max: float = 0.25

    #: Slowest moving-object speed in px/frame
    speed_min: int = 2

    #: Fastest moving-object speed in px/frame
    speed_max: int = 6

    #: Probability that an object is static
    static_fraction: float = 0.4

    #: Whether the camera moves between the frames
    ego_motion: bool = False

    #: Largest ego-motion component magnitude in px/frame
    ego_max: int = 3

    #: Seed of the background texture
    texture_seed: int = 0

    #: Amplitude of the background noise around mid-gray
    texture_amplitude: float = 0.15

    #: Seed mixed into every sample seed
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'size_min', _as_float(self.size_min, 'size_min'))
        object.__setattr__(self, 'size_max', _as_float(self.size_max, 'size_max'))
        object.__setattr__(self, 'static_fraction', _as_float(self.static_fraction, 'static_fraction'))
        object.__setattr__(
            self, 'texture_amplitude', _as_float(self.texture_amplitude, 'texture_amplitude'),
        )
        for name in ('height', 'width'):
            _check_int(self, name, low=1)
        for name in ('n_min', 'n_max', 'speed_min', 'speed_max', 'ego_max', 'texture_seed', 'seed'):
            _check_int(self, name, low=0)
        if not isinstance(self.ego_motion, bool):
            raise ModetrConfigError("ego_motion must be a boolean", field='ego_motion')
        if self.n_min > self.n_max:
            raise ModetrConfigError(f"n_min {self.n_min} exceeds n_max {self.n_max}", field='n_min')
        if self.n_max > len(PALETTE):
            raise ModetrConfigError(
                f"n_max {self.n_max} exceeds the {len(PALETTE)} distinct object colors",
                field='n_max',
            )
        if not 0.0 < self.size_min <= self.size_max <= 1.0:
            raise ModetrConfigError(
                f"object sizes must satisfy 0 < size_min <= size_max <= 1, "
                f"got {self.size_min} and {self.size_max}",
                field='size_min' if not 0.0 < self.size_min <= self.size_max else 'size_max',
            )
        if self.speed_min > self.speed_max:
            raise ModetrConfigError(
                f"speed_min {self.speed_min} exceeds speed_max {self.speed_max}", field='speed_min',
            )
        if not 0.0 <= self.static_fraction <= 1.0:
            raise ModetrConfigError(
                f"static_fraction must lie in [0, 1], got {self.static_fraction}",
                field='static_fraction',
            )
        if not 0.0 <= self.texture_amplitude <= 0.5:
            raise ModetrConfigError(
                f"texture_amplitude must lie in [0, 0.5], got {self.texture_amplitude}",
                field='texture_amplitude',
            )

    @classmethod
    def from_dict(cls, data: dict) -> SceneSpec:
        check_known_keys(cls, data)
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _as_float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ModetrConfigError(f"{name} must be a number, got {value!r}", field=name)
    return float(value)


def _check_int(spec: SceneSpec, name: str, low: int):
    value = getattr(spec, name)
    if isinstance(value, bool) or not isinstance(value, int) or value < low:
        raise ModetrConfigError(f"{name} must be an integer >= {low}, got {value!r}", field=name)


@dataclass(frozen=True)
class SceneObject:
    """
    Axis-aligned rectangle in pixel units, placed by its top-left corner on frame t.
    """
    x: int
    y: int
    w: int
    h: int

    #: World velocity in px/frame (zero for static objects)
    vx: int = 0
    vy: int = 0

    color: tuple[float, float, float] = (0.95, 0.95, 0.95)

    @property
    def label(self) -> MotionLabel:
        """
        Moving iff the world velocity is nonzero, whatever the camera does.
        """
        return MotionLabel.MOVING if (self.vx, self.vy) != (0, 0) else MotionLabel.STATIC

    def displacement(self, ego: tuple[int, int]) -> tuple[int, int]:
        """
        Image-space displacement between the frames: own motion plus ego motion.
        """
        return self.vx + ego[0], self.vy + ego[1]

    def moved(self, ego: tuple[int, int]) -> SceneObject:
        dx, dy = self.displacement(ego)
        return dataclasses.replace(self, x=self.x + dx, y=self.y + dy)

    def inside(self, height: int, width: int) -> bool:
        return 0 <= self.x and 0 <= self.y and self.x + self.w <= width and self.y + self.h <= height

    def overlaps(self, other: SceneObject) -> bool:
        return (
            self.x < other.x + other.w and other.x < self.x + self.w
            and self.y < other.y + other.h and other.y < self.y + self.h
        )

    def box(self, height: int, width: int) -> BoxCXCYWH:
        return BoxCXCYWH(
            (self.x + 0.5 * self.w) / width, (self.y + 0.5 * self.h) / height,
            self.w / width, self.h / height,
        )


@dataclass
class SamplePair:
    """
    Two consecutive frames with labels for frame t+1.
    """
    #: Frame t, ``3×H×W`` in [0, 1]
    frame_t: Tensor

    #: Frame t+1, ``3×H×W`` in [0, 1]
    frame_t1: Tensor

    #: Optical flow from frame t to t+1, ``2×H×W`` as ``(dx, dy)`` pixels (None if omitted)
    flow: Optional[Tensor]

    #: Ground truth on frame t+1
    objects: list[GroundTruthObject]

    #: Camera motion in px/frame
    ego: tuple[int, int] = (0, 0)

    @property
    def height(self) -> int:
        return self.frame_t.shape[1]

    @property
    def width(self) -> int:
        return self.frame_t.shape[2]

    def without_flow(self) -> SamplePair:
        return dataclasses.replace(self, flow=None)


def background_texture(spec: SceneSpec, seed: int) -> np.ndarray:
    """
    Seeded value noise: a coarse random lattice bilinearly interpolated
    with periodic wrap, so shifting with wrap-around stays seamless.
    """
    rng = np.random.default_rng([spec.texture_seed, seed])
    grid_h = max(1, -(-spec.height // NOISE_CELL))
    grid_w = max(1, -(-spec.width // NOISE_CELL))
    lattice = rng.uniform(-1.0, 1.0, size=(3, grid_h, grid_w))

    rows = np.arange(spec.height) / NOISE_CELL
    cols = np.arange(spec.width) / NOISE_CELL
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    r0, r1 = r0 % grid_h, (r0 + 1) % grid_h
    c0, c1 = c0 % grid_w, (c0 + 1) % grid_w

    top = lattice[:, r0][:, :, c0] * (1 - fc) + lattice[:, r0][:, :, c1] * fc
    bottom = lattice[:, r1][:, :, c0] * (1 - fc) + lattice[:, r1][:, :, c1] * fc
    noise = top * (1 - fr) + bottom * fr
    return _float32_exact(0.5 + spec.texture_amplitude * noise)


def _float32_exact(array: np.ndarray) -> np.ndarray:
    # Datasets store 32-bit reals; keep values representable so round trips are exact
    return np.asarray(array, dtype=np.float32).astype(np.float64)


def render_pair(
        background: np.ndarray,
        objects: list[SceneObject],
        ego: tuple[int, int] = (0, 0),
        with_flow: bool = True,
) -> SamplePair:
    """
    Paints the objects on the background for frame t,
    then shifts the background by the ego motion (with wrap-around)
    and repaints every object displaced by its velocity plus ego motion for frame t+1.
    """
    _, height, width = background.shape
    frame_t = background.copy()
    frame_t1 = np.roll(background, shift=(ego[1], ego[0]), axis=(1, 2))
    flow = np.empty((2, height, width))
    flow[0] = ego[0]
    flow[1] = ego[1]
    gts = []
    for obj in objects:
        later = obj.moved(ego)
        if not (obj.inside(height, width) and later.inside(height, width)):
            raise ModetrDataError(f"object {obj} leaves the {height}×{width} frame")
        color = np.asarray(obj.color, dtype=np.float64)[:, None, None]
        frame_t[:, obj.y:obj.y + obj.h, obj.x:obj.x + obj.w] = color
        frame_t1[:, later.y:later.y + later.h, later.x:later.x + later.w] = color
        dx, dy = obj.displacement(ego)
        flow[0, obj.y:obj.y + obj.h, obj.x:obj.x + obj.w] = dx
        flow[1, obj.y:obj.y + obj.h, obj.x:obj.x + obj.w] = dy
        gts.append(GroundTruthObject(later.box(height, width), obj.label))
    return SamplePair(
        frame_t=Tensor(_float32_exact(frame_t)),
        frame_t1=Tensor(_float32_exact(frame_t1)),
        flow=Tensor(flow) if with_flow else None,
        objects=gts,
        ego=(int(ego[0]), int(ego[1])),
    )


def _place_object(
        spec: SceneSpec,
        rng: np.random.Generator,
        ego: tuple[int, int],
        placed: list[SceneObject],
        color: tuple[float, float, float],
) -> SceneObject:
    for _ in range(PLACEMENT_ATTEMPTS):
        w = max(1, round(rng.uniform(spec.size_min, spec.size_max) * spec.width))
        h = max(1, round(rng.uniform(spec.size_min, spec.size_max) * spec.height))
        static = spec.speed_max == 0 or rng.random() < spec.static_fraction
        if static:
            vx = vy = 0
        else:
            speed = int(rng.integers(max(1, spec.speed_min), spec.speed_max + 1))
            step_x, step_y = DIRECTIONS[rng.integers(len(DIRECTIONS))]
            vx, vy = speed * step_x, speed * step_y
        dx, dy = vx + ego[0], vy + ego[1]
        x_lo, x_hi = max(0, -dx), spec.width - w - max(0, dx)
        y_lo, y_hi = max(0, -dy), spec.height - h - max(0, dy)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        candidate = SceneObject(
            x=int(rng.integers(x_lo, x_hi + 1)), y=int(rng.integers(y_lo, y_hi + 1)),
            w=w, h=h, vx=vx, vy=vy, color=color,
        )
        later = candidate.moved(ego)
        if any(candidate.overlaps(o) or later.overlaps(o.moved(ego)) for o in placed):
            continue
        return candidate
    raise ModetrDataError(
        f"scene infeasible: could not place object {len(placed) + 1} "
        f"after {PLACEMENT_ATTEMPTS} attempts",
    )


@dataclass(frozen=True)
class SceneLayout:
    """
    Sampled scene before rendering.
    """
    #: Background texture of frame t, ``3×H×W``
    background: np.ndarray

    #: Objects placed on frame t
    objects: tuple[SceneObject, ...]

    #: Camera motion in px/frame
    ego: tuple[int, int]


def draw_scene(spec: SceneSpec, seed: int) -> SceneLayout:
    """
    Samples the ego motion, the objects and the background of one scene;
    ``(spec, seed)`` fully determines the result.

    Objects never overlap each other in either frame and stay fully inside
    both frames, so every pixel of frame t has exactly one well-defined flow vector.
    """
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ModetrConfigError(f"sample seed must be a non-negative integer, got {seed!r}", field='seed')
    rng = np.random.default_rng([spec.seed, seed])
    if spec.ego_motion:
        ego = (
            int(rng.integers(-spec.ego_max, spec.ego_max + 1)),
            int(rng.integers(-spec.ego_max, spec.ego_max + 1)),
        )
    else:
        ego = (0, 0)
    count = int(rng.integers(spec.n_min, spec.n_max + 1))
    colors = rng.choice(len(PALETTE), size=count, replace=False)
    placed: list[SceneObject] = []
    for color_index in colors:
        placed.append(_place_object(spec, rng, ego, placed, PALETTE[color_index]))
    logger.debug("scene %d: %d objects, ego %s", seed, count, ego)
    return SceneLayout(background_texture(spec, seed), tuple(placed), ego)


def generate_sample(spec: SceneSpec, seed: int, with_flow: bool = True) -> SamplePair:
    """
    Draws and renders one two-frame scene.
    """
    layout = draw_scene(spec, seed)
    return render_pair(layout.background, list(layout.objects), layout.ego, with_flow=with_flow)


def generate_samples(spec: SceneSpec, count: int, seed: int = 0, with_flow: bool = True) -> list[SamplePair]:
    """
    Draws ``count`` samples using seeds ``seed, seed + 1, ...``.
    """
    if count < 0:
        raise ModetrConfigError(f"sample count must be non-negative, got {count}", field='count')
    return [generate_sample(spec, seed + index, with_flow=with_flow) for index in range(count)]
