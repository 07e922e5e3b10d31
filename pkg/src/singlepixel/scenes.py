"""Scene construction and the flat key=value scene-file format.

A scene pins the optical geometry shared by every stage of a run: grid size,
field of view, wavelength, object-to-recording-plane distance, object shape,
modulation depth, noise level, and seed.  Lengths in scene files take `mm` or
`um` suffixes; bare numbers are meters.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import FormatError, ParameterError
from .field import IntensityImage

THREE_SLIT = "three_slit"
BITMAP = "bitmap"

_LENGTH_KEYS = {
    "fov",
    "wavelength",
    "distance",
    "slit_height",
}


@dataclass(frozen=True)
class SceneSpec:
    grid: int
    fov: float
    wavelength: float
    distance: float
    object_kind: str
    slit_widths: tuple = ()
    slit_separations: tuple = ()
    slit_height: float | None = None
    bitmap_path: str | None = None
    modulation_depth: float = 0.9
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.grid < 2 or self.grid & (self.grid - 1):
            raise ParameterError(f"grid must be a power of two >= 2, got {self.grid}")
        if self.fov <= 0 or self.wavelength <= 0:
            raise ParameterError("fov and wavelength must be positive")
        if self.object_kind not in (THREE_SLIT, BITMAP):
            raise ParameterError(f"unknown object kind {self.object_kind!r}")
        if self.object_kind == THREE_SLIT:
            if len(self.slit_widths) != 3 or len(self.slit_separations) != 2:
                raise ParameterError("three_slit needs 3 widths and 2 separations")
        if self.object_kind == BITMAP and not self.bitmap_path:
            raise ParameterError("bitmap object needs bitmap_path")
        if not 0.0 < self.modulation_depth <= 1.0:
            raise ParameterError("modulation_depth must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be nonnegative")

    @property
    def pitch(self) -> float:
        return self.fov / self.grid

    def with_distance(self, distance: float) -> "SceneSpec":
        return replace(self, distance=distance)


def parse_length(text: str) -> float:
    """Parse a length with optional mm/um suffix into meters."""
    s = text.strip()
    scale = 1.0
    if s.endswith("mm"):
        scale, s = 1e-3, s[:-2]
    elif s.endswith("um"):
        scale, s = 1e-6, s[:-2]
    elif s.endswith("m"):
        s = s[:-1]
    try:
        return float(s) * scale
    except ValueError:
        raise FormatError(f"cannot parse length {text!r}") from None


def parse_scene(text: str) -> SceneSpec:
    entries: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"scene line {line_no} is not key=value: {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        entries[key] = val

    def pop(key, default=None):
        return entries.pop(key, default)

    kind = pop("object")
    if kind is None:
        raise FormatError("scene is missing the 'object' key")
    try:
        spec = SceneSpec(
            grid=int(pop("grid", "64")),
            fov=parse_length(pop("fov", "10.5mm")),
            wavelength=parse_length(pop("wavelength", "833.3um")),
            distance=parse_length(pop("distance", "0")),
            object_kind=kind,
            slit_widths=tuple(parse_length(t) for t in pop("slit_widths", "").split(",") if t.strip()),
            slit_separations=tuple(
                parse_length(t) for t in pop("slit_separations", "").split(",") if t.strip()
            ),
            slit_height=(parse_length(entries.pop("slit_height")) if "slit_height" in entries else None),
            bitmap_path=pop("bitmap_path"),
            modulation_depth=float(pop("modulation_depth", "0.9")),
            noise_sigma=float(pop("noise_sigma", "0")),
            seed=int(pop("seed", "0")),
        )
    except ParameterError as err:
        raise FormatError(f"invalid scene: {err}") from err
    if entries:
        raise FormatError(f"unknown scene keys: {sorted(entries)}")
    return spec


def load_scene(path) -> SceneSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_scene(fh.read())


def _edge_to_pixel(coord_m: float, pitch: float) -> int:
    """Nearest pixel boundary; quantization error per edge <= pitch/2."""
    return int(round(coord_m / pitch))


def build_scene(spec: SceneSpec) -> IntensityImage:
    """Rasterize the scene's binary object mask (1 = transmissive)."""
    if spec.object_kind == THREE_SLIT:
        return _build_three_slit(spec)
    return _build_bitmap(spec)


def _build_three_slit(spec: SceneSpec) -> IntensityImage:
    n = spec.grid
    pitch = spec.pitch
    widths = spec.slit_widths
    seps = spec.slit_separations
    total = sum(widths) + sum(seps)
    if total > spec.fov:
        raise ParameterError(f"slit geometry ({total:.4g} m) exceeds the field of view")
    height = spec.slit_height if spec.slit_height is not None else 0.6 * spec.fov
    if height > spec.fov:
        raise ParameterError("slit height exceeds the field of view")

    mask = np.zeros((n, n))
    x = (spec.fov - total) / 2.0
    row_lo = _edge_to_pixel((spec.fov - height) / 2.0, pitch)
    row_hi = _edge_to_pixel((spec.fov + height) / 2.0, pitch)
    for i, width in enumerate(widths):
        col_lo = _edge_to_pixel(x, pitch)
        col_hi = _edge_to_pixel(x + width, pitch)
        mask[row_lo:row_hi, col_lo:col_hi] = 1.0
        x += width
        if i < len(seps):
            x += seps[i]
    return IntensityImage(values=mask, pitch=pitch)


def _build_bitmap(spec: SceneSpec) -> IntensityImage:
    from .pgm import read_pgm

    image, _ = read_pgm(spec.bitmap_path, pitch=spec.pitch)
    if image.width != spec.grid or image.height != spec.grid:
        raise ParameterError(
            f"bitmap is {image.width}x{image.height}, scene grid is {spec.grid}"
        )
    return IntensityImage(values=(image.values >= 0.5).astype(np.float64), pitch=spec.pitch)


def slit_feature_columns(spec: SceneSpec) -> tuple:
    """(slit-center columns, gap-center columns) of a three-slit scene."""
    if spec.object_kind != THREE_SLIT:
        raise ParameterError("slit_feature_columns needs a three_slit scene")
    pitch = spec.pitch
    total = sum(spec.slit_widths) + sum(spec.slit_separations)
    x = (spec.fov - total) / 2.0
    peaks = []
    valleys = []
    for i, width in enumerate(spec.slit_widths):
        peaks.append(int((x + width / 2.0) / pitch))
        x += width
        if i < len(spec.slit_separations):
            valleys.append(int((x + spec.slit_separations[i] / 2.0) / pitch))
            x += spec.slit_separations[i]
    return tuple(peaks), tuple(valleys)


def slit_row_bounds(spec: SceneSpec) -> tuple:
    """Row range [lo, hi) covered by the slits of a three-slit scene."""
    if spec.object_kind != THREE_SLIT:
        raise ParameterError("slit_row_bounds needs a three_slit scene")
    height = spec.slit_height if spec.slit_height is not None else 0.6 * spec.fov
    lo = _edge_to_pixel((spec.fov - height) / 2.0, spec.pitch)
    hi = _edge_to_pixel((spec.fov + height) / 2.0, spec.pitch)
    return lo, hi


def star_mask(n: int, pitch: float = 1.0, points: int = 5, outer: float = 0.42,
              inner: float = 0.17, rotation: float = -np.pi / 2) -> IntensityImage:
    """Binary star-polygon mask, a stand-in for the hollow-star test object.

    Radii are fractions of the grid side; the polygon is filled by even-odd
    ray casting on pixel centers.
    """
    angles = rotation + np.arange(2 * points) * np.pi / points
    radii = np.where(np.arange(2 * points) % 2 == 0, outer, inner) * n
    vx = n / 2.0 + radii * np.cos(angles)
    vy = n / 2.0 + radii * np.sin(angles)

    ys, xs = np.mgrid[0:n, 0:n]
    px = xs + 0.5
    py = ys + 0.5
    inside = np.zeros((n, n), dtype=bool)
    m = len(vx)
    for i in range(m):
        x1, y1 = vx[i], vy[i]
        x2, y2 = vx[(i + 1) % m], vy[(i + 1) % m]
        crosses = (y1 <= py) != (y2 <= py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_cross)
    return IntensityImage(values=inside.astype(np.float64), pitch=pitch)
