"""Walsh-Hadamard differential pattern sets and the photomodulator model.

Logical masks are rows of a Sylvester-ordered Hadamard matrix of order
N = n*n reshaped to n x n.  Row i has entries (-1)**popcount(i & j), which is
exactly what the fast Walsh-Hadamard transform (FWHT) below diagonalizes, so
every pattern integration elsewhere in the toolkit runs in O(N log N) without
ever materializing an N x N matrix.

Physically a +1 logical state is the unpumped (transparent) modulator region;
pumped regions attenuate the probe intensity by the modulation depth m.
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, ParameterError
from .field import IntensityImage

NATURAL = "natural"
SEQUENCY = "sequency"

_ORDERING_CODES = {NATURAL: 0, SEQUENCY: 1}
_ORDERING_NAMES = {v: k for k, v in _ORDERING_CODES.items()}

_PATTERN_MAGIC = b"SPIP"
_PATTERN_VERSION = 1


def fwht(vec: np.ndarray) -> np.ndarray:
    """Fast Walsh-Hadamard transform in natural (Sylvester) order.

    Computes y[r] = sum_c H[r, c] * x[c] with H[r, c] = (-1)**popcount(r & c).
    Operates on the last axis, which must have power-of-two length.  The
    transform is its own inverse up to a factor 1/len.
    """
    a = np.array(vec, dtype=np.float64, copy=True)
    n = a.shape[-1]
    if n & (n - 1) or n == 0:
        raise ParameterError(f"FWHT length must be a power of two, got {n}")
    h = 1
    lead = a.shape[:-1]
    while h < n:
        a = a.reshape(lead + (n // (2 * h), 2, h))
        x = a[..., 0, :]
        y = a[..., 1, :]
        a = np.stack((x + y, x - y), axis=-2).reshape(lead + (n,))
        h *= 2
    return a


def hadamard_row(index: int, length: int) -> np.ndarray:
    """Row `index` of the Sylvester Hadamard matrix of the given length."""
    if length & (length - 1) or length == 0:
        raise ParameterError(f"Hadamard order must be a power of two, got {length}")
    if not 0 <= index < length:
        raise IndexError(f"row index {index} out of range for order {length}")
    bits = length.bit_length() - 1
    row = np.array([1], dtype=np.int8)
    plus = np.array([1, 1], dtype=np.int8)
    minus = np.array([1, -1], dtype=np.int8)
    for b in range(bits - 1, -1, -1):
        row = np.kron(row, minus if (index >> b) & 1 else plus).astype(np.int8)
    return row


def sequency_to_natural(sequency: int, bits: int) -> int:
    """Natural (Sylvester) row index of the row with the given sign-change count.

    The row of H_{2^bits} with exactly `sequency` sign changes sits at natural
    index bit_reverse(gray(sequency)).
    """
    g = sequency ^ (sequency >> 1)
    rev = 0
    for _ in range(bits):
        rev = (rev << 1) | (g & 1)
        g >>= 1
    return rev


def row_sequency(row: np.ndarray) -> int:
    """Number of sign changes along a +/-1 row."""
    return int(np.count_nonzero(row[1:] != row[:-1]))


def mask_sequency(mask: np.ndarray) -> int:
    """Total sign-change count of a 2D mask (along rows plus along columns)."""
    return int(
        np.count_nonzero(mask[:, 1:] != mask[:, :-1])
        + np.count_nonzero(mask[1:, :] != mask[:-1, :])
    )


def _sequency_selection(order_n: int, count_m: int) -> list:
    """Natural row indices of the `count_m` lowest-sequency masks.

    A row of H_{n*n} at natural index r = r1*n + r0 reshapes to the separable
    mask walsh(r1) (x) walsh(r0), whose total 2D sign-change count is
    n * (seq(r1) + seq(r0)).  Enumerating 1D-sequency pairs (sy, sx) in
    ascending sum keeps the masks isotropically low-frequency; ties break by
    max component then sx so the order is deterministic.
    """
    bits = order_n.bit_length() - 1
    keys = sorted(
        (sx + sy, max(sx, sy), sx, sy) for sy in range(order_n) for sx in range(order_n)
    )
    selection = []
    for _, _, sx, sy in keys[:count_m]:
        selection.append(sequency_to_natural(sy, bits) * order_n + sequency_to_natural(sx, bits))
    return selection


@dataclass(frozen=True)
class PatternSet:
    """Ordered set of +/-1 Walsh-Hadamard masks with physical decomposition.

    Attributes
    ----------
    order : int
        Pixels per side n; the pattern grid is n x n and N = n*n.
    logical_masks : ndarray, shape (M, n, n), int8
        The +/-1 masks.
    selection : tuple of int
        Natural-order Hadamard row index backing each mask.
    ordering : str
        "natural" or "sequency" (how the selection was generated).
    modulation_depth : float
        Fractional intensity attenuation m in pumped regions, in (0, 1].
    """

    order: int
    logical_masks: np.ndarray
    selection: tuple
    ordering: str
    modulation_depth: float = 0.9

    def __post_init__(self):
        n = self.order
        if n < 2 or n & (n - 1):
            raise ParameterError(f"pattern order must be a power of two >= 2, got {n}")
        masks = np.asarray(self.logical_masks, dtype=np.int8)
        if masks.ndim != 3 or masks.shape[1:] != (n, n):
            raise DimensionError(f"logical masks must have shape (M, {n}, {n})")
        if not np.all(np.abs(masks) == 1):
            raise ParameterError("logical masks must contain only +1 and -1")
        if len(self.selection) != masks.shape[0]:
            raise DimensionError("selection length must match mask count")
        if masks.shape[0] > n * n:
            raise ParameterError(f"at most N = {n * n} patterns for order {n}")
        if not 0.0 < self.modulation_depth <= 1.0:
            raise ParameterError("modulation depth must lie in (0, 1]")
        if self.ordering not in _ORDERING_CODES:
            raise ParameterError(f"unknown ordering {self.ordering!r}")
        masks.setflags(write=False)
        object.__setattr__(self, "logical_masks", masks)
        object.__setattr__(self, "selection", tuple(int(i) for i in self.selection))

    @property
    def count(self) -> int:
        return self.logical_masks.shape[0]

    @property
    def pixels(self) -> int:
        return self.order * self.order

    @property
    def compression_ratio(self) -> float:
        return self.count / self.pixels

    @property
    def identifier(self) -> str:
        return f"walsh-n{self.order}-m{self.count}-{self.ordering}-{self.fingerprint}"

    @property
    def fingerprint(self) -> str:
        crc = zlib.crc32(self.logical_masks.tobytes())
        return f"{crc:08x}"

    def subset(self, count: int) -> "PatternSet":
        """First `count` patterns (a valid undersampling of this set)."""
        if not 1 <= count <= self.count:
            raise ParameterError(f"subset size {count} outside [1, {self.count}]")
        if count == self.count:
            return self
        return PatternSet(
            order=self.order,
            logical_masks=self.logical_masks[:count].copy(),
            selection=self.selection[:count],
            ordering=self.ordering,
            modulation_depth=self.modulation_depth,
        )


def walsh_hadamard_patterns(
    order_n: int,
    count_m: int,
    ordering: str = SEQUENCY,
    modulation_depth: float = 0.9,
) -> PatternSet:
    """First `count_m` Walsh-Hadamard masks of order n in the chosen ordering.

    Sequency ordering sorts rows by ascending sign-change count of the
    reshaped n x n mask, so an undersampled prefix keeps isotropically
    low-spatial-frequency content; this is what makes low-compression-ratio
    reconstructions meaningful.  (Sorting by the sign changes of the flat
    length-N row instead would keep full detail along one image axis and
    almost none along the other, because the reshape is separable.)
    """
    if order_n < 2 or order_n & (order_n - 1):
        raise ParameterError(f"pattern order must be a power of two >= 2, got {order_n}")
    n_pixels = order_n * order_n
    if not 1 <= count_m <= n_pixels:
        raise ParameterError(f"pattern count must lie in [1, {n_pixels}], got {count_m}")
    if ordering not in _ORDERING_CODES:
        raise ParameterError(f"ordering must be one of {sorted(_ORDERING_CODES)}")

    if ordering == NATURAL:
        selection = list(range(count_m))
    else:
        selection = _sequency_selection(order_n, count_m)

    masks = np.empty((count_m, order_n, order_n), dtype=np.int8)
    for k, idx in enumerate(selection):
        masks[k] = hadamard_row(idx, n_pixels).reshape(order_n, order_n)
    return PatternSet(
        order=order_n,
        logical_masks=masks,
        selection=tuple(selection),
        ordering=ordering,
        modulation_depth=modulation_depth,
    )


def positive_negative_split(pattern_set: PatternSet, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Binary masks (p_plus, p_minus) whose difference is logical mask i."""
    if not 0 <= i < pattern_set.count:
        raise IndexError(f"pattern index {i} out of range for M={pattern_set.count}")
    mask = pattern_set.logical_masks[i]
    p_plus = (mask > 0).astype(np.uint8)
    p_minus = (mask < 0).astype(np.uint8)
    return p_plus, p_minus


def upsample_mask(mask: np.ndarray, height: int, width: int) -> np.ndarray:
    """Replicate pattern cells into integer blocks of image pixels."""
    mh, mw = mask.shape
    if height % mh or width % mw or height // mh != width // mw:
        raise DimensionError(
            f"mask {mh}x{mw} does not tile image {height}x{width} by an integer factor"
        )
    b = height // mh
    if b == 1:
        return mask
    return np.repeat(np.repeat(mask, b, axis=0), b, axis=1)


def apply_mask(image: IntensityImage, mask: np.ndarray, depth: float) -> IntensityImage:
    """Attenuate pumped (mask = 1) regions: out = image * (1 - depth * mask)."""
    if not 0.0 < depth <= 1.0:
        raise ParameterError("modulation depth must lie in (0, 1]")
    m = np.asarray(mask)
    up = upsample_mask(m, image.height, image.width)
    return image.with_values(image.values * (1.0 - depth * up))


@dataclass(frozen=True)
class DrudeParams:
    """Free-carrier permittivity parameters.

    omega is the probe angular frequency, omega_p the plasma frequency set by
    the photocarrier concentration, tau_d the Drude damping time (seconds;
    the damping rate entering the formula is 1/tau_d), eps_inf the
    background permittivity.
    """

    eps_inf: float
    omega_p: float
    tau_d: float
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ParameterError("probe frequency omega must be positive (omega = 0 is singular)")
        if not self.tau_d > 0:
            raise ParameterError("damping time tau_d must be positive")
        if self.omega_p < 0:
            raise ParameterError("plasma frequency omega_p must be nonnegative")


def drude_permittivity(params: DrudeParams) -> complex:
    """Complex permittivity eps_inf - omega_p^2 / (omega * (omega + i/tau_d)).

    Uses the e^{-i omega t} convention, so Im(eps) >= 0 for a lossy medium.
    """
    w = params.omega
    return complex(params.eps_inf) - params.omega_p**2 / (w * (w + 1j / params.tau_d))


def save_patterns(path, pattern_set: PatternSet) -> None:
    """Write a pattern set to the binary SPIP container.

    Layout (little-endian): magic "SPIP", version u16, n u32, M u32,
    ordering u8, then M*N signed bytes holding the +/-1 mask entries.
    """
    header = struct.pack(
        "<4sHIIB",
        _PATTERN_MAGIC,
        _PATTERN_VERSION,
        pattern_set.order,
        pattern_set.count,
        _ORDERING_CODES[pattern_set.ordering],
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(pattern_set.logical_masks.tobytes())


def load_patterns(path, modulation_depth: float = 0.9) -> PatternSet:
    """Read a SPIP pattern file and recover the Hadamard row selection.

    Every stored mask is validated against the Hadamard-row invariant by
    transforming it: a genuine row of H_N has FWHT equal to N at exactly one
    position and zero elsewhere, which also identifies its natural index.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    head_size = struct.calcsize("<4sHIIB")
    if len(data) < head_size:
        raise FormatError(f"pattern file truncated in header (byte {len(data)})")
    magic, version, order, count, ordering_code = struct.unpack_from("<4sHIIB", data, 0)
    if magic != _PATTERN_MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0; expected {_PATTERN_MAGIC!r}")
    if version != _PATTERN_VERSION:
        raise FormatError(f"unsupported pattern file version {version} at byte 4")
    if ordering_code not in _ORDERING_NAMES:
        raise FormatError(f"unknown ordering code {ordering_code} at byte {head_size - 1}")
    n_pixels = order * order
    expected = head_size + count * n_pixels
    if len(data) != expected:
        raise FormatError(
            f"pattern payload has {len(data) - head_size} bytes at byte {head_size}; "
            f"expected {count * n_pixels}"
        )
    body = np.frombuffer(data, dtype=np.int8, offset=head_size)
    bad = np.flatnonzero(np.abs(body) != 1)
    if bad.size:
        raise FormatError(f"mask byte not +1/-1 at byte {head_size + int(bad[0])}")
    masks = body.reshape(count, order, order)

    coeffs = fwht(masks.reshape(count, n_pixels).astype(np.float64))
    selection = []
    for k in range(count):
        idx = int(np.argmax(np.abs(coeffs[k])))
        peak = coeffs[k, idx]
        rest = np.delete(coeffs[k], idx)
        if peak != n_pixels or np.any(rest != 0.0):
            raise FormatError(
                f"mask {k} (starting at byte {head_size + k * n_pixels}) "
                "is not a Walsh-Hadamard row"
            )
        selection.append(idx)

    return PatternSet(
        order=order,
        logical_masks=masks.copy(),
        selection=tuple(selection),
        ordering=_ORDERING_NAMES[ordering_code],
        modulation_depth=modulation_depth,
    )
