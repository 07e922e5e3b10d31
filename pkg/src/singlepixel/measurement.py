"""Single-pixel forward model: diffract, encode, integrate, add noise.

A differential reading subtracts the bucket signals of the two complementary
binary half-masks of one +/-1 pattern.  Because the pumped (blocked) regions
for the positive half are exactly the -1 cells and vice versa, the two-mask
algebra collapses to

    I_i = m * <P_i, O_d>  +  (eta_i_plus - eta_i_minus)

which is how the readings are computed here: one fast Walsh-Hadamard
transform of the (block-pooled) diffraction image yields every <P_i, O_d> at
once.  eta are independent zero-mean Gaussian draws per half-measurement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConsistencyError, DimensionError, ParameterError
from .field import ComplexField, IntensityImage, intensity
from .patterns import PatternSet, fwht
from .propagation import PropagationSpec, propagate


@dataclass(frozen=True)
class Measurement:
    """1D detector readout vector with noise metadata."""

    readings: np.ndarray
    pattern_ref: str
    noise_sigma: float
    seed: int
    differential: bool = True

    def __post_init__(self):
        r = np.asarray(self.readings, dtype=np.float64)
        if r.ndim != 1:
            raise DimensionError("readings must be a 1D vector")
        if not np.all(np.isfinite(r)):
            raise ParameterError("readings must be finite")
        r.setflags(write=False)
        object.__setattr__(self, "readings", r)

    @property
    def count(self) -> int:
        return self.readings.shape[0]


def block_pool(values: np.ndarray, order: int) -> np.ndarray:
    """Sum image pixels over the integer blocks covered by each pattern cell."""
    h, w = values.shape
    if h % order or w % order or h // order != w // order:
        raise DimensionError(f"image {h}x{w} is not an integer replication of order {order}")
    b = h // order
    if b == 1:
        return values
    return values.reshape(order, b, order, b).sum(axis=(1, 3))


def pattern_coefficients(image: IntensityImage, pattern_set: PatternSet) -> np.ndarray:
    """<P_i, image> for every pattern in the set, via one FWHT."""
    pooled = block_pool(image.values, pattern_set.order)
    coeffs = fwht(pooled.ravel())
    return coeffs[list(pattern_set.selection)]


def check_compatible(meas: Measurement, pattern_set: PatternSet) -> None:
    if meas.count != pattern_set.count:
        raise ConsistencyError(
            f"measurement has {meas.count} readings but pattern set has {pattern_set.count}"
        )


def measure(
    diffracted: IntensityImage,
    pattern_set: PatternSet,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> Measurement:
    """Differential single-pixel readout of a diffraction image.

    The noise RNG is split per pattern index from the seed, so readings are
    reproducible bit-for-bit and independent of evaluation order.
    """
    if noise_sigma < 0:
        raise ParameterError(f"noise sigma must be nonnegative, got {noise_sigma}")
    m = pattern_set.modulation_depth
    readings = m * pattern_coefficients(diffracted, pattern_set)
    if noise_sigma > 0:
        children = np.random.SeedSequence(seed).spawn(pattern_set.count)
        noise = np.empty(pattern_set.count)
        for i, child in enumerate(children):
            eta = np.random.Generator(np.random.PCG64(child)).normal(0.0, noise_sigma, 2)
            noise[i] = eta[0] - eta[1]
        readings = readings + noise
    return Measurement(
        readings=readings,
        pattern_ref=pattern_set.identifier,
        noise_sigma=float(noise_sigma),
        seed=int(seed),
    )


def forward_predict(
    object_estimate: IntensityImage,
    prop: PropagationSpec,
    pattern_set: PatternSet,
) -> np.ndarray:
    """Noiseless readings predicted for an object-plane intensity estimate.

    Chain: amplitude sqrt(O) with zero phase -> angular-spectrum propagation
    -> intensity -> differential pattern integration.  Deterministic.
    """
    amp = np.sqrt(object_estimate.values)
    fld = ComplexField(values=amp.astype(np.complex128), pitch=object_estimate.pitch)
    diffracted = intensity(propagate(fld, prop))
    return pattern_set.modulation_depth * pattern_coefficients(diffracted, pattern_set)


def pattern_total_intensity(pattern_set: PatternSet, i: int) -> float:
    """Sum of the logical mask entries S_i (N for the DC row, else 0)."""
    if not 0 <= i < pattern_set.count:
        raise IndexError(f"pattern index {i} out of range for M={pattern_set.count}")
    return float(pattern_set.logical_masks[i].sum(dtype=np.int64))


def write_measurement_csv(path, meas: Measurement) -> None:
    """CSV with a leading comment recording the acquisition metadata."""
    lines = [
        f"# noise_sigma={meas.noise_sigma!r} seed={meas.seed} "
        f"differential={str(meas.differential).lower()} pattern_ref={meas.pattern_ref}",
        "index,reading",
    ]
    lines.extend(f"{i},{float(v)!r}" for i, v in enumerate(meas.readings))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_measurement_csv(path) -> Measurement:
    from .errors import FormatError

    noise_sigma = 0.0
    seed = 0
    differential = True
    pattern_ref = ""
    readings = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    body = []
    for ln in lines:
        if ln.startswith("#"):
            for token in ln[1:].split():
                if "=" not in token:
                    continue
                key, val = token.split("=", 1)
                if key == "noise_sigma":
                    noise_sigma = float(val)
                elif key == "seed":
                    seed = int(val)
                elif key == "differential":
                    differential = val == "true"
                elif key == "pattern_ref":
                    pattern_ref = val
        elif ln.strip():
            body.append(ln)
    if not body or body[0].strip() != "index,reading":
        raise FormatError(f"measurement CSV missing 'index,reading' header in {path}")
    for row_no, ln in enumerate(body[1:]):
        parts = ln.split(",")
        if len(parts) != 2:
            raise FormatError(f"malformed measurement row {row_no} in {path}: {ln!r}")
        if int(parts[0]) != row_no:
            raise FormatError(f"non-contiguous index at row {row_no} in {path}")
        readings.append(float(parts[1]))
    return Measurement(
        readings=np.array(readings, dtype=np.float64),
        pattern_ref=pattern_ref,
        noise_sigma=noise_sigma,
        seed=seed,
        differential=differential,
    )
