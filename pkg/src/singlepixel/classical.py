"""Non-learning reconstructors: inverse-Hadamard SPI, differential ghost
imaging, and TV-regularized compressed sensing (monotone FISTA).

All three operate on the pattern grid.  `raw` on the result keeps each
method's native signed output (HSPI coefficients can dip negative under
undersampling); `image` is the nonnegative [0, 1] rendering used for metric
evaluation and file output.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ParameterError
from .field import IntensityImage
from .measurement import Measurement, check_compatible
from .patterns import PatternSet, fwht
from .tvreg import tv_anisotropic, tv_prox


class ReconMethod(enum.Enum):
    HSPI = "hspi"
    DGI = "dgi"
    CSTV = "cstv"
    UNTRAINED = "untrained"


@dataclass(frozen=True)
class ReconResult:
    image: IntensityImage
    method: ReconMethod
    iterations_used: int
    residual_history: tuple
    raw: np.ndarray


def _scatter(pattern_set: PatternSet, weights: np.ndarray) -> np.ndarray:
    full = np.zeros(pattern_set.pixels, dtype=np.float64)
    full[list(pattern_set.selection)] = weights
    return full


def synthesize(pattern_set: PatternSet, weights: np.ndarray) -> np.ndarray:
    """sum_i weights[i] * P_i as an order x order grid (one FWHT)."""
    n = pattern_set.order
    return fwht(_scatter(pattern_set, weights)).reshape(n, n)


def _to_unit_image(raw: np.ndarray, pitch: float) -> IntensityImage:
    """Min-max shift/scale to [0, 1] (native affine calibration is arbitrary)."""
    lo = float(raw.min())
    hi = float(raw.max())
    if hi - lo <= 0.0:
        return IntensityImage(values=np.zeros_like(raw), pitch=pitch)
    return IntensityImage(values=(raw - lo) / (hi - lo), pitch=pitch)


def _clip_unit_image(raw: np.ndarray, pitch: float) -> IntensityImage:
    """Clip negatives and scale to peak 1, preserving a zero-mean background.

    Unlike the min-max rendering this does not lift background noise toward
    mid-gray, so signal-to-background ratios of the rendered image track the
    raw transform.
    """
    clipped = np.maximum(raw, 0.0)
    hi = float(clipped.max())
    if hi <= 0.0:
        return IntensityImage(values=np.zeros_like(raw), pitch=pitch)
    return IntensityImage(values=clipped / hi, pitch=pitch)


def hspi_reconstruct(meas: Measurement, pattern_set: PatternSet, pitch: float = 1.0) -> ReconResult:
    """Partial inverse Hadamard transform O = (1/N) * sum_i I_i * P_i.

    Unmeasured coefficients stay zero (minimum-norm completion); for full
    sampling with zero noise this inverts the forward model up to the global
    modulation-depth factor.
    """
    check_compatible(meas, pattern_set)
    raw = synthesize(pattern_set, meas.readings) / pattern_set.pixels
    return ReconResult(
        image=_clip_unit_image(raw, pitch),
        method=ReconMethod.HSPI,
        iterations_used=0,
        residual_history=(),
        raw=raw,
    )


def dgi_reconstruct(meas: Measurement, pattern_set: PatternSet, pitch: float = 1.0) -> ReconResult:
    """Differential ghost imaging: centered pattern/readout correlation.

    The normalized signal I'_i = I_i - (<I>/<S>) * S_i uses the pattern sums
    S_i; balanced Hadamard rows have S_i = 0, where the correction is skipped
    (|S_i| < 1e-9 * N), and an ensemble without the DC row (<S> ~ 0) skips it
    entirely.  The centered correlation over patterns then reduces to one
    synthesis because the mean-pattern term multiplies a zero-sum weight
    vector.  Output image is min-max shifted to [0, 1]; its native affine
    calibration is arbitrary.
    """
    check_compatible(meas, pattern_set)
    m_count = meas.count
    if m_count < 2:
        raise ParameterError("DGI needs at least 2 measurements")
    n_pixels = pattern_set.pixels
    readings = meas.readings
    sums = np.array(
        [pattern_set.logical_masks[i].sum(dtype=np.int64) for i in range(m_count)],
        dtype=np.float64,
    )
    mean_s = sums.mean()
    if abs(mean_s) < 1e-12 * n_pixels:
        normalized = readings.copy()
    else:
        correction = (readings.mean() / mean_s) * sums
        correction[np.abs(sums) < 1e-9 * n_pixels] = 0.0
        normalized = readings - correction
    weights = (normalized - normalized.mean()) / m_count
    raw = synthesize(pattern_set, weights)
    return ReconResult(
        image=_to_unit_image(raw, pitch),
        method=ReconMethod.DGI,
        iterations_used=0,
        residual_history=(),
        raw=raw,
    )


def cstv_reconstruct(
    meas: Measurement,
    pattern_set: PatternSet,
    tv_weight: float | None = None,
    max_iters: int = 200,
    pitch: float = 1.0,
) -> ReconResult:
    """argmin_O 0.5*||I - A O||^2 + tv_weight * TV(O), O >= 0.

    A is the modulation-scaled pattern-integration operator.  Solved with
    proximal gradient + FISTA acceleration in its monotone variant (a trial
    iterate that raises the objective is rejected, so the recorded objective
    never increases); the TV proximal map uses 10 inner dual iterations and
    the Lipschitz constant comes from 20 power iterations on A^T A.
    """
    check_compatible(meas, pattern_set)
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    if tv_weight is None:
        tv_weight = 1e-3 * float(np.abs(meas.readings).max())
    if tv_weight < 0:
        raise ParameterError("tv_weight must be nonnegative")

    n = pattern_set.order
    depth = pattern_set.modulation_depth
    readings = meas.readings

    def forward(x: np.ndarray) -> np.ndarray:
        return depth * fwht(x.ravel())[list(pattern_set.selection)]

    def adjoint(y: np.ndarray) -> np.ndarray:
        return depth * fwht(_scatter(pattern_set, y)).reshape(n, n)

    rng = np.random.Generator(np.random.PCG64(0x5E11))
    v = rng.standard_normal((n, n))
    v /= np.linalg.norm(v)
    lipschitz = 1.0
    for _ in range(20):
        w = adjoint(forward(v))
        norm = np.linalg.norm(w)
        if norm == 0.0:
            break
        lipschitz = norm
        v = w / norm
    step = 1.0 / lipschitz

    def objective(x: np.ndarray) -> float:
        r = forward(x) - readings
        return 0.5 * float(r @ r) + tv_weight * tv_anisotropic(x)

    x = np.zeros((n, n))
    y = x
    t = 1.0
    f_x = objective(x)
    f_init = max(f_x, 1e-300)
    history = []
    for _ in range(max_iters):
        grad = adjoint(forward(y) - readings)
        z = tv_prox(y - step * grad, tv_weight * step, iterations=10)
        np.maximum(z, 0.0, out=z)
        f_z = objective(z)
        if not np.isfinite(f_z) or f_z > 1e3 * f_init:
            raise NumericalError("CS-TV diverged; step-size failure", stage="fista")
        if f_z <= f_x:
            x_next, f_x = z, f_z
        else:
            x_next = x
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_next + (t / t_next) * (z - x_next) + ((t - 1.0) / t_next) * (x_next - x)
        x, t = x_next, t_next
        history.append(f_x)

    peak = float(x.max())
    image_values = x / peak if peak > 0 else np.zeros_like(x)
    return ReconResult(
        image=IntensityImage(values=image_values, pitch=pitch),
        method=ReconMethod.CSTV,
        iterations_used=max_iters,
        residual_history=tuple(history),
        raw=x,
    )
