import numpy as np
import pytest

from singlepixel.field import ComplexField, IntensityImage


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(rng, n=16, pitch=1e-4):
    values = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return ComplexField(values=values, pitch=pitch)


def random_image(rng, n=16, pitch=1e-4):
    return IntensityImage(values=rng.random((n, n)), pitch=pitch)


def band_limited_field(rng, n, pitch, wavelength):
    """Random field whose spectrum vanishes outside the propagating band."""
    spectrum = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    f = np.fft.fftfreq(n, pitch)
    rho_sq = (wavelength**2) * (f[:, None] ** 2 + f[None, :] ** 2)
    spectrum[rho_sq > 1.0] = 0.0
    return ComplexField(values=np.fft.ifft2(spectrum), pitch=pitch)
