"""Sub-diffraction single-pixel compressive imaging toolkit.

Simulates coherent diffraction with the angular-spectrum method, encodes
diffraction images with differential Walsh-Hadamard patterns into
single-element detector readouts, and reconstructs objects classically
(inverse Hadamard, differential ghost imaging, TV-regularized compressed
sensing) or with a physics-constrained untrained convolutional generator.
"""

from .classical import (
    ReconMethod,
    ReconResult,
    cstv_reconstruct,
    dgi_reconstruct,
    hspi_reconstruct,
)
from .errors import (
    ConsistencyError,
    DegenerateInputError,
    DimensionError,
    FormatError,
    InvalidFieldError,
    NumericalError,
    ParameterError,
    SinglePixelError,
)
from .field import (
    ComplexField,
    IntensityImage,
    field_from_amplitude,
    intensity,
    normalize,
    total_power,
)
from .measurement import (
    Measurement,
    forward_predict,
    measure,
    pattern_total_intensity,
    read_measurement_csv,
    write_measurement_csv,
)
from .metrics import (
    SnrValue,
    SsimParams,
    count_resolved_slits,
    dip_contrast,
    line_profile,
    snr,
    ssim,
)
from .network import GeneratorNet, load_checkpoint, save_checkpoint
from .patterns import (
    DrudeParams,
    PatternSet,
    apply_mask,
    drude_permittivity,
    fwht,
    load_patterns,
    positive_negative_split,
    save_patterns,
    walsh_hadamard_patterns,
)
from .pgm import read_pgm, write_pgm
from .prior import (
    AdamState,
    backprop_refocus_sweep,
    generate,
    loss_and_gradient,
    reconstruct_untrained,
)
from .propagation import PropagationSpec, propagate, split_components, transfer_gradient
from .scenes import SceneSpec, build_scene, load_scene, parse_scene, star_mask

__version__ = "0.1.0"
