"""Untrained-generator reconstruction against the physics forward model.

The generator output O_0 is treated as an object-plane intensity; the loss
chains it through sqrt (zero-phase amplitude), angular-spectrum propagation,
|.|^2, and the differential pattern integration, and compares with the
measured readings:

    L(theta) = || I - Ihat(theta) ||^2 + tv_weight * TV(O_0)

The gradient is exact reverse mode.  For the complex stages the cotangent
carried backward is c = dL/d(conj E); the intensity stage gives c_d = g * E_d,
the linear propagation stage maps it through the operator adjoint
(transfer_gradient), and the zero-phase amplitude stage lands back on the
real gradient Re(c_0)/sqrt(O_0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classical import ReconMethod, ReconResult, dgi_reconstruct, _scatter
from .errors import DimensionError, NumericalError, ParameterError
from .field import ComplexField, IntensityImage
from .measurement import Measurement, block_pool, check_compatible
from .network import DEFAULT_PLAN, GeneratorNet
from .patterns import PatternSet, fwht
from .propagation import PropagationSpec, propagate, transfer_gradient
from .tvreg import tv_anisotropic, tv_subgradient

DEFAULT_TV_WEIGHT = 1e-10
DEFAULT_ITERATIONS = 300


@dataclass
class AdamState:
    """Adam accumulators plus the stepped exponential learning-rate decay."""

    m: list
    v: list
    step: int = 0
    base_lr: float = 0.05
    decay_rate: float = 0.9
    decay_steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])

    def learning_rate(self, step: int | None = None) -> float:
        """Effective rate for the given completed-update count (default: now)."""
        t = self.step if step is None else step
        return self.base_lr * self.decay_rate ** (t // self.decay_steps)

    def update(self, params, grads) -> None:
        lr = self.learning_rate()
        self.step += 1
        k = self.step
        c1 = 1.0 - self.beta1**k
        c2 = 1.0 - self.beta2**k
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            p -= lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


def generate(net: GeneratorNet, image: IntensityImage, use_running_stats: bool = False) -> IntensityImage:
    """Deterministic forward pass of the generator on an input image.

    By default BN uses the statistics of this pass (the optimization-mode
    behavior); use_running_stats=True switches to the frozen running
    statistics accumulated during optimization.
    """
    out = net.forward(image.values, batch_stats=not use_running_stats, update_running=False)
    return IntensityImage(values=out, pitch=image.pitch)


def _pool_adjoint(grid: np.ndarray, height: int, width: int) -> np.ndarray:
    order = grid.shape[0]
    b = height // order
    if b == 1:
        return grid
    return np.repeat(np.repeat(grid, b, axis=0), b, axis=1)


def loss_and_gradient(
    net: GeneratorNet,
    input_image: IntensityImage,
    meas: Measurement,
    pattern_set: PatternSet,
    prop: PropagationSpec,
    tv_weight: float = DEFAULT_TV_WEIGHT,
    update_running: bool = True,
):
    """Physics-chain loss and its exact gradient w.r.t. every net parameter."""
    check_compatible(meas, pattern_set)
    if tv_weight < 0:
        raise ParameterError("tv_weight must be nonnegative")
    height, width = input_image.height, input_image.width
    if height % pattern_set.order or width % pattern_set.order:
        raise DimensionError("input grid must be an integer replication of the pattern order")

    output, cache = net.forward(
        input_image.values, batch_stats=True, update_running=update_running, want_cache=True
    )
    if not np.all(np.isfinite(output)):
        raise NumericalError("non-finite generator output", stage="generate")

    amp = np.sqrt(output)
    field_0 = ComplexField(values=amp.astype(np.complex128), pitch=input_image.pitch)
    field_d = propagate(field_0, prop)
    diffracted = field_d.values.real**2 + field_d.values.imag**2

    depth = pattern_set.modulation_depth
    coeffs = fwht(block_pool(diffracted, pattern_set.order).ravel())
    predicted = depth * coeffs[list(pattern_set.selection)]
    residual = predicted - meas.readings
    data_loss = float(residual @ residual)
    loss = data_loss + tv_weight * tv_anisotropic(output)
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss", stage="loss")

    # Reverse pass.  Pattern integration is linear: its adjoint scatters the
    # residual back through the FWHT and replicates over pooled blocks.
    g_pred = 2.0 * residual
    g_pooled = depth * fwht(_scatter(pattern_set, g_pred)).reshape(
        pattern_set.order, pattern_set.order
    )
    g_diffracted = _pool_adjoint(g_pooled, height, width)

    cotangent_d = ComplexField(values=g_diffracted * field_d.values, pitch=input_image.pitch)
    cotangent_0 = transfer_gradient(cotangent_d, prop)

    # d|E|^2 through E = sqrt(O): dL/dO = Re(c_0)/sqrt(O).  The sigmoid keeps
    # O strictly positive; the floor only guards float underflow.
    g_output = cotangent_0.values.real / np.maximum(amp, 1e-200)
    if tv_weight > 0:
        g_output = g_output + tv_weight * tv_subgradient(output)

    grads = net.backward(g_output, cache)
    if not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericalError("non-finite gradient", stage="gradient")
    return loss, grads


def prepare_prior_input(meas: Measurement, pattern_set: PatternSet, pitch: float) -> IntensityImage:
    """DGI estimate of the diffracted image, normalized to [0, 1]."""
    return dgi_reconstruct(meas, pattern_set, pitch=pitch).image


def reconstruct_untrained(
    meas: Measurement,
    pattern_set: PatternSet,
    prop: PropagationSpec,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    *,
    pitch: float = 1.0,
    tv_weight: float = DEFAULT_TV_WEIGHT,
    plan=DEFAULT_PLAN,
    net: GeneratorNet | None = None,
) -> ReconResult:
    """Adam-optimize a freshly seeded generator against the measurements.

    The fixed network input is the DGI estimate of the diffracted image; the
    returned image is the generator output after the final update, and
    residual_history records the loss seen at every iteration.
    """
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    input_image = prepare_prior_input(meas, pattern_set, pitch)
    if net is None:
        net = GeneratorNet(plan=plan, seed=seed)
    adam = AdamState.for_params(net.params)
    history = []
    for it in range(iterations):
        try:
            loss, grads = loss_and_gradient(net, input_image, meas, pattern_set, prop, tv_weight)
        except NumericalError as err:
            raise NumericalError(str(err), stage=err.stage, iteration=it) from err
        adam.update(net.params, grads)
        history.append(loss)
    final = generate(net, input_image)
    return ReconResult(
        image=final,
        method=ReconMethod.UNTRAINED,
        iterations_used=iterations,
        residual_history=tuple(history),
        raw=final.values,
    )


def backprop_refocus_sweep(
    meas: Measurement,
    pattern_set: PatternSet,
    prop_base: PropagationSpec,
    distances,
    iterations: int = DEFAULT_ITERATIONS,
    seed: int = 0,
    *,
    pitch: float = 1.0,
    tv_weight: float = DEFAULT_TV_WEIGHT,
    plan=DEFAULT_PLAN,
) -> list[ReconResult]:
    """One untrained reconstruction per modeled distance, sharing the seed
    and pattern set, for focal-sweep analysis."""
    distances = list(distances)
    if not distances:
        raise ParameterError("distances must be non-empty")
    return [
        reconstruct_untrained(
            meas,
            pattern_set,
            prop_base.with_distance(d),
            iterations=iterations,
            seed=seed,
            pitch=pitch,
            tv_weight=tv_weight,
            plan=plan,
        )
        for d in distances
    ]
