"""Command-line harness: scene simulation, reconstruction, benchmarking,
metric evaluation, and pattern-file generation.

Exit codes: 0 success, 2 usage error, 3 input-format/consistency error,
4 numerical failure.  Benchmark cells run in parallel; SPI_THREADS caps the
worker count.  All file writes are atomic (temp file + rename).
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .classical import cstv_reconstruct, dgi_reconstruct, hspi_reconstruct
from .errors import ConsistencyError, NumericalError, SinglePixelError
from .field import ComplexField, IntensityImage, intensity, normalize
from .measurement import (
    Measurement,
    block_pool,
    measure,
    read_measurement_csv,
    write_measurement_csv,
)
from .metrics import DEFAULT_SSIM, snr, ssim
from .patterns import (
    PatternSet,
    load_patterns,
    save_patterns,
    walsh_hadamard_patterns,
)
from .pgm import read_pgm, write_pgm
from .prior import backprop_refocus_sweep, reconstruct_untrained
from .propagation import PropagationSpec, propagate
from .scenes import SceneSpec, build_scene, load_scene, parse_length

METHODS = ("hspi", "dgi", "cstv", "untrained")


def _atomic_write(path, writer) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_csv(path, lines) -> None:
    text = "\n".join(lines) + "\n"

    def writer(tmp):
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    _atomic_write(path, writer)


def diffract_scene(spec: SceneSpec):
    """Object mask and its propagated intensity at the recording plane."""
    obj = build_scene(spec)
    fld = ComplexField(values=np.sqrt(obj.values).astype(np.complex128), pitch=spec.pitch)
    prop = PropagationSpec(wavelength=spec.wavelength, distance=spec.distance)
    diffracted = intensity(propagate(fld, prop))
    return obj, diffracted


def full_sample_reference(diffracted: IntensityImage, order: int) -> IntensityImage:
    """Normalized full-sampling HSPI reference of a noiseless measurement.

    Full-sampling HSPI of a noiseless measurement returns the block-pooled
    diffraction image up to the modulation-depth factor, so the reference is
    computed directly instead of materializing all N patterns.
    """
    pooled = block_pool(diffracted.values, order)
    pitch = diffracted.pitch * (diffracted.height // order)
    return normalize(IntensityImage(values=pooled, pitch=pitch))


def run_simulate(spec: SceneSpec, pattern_set: PatternSet, out_dir):
    """Object -> field -> propagate -> intensity -> measure; writes files."""
    os.makedirs(out_dir, exist_ok=True)
    obj, diffracted = diffract_scene(spec)
    meas = measure(diffracted, pattern_set, noise_sigma=spec.noise_sigma, seed=spec.seed)

    peak = float(diffracted.values.max())
    scaled = diffracted.with_values(diffracted.values / peak) if peak > 0 else diffracted
    _atomic_write(
        os.path.join(out_dir, "object.pgm"), lambda p: write_pgm(p, obj, {"scale": "1"})
    )
    _atomic_write(
        os.path.join(out_dir, "diffracted.pgm"),
        lambda p: write_pgm(p, scaled, {"scale": repr(peak)}),
    )
    _atomic_write(
        os.path.join(out_dir, "measurement.csv"), lambda p: write_measurement_csv(p, meas)
    )
    return diffracted, meas


def _truncate(meas: Measurement, pattern_set: PatternSet, cr: float | None):
    if cr is None:
        return meas, pattern_set
    count = int(round(cr * pattern_set.pixels))
    if not 1 <= count <= min(meas.count, pattern_set.count):
        raise ConsistencyError(
            f"cr={cr} needs {count} patterns; have {pattern_set.count} patterns "
            f"and {meas.count} readings"
        )
    truncated = Measurement(
        readings=meas.readings[:count],
        pattern_ref=meas.pattern_ref,
        noise_sigma=meas.noise_sigma,
        seed=meas.seed,
        differential=meas.differential,
    )
    return truncated, pattern_set.subset(count)


def run_reconstruct(
    meas_path,
    patterns_path,
    method: str,
    scene: SceneSpec,
    out_dir,
    cr: float | None = None,
    iterations: int | None = None,
    seed: int = 0,
    backprop_distance: float | None = None,
    tv_weight: float | None = None,
    reference_path=None,
    snr_mask_path=None,
):
    """Dispatch one reconstruction and write image + metrics files."""
    os.makedirs(out_dir, exist_ok=True)
    meas = read_measurement_csv(meas_path)
    pattern_set = load_patterns(patterns_path, modulation_depth=scene.modulation_depth)
    if meas.pattern_ref and meas.pattern_ref != pattern_set.identifier:
        raise ConsistencyError(
            f"measurement was taken with {meas.pattern_ref}, "
            f"pattern file is {pattern_set.identifier}"
        )
    if meas.count != pattern_set.count and cr is None:
        raise ConsistencyError(
            f"{meas.count} readings vs {pattern_set.count} patterns; pass --cr to subset"
        )
    meas, pattern_set = _truncate(meas, pattern_set, cr)
    pitch = scene.fov / pattern_set.order

    if method == "hspi":
        result = hspi_reconstruct(meas, pattern_set, pitch=pitch)
    elif method == "dgi":
        result = dgi_reconstruct(meas, pattern_set, pitch=pitch)
    elif method == "cstv":
        result = cstv_reconstruct(
            meas, pattern_set, tv_weight=tv_weight, max_iters=iterations or 200, pitch=pitch
        )
    elif method == "untrained":
        distance = scene.distance if backprop_distance is None else backprop_distance
        prop = PropagationSpec(wavelength=scene.wavelength, distance=distance)
        kwargs = {} if tv_weight is None else {"tv_weight": tv_weight}
        result = reconstruct_untrained(
            meas, pattern_set, prop, iterations=iterations or 300, seed=seed,
            pitch=pitch, **kwargs,
        )
    else:
        raise SinglePixelError(f"unknown method {method!r}")

    _atomic_write(
        os.path.join(out_dir, f"recon_{method}.pgm"),
        lambda p: write_pgm(p, result.image, {"method": method}),
    )

    rows = ["metric,value", f"method,{method}", f"iterations,{result.iterations_used}"]
    degenerate = float(result.image.values.max()) == float(result.image.values.min())
    if reference_path is not None:
        reference, _ = read_pgm(reference_path, pitch=pitch)
        if degenerate:
            rows.append("ssim,degenerate")
        else:
            rows.append(f"ssim,{ssim(result.image, reference, DEFAULT_SSIM)!r}")
    if snr_mask_path is not None:
        mask_img, _ = read_pgm(snr_mask_path, pitch=pitch)
        value = snr(result.image, mask_img.values >= 0.5)
        rows.append("snr," + ("inf" if value.infinite else repr(value.value)))
    _write_csv(os.path.join(out_dir, "metrics.csv"), rows)

    if result.residual_history:
        loss_rows = ["iteration,loss"]
        loss_rows.extend(f"{i},{v!r}" for i, v in enumerate(result.residual_history))
        _write_csv(os.path.join(out_dir, "loss_history.csv"), loss_rows)
    return result


def _benchmark_cell(args):
    (spec, diffracted, obj_mask, reference, order, cr, method, noise_sigma, repeat,
     iterations, base_seed) = args
    count = max(1, int(round(cr * order * order)))
    pattern_set = walsh_hadamard_patterns(order, count, modulation_depth=spec.modulation_depth)
    cell_seed = int(
        np.random.SeedSequence((base_seed, int(round(cr * 1e6)), hash(method) & 0xFFFF,
                                int(noise_sigma * 1e9) & 0xFFFFFF, repeat)).generate_state(1)[0]
    )
    meas = measure(diffracted, pattern_set, noise_sigma=noise_sigma, seed=cell_seed)
    pitch = spec.fov / order
    if method == "hspi":
        result = hspi_reconstruct(meas, pattern_set, pitch=pitch)
    elif method == "dgi":
        result = dgi_reconstruct(meas, pattern_set, pitch=pitch)
    elif method == "cstv":
        result = cstv_reconstruct(meas, pattern_set, pitch=pitch)
    else:
        prop = PropagationSpec(wavelength=spec.wavelength, distance=spec.distance)
        result = reconstruct_untrained(
            meas, pattern_set, prop, iterations=iterations, seed=cell_seed, pitch=pitch
        )
    ssim_val = ssim(result.image, reference, DEFAULT_SSIM)
    snr_val = snr(result.image, obj_mask).value
    return ssim_val, snr_val


def run_benchmark(
    spec: SceneSpec,
    cr_list,
    methods,
    noise_levels,
    repeats: int,
    out_path,
    iterations: int = 300,
):
    """Grid of (cr x method x noise x repeat) runs; per-cell SSIM/SNR stats."""
    if repeats < 1:
        raise SinglePixelError("repeats must be >= 1")
    for cr in cr_list:
        if not 0 < cr <= 1:
            raise SinglePixelError(f"compression ratio {cr} outside (0, 1]")
    for method in methods:
        if method not in METHODS:
            raise SinglePixelError(f"unknown method {method!r}")
    _, diffracted = diffract_scene(spec)
    order = spec.grid
    reference = full_sample_reference(diffracted, order)
    obj_mask = build_scene(spec).values >= 0.5

    cells = [
        (cr, method, noise_sigma)
        for cr in cr_list
        for method in methods
        for noise_sigma in noise_levels
    ]
    jobs = []
    for cr, method, noise_sigma in cells:
        for repeat in range(repeats):
            jobs.append(
                (spec, diffracted, obj_mask, reference, order, cr, method,
                 noise_sigma, repeat, iterations, spec.seed)
            )
    max_workers = int(os.environ.get("SPI_THREADS", "0")) or (os.cpu_count() or 1)
    max_workers = max(1, min(max_workers, len(jobs)))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            outcomes = list(pool.map(_benchmark_cell, jobs))
    else:
        outcomes = [_benchmark_cell(job) for job in jobs]

    rows = ["cr,method,noise_sigma,repeats,ssim_mean,ssim_std,snr_mean,snr_std"]
    idx = 0
    for cr, method, noise_sigma in cells:
        vals = outcomes[idx : idx + repeats]
        idx += repeats
        ssims = np.array([v[0] for v in vals])
        snrs = np.array([v[1] for v in vals])
        rows.append(
            f"{cr!r},{method},{noise_sigma!r},{repeats},"
            f"{ssims.mean()!r},{ssims.std()!r},{snrs.mean()!r},{snrs.std()!r}"
        )
    _write_csv(out_path, rows)
    return rows


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="singlepixel",
        description="Single-pixel diffraction imaging: simulate, reconstruct, benchmark.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="scene -> diffraction image + measurement CSV")
    sim.add_argument("--scene", required=True)
    sim.add_argument("--patterns", required=True)
    sim.add_argument("--noise-sigma", type=float, default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--out-dir", required=True)

    rec = sub.add_parser("reconstruct", help="measurement CSV -> reconstructed image")
    rec.add_argument("--measurement", required=True)
    rec.add_argument("--patterns", required=True)
    rec.add_argument("--scene", required=True)
    rec.add_argument("--method", required=True, choices=METHODS)
    rec.add_argument("--cr", type=float, default=None)
    rec.add_argument("--iterations", type=int, default=None)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--backprop-distance", type=parse_length, default=None)
    rec.add_argument("--tv-weight", type=float, default=None)
    rec.add_argument("--reference", default=None)
    rec.add_argument("--snr-mask", default=None)
    rec.add_argument("--out-dir", required=True)

    ben = sub.add_parser("benchmark", help="CR/method/noise grid -> summary CSV")
    ben.add_argument("--scene", required=True)
    ben.add_argument("--cr", required=True, help="comma-separated compression ratios")
    ben.add_argument("--methods", default="hspi,untrained")
    ben.add_argument("--noise-sigma", default="0")
    ben.add_argument("--repeats", type=int, default=1)
    ben.add_argument("--iterations", type=int, default=300)
    ben.add_argument("--out-dir", required=True)

    met = sub.add_parser("metrics", help="SSIM/SNR between image files")
    met.add_argument("--image", required=True)
    met.add_argument("--reference", default=None)
    met.add_argument("--snr-mask", default=None)
    met.add_argument("--out", default=None)

    pat = sub.add_parser("patterns", help="generate a Walsh-Hadamard pattern file")
    pat.add_argument("--order", type=int, required=True)
    group = pat.add_mutually_exclusive_group(required=True)
    group.add_argument("--count", type=int)
    group.add_argument("--cr", type=float)
    pat.add_argument("--ordering", choices=("natural", "sequency"), default="sequency")
    pat.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "simulate":
            spec = load_scene(args.scene)
            if args.noise_sigma is not None:
                spec = SceneSpec(**{**spec.__dict__, "noise_sigma": args.noise_sigma})
            if args.seed is not None:
                spec = SceneSpec(**{**spec.__dict__, "seed": args.seed})
            pattern_set = load_patterns(args.patterns, modulation_depth=spec.modulation_depth)
            run_simulate(spec, pattern_set, args.out_dir)
        elif args.command == "reconstruct":
            scene = load_scene(args.scene)
            run_reconstruct(
                args.measurement,
                args.patterns,
                args.method,
                scene,
                args.out_dir,
                cr=args.cr,
                iterations=args.iterations,
                seed=args.seed,
                backprop_distance=args.backprop_distance,
                tv_weight=args.tv_weight,
                reference_path=args.reference,
                snr_mask_path=args.snr_mask,
            )
        elif args.command == "benchmark":
            spec = load_scene(args.scene)
            os.makedirs(args.out_dir, exist_ok=True)
            run_benchmark(
                spec,
                [float(x) for x in args.cr.split(",")],
                args.methods.split(","),
                [float(x) for x in args.noise_sigma.split(",")],
                args.repeats,
                os.path.join(args.out_dir, "benchmark.csv"),
                iterations=args.iterations,
            )
        elif args.command == "metrics":
            image, _ = read_pgm(args.image)
            rows = ["metric,value"]
            if args.reference is not None:
                reference, _ = read_pgm(args.reference)
                rows.append(f"ssim,{ssim(image, reference, DEFAULT_SSIM)!r}")
            if args.snr_mask is not None:
                mask_img, _ = read_pgm(args.snr_mask)
                value = snr(image, mask_img.values >= 0.5)
                rows.append("snr," + ("inf" if value.infinite else repr(value.value)))
            if args.out:
                _write_csv(args.out, rows)
            else:
                print("\n".join(rows))
        elif args.command == "patterns":
            count = args.count
            if count is None:
                count = max(1, int(round(args.cr * args.order * args.order)))
            pattern_set = walsh_hadamard_patterns(args.order, count, ordering=args.ordering)
            _atomic_write(args.out, lambda p: save_patterns(p, pattern_set))
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return 4
    except SinglePixelError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
