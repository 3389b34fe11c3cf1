#!/usr/bin/env python3
"""Regenerate the bundled default basis description.

Peak positions follow common literature shift values for the in-crop
resonances of each metabolite; per-peak amplitudes are proton-count
approximations times a global scale chosen so that simulated SNR over the
default priors lands in the 0-40 dB band.  Run with --calibrate to
re-derive the scale from a fresh Monte-Carlo draw.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

# (name, is_mm, [(ppm, proton_weight), ...])
PEAK_TABLE = [
    ("Ala", False, [(1.467, 3.0), (3.775, 1.0)]),
    ("Asc", False, [(3.73, 2.0), (4.01, 1.0)]),
    ("Asp", False, [(2.65, 1.0), (2.80, 1.0), (3.89, 1.0)]),
    ("Cr", False, [(3.027, 3.0), (3.913, 2.0)]),
    ("GABA", False, [(1.889, 2.0), (2.284, 2.0), (3.012, 2.0)]),
    ("Gln", False, [(2.135, 2.0), (2.444, 2.0), (3.757, 1.0)]),
    ("Glu", False, [(2.042, 2.0), (2.336, 2.0), (3.746, 1.0)]),
    ("Gly", False, [(3.548, 2.0)]),
    ("GPC", False, [(3.212, 9.0), (3.659, 2.0)]),
    ("GSH", False, [(2.15, 2.0), (2.55, 2.0), (2.95, 2.0), (3.77, 1.0)]),
    ("mIns", False, [(3.27, 1.0), (3.52, 2.0), (3.61, 2.0), (4.05, 1.0)]),
    ("Lac", False, [(1.313, 3.0), (4.099, 1.0)]),
    ("NAAG", False, [(2.042, 3.0), (2.18, 2.0)]),
    ("NAA", False, [(2.008, 3.0), (2.49, 1.0), (2.67, 1.0)]),
    ("PCh", False, [(3.208, 9.0), (3.58, 2.0)]),
    ("PCr", False, [(3.029, 3.0), (3.93, 2.0)]),
    ("PE", False, [(3.216, 2.0), (3.98, 2.0)]),
    ("Scyllo", False, [(3.34, 6.0)]),
    ("Ser", False, [(3.834, 1.0), (3.96, 2.0)]),
    ("Tau", False, [(3.246, 2.0), (3.42, 2.0)]),
    ("MM", True, [(0.91, 3.0), (1.21, 2.0), (1.43, 2.0), (1.72, 2.0),
                  (2.05, 2.0), (2.29, 1.0), (3.00, 1.0)]),
]

MM_DAMPING_PER_S = 40.0


def build_doc(scale: float, mm_scale: float) -> dict:
    metabolites = []
    for name, is_mm, peaks in PEAK_TABLE:
        factor = mm_scale if is_mm else scale
        damping = MM_DAMPING_PER_S if is_mm else 0.0
        metabolites.append({
            "name": name,
            "is_mm": is_mm,
            "peaks": [
                {"ppm": ppm, "amplitude": round(weight * factor, 6),
                 "intrinsic_gauss_per_s": damping}
                for ppm, weight in peaks
            ],
        })
    return {
        "axis": {"n_points": 1024, "bandwidth_hz": 3000.0, "field_mhz": 298.03,
                 "center_ppm": 4.65},
        "metabolites": metabolites,
    }


def calibrate(doc: dict, n_draws: int = 4000, seed: int = 7) -> None:
    import numpy as np

    from mrsfit.axis import build_axis
    from mrsfit.basis import _metabolites_from_json, synthesize_basis
    from mrsfit.priors import Scenario, default_priors
    from mrsfit.signal_model import compute_snr, metabolite_spectrum
    from mrsfit.simulate import sample_params

    axis = build_axis()
    basis = synthesize_basis(_metabolites_from_json(doc["metabolites"]), axis)
    priors = default_priors(basis.names)
    scenario = Scenario("cal", "full_range")
    rng = np.random.default_rng(seed)
    snrs = []
    for _ in range(n_draws):
        theta, noise = sample_params(priors, scenario, rng)
        snrs.append(compute_snr(metabolite_spectrum(theta, basis), noise.sigma))
    snrs = np.array(snrs)
    print(f"SNR: min {snrs.min():.2f}  p1 {np.percentile(snrs, 1):.2f}  "
          f"median {np.median(snrs):.2f}  p99 {np.percentile(snrs, 99):.2f}  "
          f"max {snrs.max():.2f} dB")
    inside = np.mean((snrs >= 0) & (snrs <= 40))
    print(f"mass in [0, 40] dB: {100 * inside:.2f}%   max allowed 60 dB: "
          f"{'OK' if snrs.max() < 60 else 'VIOLATED'}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scale", type=float, default=8.0)
    ap.add_argument("--mm-scale", type=float, default=0.32)
    ap.add_argument("--calibrate", action="store_true")
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..",
                                                  "src", "mrsfit", "data",
                                                  "default_basis.json"))
    args = ap.parse_args()
    doc = build_doc(args.scale, args.mm_scale)
    if args.calibrate:
        calibrate(doc)
    else:
        with open(args.out, "w") as fh:
            json.dump(doc, fh, indent=1)
        print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
