"""Line-delimited JSON persistence for simulated datasets.

The first line is a manifest carrying axis/basis fingerprints and the
documented theta component order; record lines hold flat numeric fields.
Floats are serialized with repr round-tripping, so a write/read cycle
reproduces every numeric field exactly.  Loading against a different
axis or basis fails the fingerprint check.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .axis import ComplexSpectrum
from .basis import BasisSet
from .errors import ValidationError
from .signal_model import ModelParams, component_names
from .simulate import SampleRecord

FORMAT_VERSION = 1


def axis_fingerprint(axis) -> str:
    doc = axis.geometry_dict()
    doc["crop"] = [axis.crop_start, axis.crop_stop]
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def _manifest(basis: BasisSet, n_records: int, master_seed, scenario) -> dict:
    return {
        "manifest": True,
        "format_version": FORMAT_VERSION,
        "axis_fingerprint": axis_fingerprint(basis.axis),
        "basis_fingerprint": basis.fingerprint(),
        "theta_order": component_names(basis),
        "crop_length": basis.axis.crop_length,
        "n_records": n_records,
        "master_seed": master_seed,
        "scenario": scenario,
    }


def _record_to_json(rec: SampleRecord) -> dict:
    return {
        "seed": rec.seed,
        "scenario": rec.scenario,
        "theta": rec.theta.to_vector().tolist(),
        "snr_db": rec.snr_db,
        "noise_sigma": rec.noise_sigma,
        "ood": rec.ood,
        "spectrum_real": rec.observed.values.real.tolist(),
        "spectrum_imag": rec.observed.values.imag.tolist(),
        "clean_real": rec.clean.values.real.tolist(),
        "clean_imag": rec.clean.values.imag.tolist(),
    }


def save_dataset(path, records: list[SampleRecord], basis: BasisSet,
                 master_seed=None, scenario=None) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(_manifest(basis, len(records), master_seed, scenario)) + "\n")
        for rec in records:
            fh.write(json.dumps(_record_to_json(rec)) + "\n")


def load_dataset(path, basis: BasisSet) -> list[SampleRecord]:
    """Read records back, rejecting files whose axis/basis fingerprints mismatch."""
    axis = basis.axis
    with open(path) as fh:
        first = fh.readline()
        if not first:
            raise ValidationError(f"{path}: empty dataset file")
        try:
            manifest = json.loads(first)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: malformed manifest line: {exc}") from exc
        if not manifest.get("manifest"):
            raise ValidationError(f"{path}: first line is not a manifest")
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"{path}: unsupported format version {manifest.get('format_version')}")
        if manifest.get("axis_fingerprint") != axis_fingerprint(axis):
            raise ValidationError(f"{path}: axis fingerprint mismatch")
        if manifest.get("basis_fingerprint") != basis.fingerprint():
            raise ValidationError(f"{path}: basis fingerprint mismatch")
        records = []
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            theta = ModelParams.from_vector(np.asarray(doc["theta"]), basis.n_metabolites)
            observed = ComplexSpectrum(
                np.asarray(doc["spectrum_real"]) + 1j * np.asarray(doc["spectrum_imag"]),
                axis, cropped=True)
            clean = ComplexSpectrum(
                np.asarray(doc["clean_real"]) + 1j * np.asarray(doc["clean_imag"]),
                axis, cropped=True)
            records.append(SampleRecord(
                theta=theta, clean=clean, observed=observed,
                snr_db=float(doc["snr_db"]), seed=int(doc["seed"]),
                scenario=doc["scenario"], noise_sigma=float(doc["noise_sigma"]),
                ood=bool(doc.get("ood", False)),
            ))
    if len(records) != manifest["n_records"]:
        raise ValidationError(
            f"{path}: manifest promises {manifest['n_records']} records, found {len(records)}"
        )
    return records
