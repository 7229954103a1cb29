"""On-disk formats for compressors, re-expanders, models, and reports.

Every artifact is a pair of files sharing a stem: a small JSON manifest
(sorted keys, so identical objects serialize identically) and a raw binary
blob of little-endian floats in row-major order.  Matrices round-trip
bit-exactly; manifests carry enough shape information to validate the blob
length before any reshaping.

Evaluation reports are plain JSON validated against the packaged schema,
and configs hash to a stable SHA-256 over their canonical JSON form.
"""

import hashlib
import json
from dataclasses import asdict
from importlib import resources

import jsonschema
import numpy as np

from .errors import DataFormatError
from .gib_compressor import Compressor, CompressorKind
from .inference_net import MlpModel, TrainConfig
from .reexpander import FitMethod, Reexpander

F64 = np.dtype("<f8")
F32 = np.dtype("<f4")


def _write_pair(stem, manifest, blob):
    with open(str(stem) + ".json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(str(stem) + ".bin", "wb") as fh:
        fh.write(blob)


def _read_pair(stem):
    try:
        with open(str(stem) + ".json") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError("%s.json is not valid JSON: %s" % (stem, exc))
    with open(str(stem) + ".bin", "rb") as fh:
        blob = fh.read()
    return manifest, blob


def _expect(manifest, stem, fmt):
    if manifest.get("format") != fmt:
        raise DataFormatError("%s.json declares format %r, expected %r"
                              % (stem, manifest.get("format"), fmt))


def _check_blob(stem, blob, n_values, dtype):
    expected = n_values * dtype.itemsize
    if len(blob) != expected:
        raise DataFormatError("%s.bin holds %d bytes, expected %d"
                              % (stem, len(blob), expected))


def save_compressor(comp, stem):
    manifest = {
        "format": "compressor-v1",
        "kind": comp.kind.value,
        "n_x": comp.n_x,
        "n_z": comp.n_z,
        "beta": comp.beta,
        "noise_std": comp.noise_std,
        "dtype": F64.str,
    }
    blob = np.ascontiguousarray(comp.matrix_a, dtype=F64).tobytes()
    _write_pair(stem, manifest, blob)


def load_compressor(stem):
    manifest, blob = _read_pair(stem)
    _expect(manifest, stem, "compressor-v1")
    n_z, n_x = manifest["n_z"], manifest["n_x"]
    _check_blob(stem, blob, n_z * n_x, F64)
    matrix = np.frombuffer(blob, dtype=F64).reshape(n_z, n_x)
    return Compressor(kind=CompressorKind(manifest["kind"]),
                      matrix_a=matrix.astype(np.float64),
                      n_z=n_z,
                      beta=manifest["beta"],
                      noise_std=manifest["noise_std"])


def save_reexpander(rx, stem):
    manifest = {
        "format": "reexpander-v1",
        "fit_method": rx.fit_method.value,
        "n_y": rx.n_y,
        "n_z": rx.n_z,
        "dtype": F64.str,
    }
    blob = (np.ascontiguousarray(rx.theta, dtype=F64).tobytes()
            + np.ascontiguousarray(rx.target_mean, dtype=F64).tobytes())
    _write_pair(stem, manifest, blob)


def load_reexpander(stem):
    manifest, blob = _read_pair(stem)
    _expect(manifest, stem, "reexpander-v1")
    n_y, n_z = manifest["n_y"], manifest["n_z"]
    _check_blob(stem, blob, n_y * n_z + n_y, F64)
    theta = np.frombuffer(blob, dtype=F64, count=n_y * n_z).reshape(n_y, n_z)
    mean = np.frombuffer(blob, dtype=F64, offset=theta.nbytes)
    return Reexpander(theta=theta.astype(np.float64),
                      fit_method=FitMethod(manifest["fit_method"]),
                      target_mean=mean.astype(np.float64))


def save_model(model, stem, train_config=None, seed=None):
    manifest = {
        "format": "mlp-v1",
        "layer_sizes": model.layer_sizes,
        "activation": "relu",
        "dtype": F32.str,
        "seed": seed,
        "train_config": asdict(train_config) if train_config else None,
    }
    parts = []
    for w, b in model.layers:
        parts.append(np.ascontiguousarray(w, dtype=F32).tobytes())
        parts.append(np.ascontiguousarray(b, dtype=F32).tobytes())
    _write_pair(stem, manifest, b"".join(parts))


def load_model(stem):
    manifest, blob = _read_pair(stem)
    _expect(manifest, stem, "mlp-v1")
    sizes = manifest["layer_sizes"]
    n_values = sum(fi * fo + fo for fi, fo in zip(sizes[:-1], sizes[1:]))
    _check_blob(stem, blob, n_values, F32)
    layers = []
    offset = 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(blob, dtype=F32, count=fan_out * fan_in,
                          offset=offset).reshape(fan_out, fan_in)
        offset += w.nbytes
        b = np.frombuffer(blob, dtype=F32, count=fan_out, offset=offset)
        offset += b.nbytes
        layers.append((w.astype(np.float32), b.astype(np.float32)))
    return MlpModel(layers)


def train_config_from_dict(data):
    return TrainConfig(**data)


def config_hash(config_dict):
    """Stable SHA-256 of a config's canonical JSON form."""
    canonical = json.dumps(config_dict, sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def report_schema():
    with resources.files("oib").joinpath("report_schema.json").open() as fh:
        return json.load(fh)


def validate_report(report):
    """Check an evaluation report against the packaged schema."""
    try:
        jsonschema.validate(report, report_schema())
    except jsonschema.ValidationError as exc:
        raise DataFormatError("report failed schema validation: %s"
                              % exc.message)
