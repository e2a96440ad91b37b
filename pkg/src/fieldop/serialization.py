"""Bit-exact binary formats for datasets and checkpoints, plus metrics output.

Both containers are a fixed magic, a little-endian u32 format version, a
length-prefixed canonical JSON header, and a float64 little-endian
payload whose layout the header declares exactly. Loading and re-saving
a file reproduces it byte for byte. All file writes go through a
write-to-temp-then-rename so partial files are never observed.
"""

import hashlib
import json
import os
from dataclasses import asdict

import numpy as np

from .baselines import CnnConfig, FixedGridCnn, init_fixed_grid_cnn
from .data import BurgersMeta, Dataset, DarcyMeta, NsMeta, Sample
from .errors import ConfigError, ShapeError
from .grids import GridFunction
from .losses import LossSpec
from .model import ModelConfig, NeuralOperatorModel, init_model
from .solvers import BurgersSpec, DarcySpec, GrfSpec, NsSpec

DATASET_MAGIC = b"NODS"
CHECKPOINT_MAGIC = b"NOCK"
FORMAT_VERSION = 1

_SOLVER_TYPES = {"burgers": BurgersSpec, "darcy": DarcySpec, "ns": NsSpec}


def canonical_json_bytes(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def atomic_write_bytes(path, data):
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    tmp = os.path.join(directory, f".{os.path.basename(path)}.tmp{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def sha256_hex(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _pack(magic, header, payload):
    hdr = canonical_json_bytes(header)
    out = bytearray()
    out += magic
    out += np.uint32(FORMAT_VERSION).tobytes()
    out += np.uint32(len(hdr)).tobytes()
    out += hdr
    out += payload
    return bytes(out)


def _unpack(blob, magic, what):
    if blob[:4] != magic:
        raise ConfigError(f"not a {what} file (bad magic {blob[:4]!r})")
    version = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported {what} format version {version}")
    hdr_len = int(np.frombuffer(blob[8:12], dtype="<u4")[0])
    header = json.loads(blob[12:12 + hdr_len].decode("utf-8"))
    return header, blob[12 + hdr_len:]


def _array_bytes(arr):
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


# -- dataset files ------------------------------------------------------------


def _sample_arrays(task, sample: Sample):
    arrays = [("input", sample.input.values), ("output", sample.output.values)]
    if sample.output_hr is not None:
        arrays.append(("output_hr", sample.output_hr.values))
    if task == "darcy" and sample.meta is not None and sample.meta.input_hr is not None:
        arrays.append(("input_hr", sample.meta.input_hr.values))
    return arrays


def _pde_header(task, dataset: Dataset):
    if not dataset.samples:
        return {}
    meta = dataset.samples[0].meta
    if task == "burgers":
        return {"nu": meta.nu, "t_final": meta.t_final}
    if task == "darcy":
        return {"f_const": meta.f_const}
    if task == "ns":
        return {"nu": meta.nu, "forcing_wavenumber": meta.forcing_wavenumber,
                "forcing_amplitude": meta.forcing_amplitude, "t_final": meta.t_final}
    return {}


def _meta_from_header(task, header, arrays):
    pde = header.get("pde", {})
    if task == "burgers":
        return BurgersMeta(nu=pde["nu"], t_final=pde["t_final"])
    if task == "darcy":
        input_hr = arrays.get("input_hr")
        return DarcyMeta(f_const=pde["f_const"],
                         input_hr=GridFunction(input_hr) if input_hr is not None else None)
    if task == "ns":
        return NsMeta(nu=pde["nu"], forcing_wavenumber=pde["forcing_wavenumber"],
                      forcing_amplitude=pde["forcing_amplitude"], t_final=pde["t_final"])
    return None


def save_dataset(dataset: Dataset, path):
    """Serialize a dataset; identical datasets produce identical bytes."""
    if dataset.samples:
        schema = [{"name": name, "shape": list(arr.shape)}
                  for name, arr in _sample_arrays(dataset.task, dataset.samples[0])]
    else:
        schema = []
    header = {
        "task": dataset.task,
        "n_samples": dataset.n_samples,
        "res_in": list(dataset.res_in),
        "res_out": list(dataset.res_out),
        "res_hr": list(dataset.res_hr),
        "seed": dataset.seed,
        "train_idx": list(dataset.train_idx),
        "test_idx": list(dataset.test_idx),
        "grf": asdict(dataset.grf) if dataset.grf is not None else None,
        "solver": asdict(dataset.solver) if dataset.solver is not None else None,
        "pde": _pde_header(dataset.task, dataset),
        "arrays": schema,
    }
    payload = bytearray()
    for sample in dataset.samples:
        arrays = _sample_arrays(dataset.task, sample)
        if [a[0] for a in arrays] != [s["name"] for s in schema]:
            raise ShapeError("samples disagree on their array schema")
        for (_, arr), entry in zip(arrays, schema):
            if list(arr.shape) != entry["shape"]:
                raise ShapeError(f"array {entry['name']} has shape {arr.shape}, "
                                 f"schema says {entry['shape']}")
            payload += _array_bytes(arr)
    atomic_write_bytes(path, _pack(DATASET_MAGIC, header, bytes(payload)))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload = _unpack(blob, DATASET_MAGIC, "dataset")
    schema = header["arrays"]
    per_sample = sum(int(np.prod(s["shape"])) for s in schema) * 8
    expected = per_sample * header["n_samples"]
    if len(payload) != expected:
        raise ShapeError(f"dataset payload is {len(payload)} bytes, "
                         f"header implies {expected}")
    task = header["task"]
    samples = []
    offset = 0
    for _ in range(header["n_samples"]):
        arrays = {}
        for entry in schema:
            count = int(np.prod(entry["shape"]))
            arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
            arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(np.float64)
            offset += count * 8
        out_hr = arrays.get("output_hr")
        samples.append(Sample(
            input=GridFunction(arrays["input"]),
            output=GridFunction(arrays["output"]),
            output_hr=GridFunction(out_hr) if out_hr is not None else None,
            meta=_meta_from_header(task, header, arrays),
        ))
    grf = GrfSpec(**header["grf"]) if header["grf"] is not None else None
    solver = None
    if header["solver"] is not None and task in _SOLVER_TYPES:
        solver = _SOLVER_TYPES[task](**header["solver"])
    return Dataset(task=task, samples=samples,
                   train_idx=list(header["train_idx"]), test_idx=list(header["test_idx"]),
                   res_in=tuple(header["res_in"]), res_out=tuple(header["res_out"]),
                   res_hr=tuple(header["res_hr"]), grf=grf, solver=solver,
                   seed=header["seed"])


# -- checkpoint files ---------------------------------------------------------


def _param_schema(model):
    out = []
    for name, tensor in model.parameters():
        out.append({"name": name, "shape": list(tensor.shape),
                    "complex": bool(tensor.is_complex)})
    return out


def save_checkpoint(model, path, seed=0, step=0, loss_spec: LossSpec = None, extra=None):
    """Serialize a model; load(save(m)) reproduces m bitwise."""
    family = "cnn" if isinstance(model, FixedGridCnn) else "no"
    header = {
        "family": family,
        "model": model.config.to_dict(),
        "input_shift": [float(v) for v in model.input_shift],
        "input_scale": [float(v) for v in model.input_scale],
        "output_scale": [float(v) for v in model.output_scale],
        "seed": int(seed),
        "step": int(step),
        "loss": loss_spec.to_dict() if loss_spec is not None else None,
        "params": _param_schema(model),
        "extra": extra or {},
    }
    if family == "cnn":
        header["trained_at"] = model.trained_at
    payload = bytearray()
    for _, tensor in model.parameters():
        if tensor.is_complex:
            payload += _array_bytes(tensor.data.real)
            payload += _array_bytes(tensor.data.imag)
        else:
            payload += _array_bytes(tensor.data)
    atomic_write_bytes(path, _pack(CHECKPOINT_MAGIC, header, bytes(payload)))


def resave_checkpoint(model, header, path):
    """Re-emit a loaded checkpoint with its original header (byte fixed point)."""
    loss = None
    if header.get("loss") is not None:
        kwargs = dict(header["loss"])
        for key in ("res_data", "res_pde"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        loss = LossSpec(**kwargs)
    save_checkpoint(model, path, seed=header.get("seed", 0), step=header.get("step", 0),
                    loss_spec=loss, extra=header.get("extra") or None)


def load_checkpoint(path):
    """Rebuild the serialized model; returns (model, header)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    header, payload = _unpack(blob, CHECKPOINT_MAGIC, "checkpoint")
    if header["family"] == "cnn":
        model = init_fixed_grid_cnn(CnnConfig(**header["model"]), seed=0)
        model.trained_at = header.get("trained_at")
    else:
        model = init_model(ModelConfig(**header["model"]), seed=0)
    offset = 0
    params = model.parameters()
    if len(params) != len(header["params"]):
        raise ShapeError("checkpoint parameter list does not match the architecture")
    for (name, tensor), entry in zip(params, header["params"]):
        if name != entry["name"] or list(tensor.shape) != entry["shape"]:
            raise ShapeError(f"checkpoint parameter {entry['name']} does not match "
                             f"architecture parameter {name} {tensor.shape}")
        count = int(np.prod(entry["shape"]))
        if entry["complex"]:
            re = np.frombuffer(payload, "<f8", count, offset).reshape(entry["shape"])
            offset += count * 8
            im = np.frombuffer(payload, "<f8", count, offset).reshape(entry["shape"])
            offset += count * 8
            tensor.data = (re + 1j * im).astype(np.complex128)
        else:
            tensor.data = np.frombuffer(payload, "<f8", count, offset) \
                .reshape(entry["shape"]).astype(np.float64)
            offset += count * 8
    if offset != len(payload):
        raise ShapeError(f"checkpoint payload has {len(payload) - offset} trailing bytes")
    model.set_input_normalization(np.asarray(header["input_shift"]),
                                  np.asarray(header["input_scale"]))
    model.set_output_scale(np.asarray(header["output_scale"]))
    return model, header


# -- metrics and plot data ----------------------------------------------------


def write_metrics(path, payload):
    atomic_write_bytes(path, json.dumps(payload, sort_keys=True, indent=2).encode("utf-8")
                       + b"\n")


def write_csv(path, columns, rows):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_csv_cell(v) for v in row))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)
