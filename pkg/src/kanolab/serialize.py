"""Versioned binary containers for datasets, trajectory records, and model
checkpoints: a little-endian u32 header length, a UTF-8 JSON header, then raw
array payloads in the order the header lists them.

Wave functions are downcast to complex64 and PMFs to float32 at the file
boundary; everything else is little-endian float64 (complex128 stored as
interleaved float64 pairs).
"""
from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .datagen import Dataset
from .errors import UserError
from .kan import PolyEdge, SplineEdge
from .kano import ActivationNet, KanoLayer, KanoNet, QkanoModel, SymbolNet
from .fno import FnoNet
from .quantumsim import TrajectoryRecord
from .spectral import PeriodicGrid

FORMAT_VERSION = 1

_DTYPES = {"f8": "<f8", "c16": "<c16", "c8": "<c8", "f4": "<f4"}


def _write(path, header: dict, arrays):
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for arr in arrays:
            fh.write(np.ascontiguousarray(arr).tobytes())


def _read(path):
    with open(path, "rb") as fh:
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        payload = fh.read()
    arrays = []
    offset = 0
    for spec in header["arrays"]:
        dtype = np.dtype(_DTYPES[spec["dtype"]])
        count = int(np.prod(spec["shape"])) if spec["shape"] else 1
        nbytes = count * dtype.itemsize
        arr = np.frombuffer(payload[offset : offset + nbytes], dtype=dtype)
        arrays.append(arr.reshape(spec["shape"]))
        offset += nbytes
    return header, arrays


# -- datasets --------------------------------------------------------------------

def save_dataset(ds: Dataset, path) -> str:
    digest = ds.digest()
    header = {
        "format": "kanolab-dataset", "version": FORMAT_VERSION,
        "grid": {"n": ds.grid.n, "length": ds.grid.length},
        "operator": ds.operator, "group": ds.group, "seed": ds.seed,
        "count": ds.count, "families": ds.families, "digest": digest,
        "arrays": [{"name": "inputs", "shape": list(ds.inputs.shape), "dtype": "f8"},
                   {"name": "targets", "shape": list(ds.targets.shape), "dtype": "f8"}],
    }
    _write(path, header, [ds.inputs, ds.targets])
    return digest


def load_dataset(path) -> Dataset:
    header, arrays = _read(path)
    if header.get("format") != "kanolab-dataset":
        raise UserError(f"{path} is not a dataset file")
    grid = PeriodicGrid(header["grid"]["n"], header["grid"]["length"])
    ds = Dataset(grid, header["operator"], header["group"], header["seed"],
                 np.array(arrays[0]), np.array(arrays[1]), list(header["families"]))
    if ds.digest() != header["digest"]:
        raise UserError(f"{path}: digest mismatch, file is corrupt")
    return ds


def dataset_to_csv(ds: Dataset, path):
    """Inspection export: one row per sample and kind (input/target)."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "family", "kind"] + [f"x{j}" for j in range(ds.grid.n)])
        for i in range(ds.count):
            writer.writerow([i, ds.families[i], "input"] + [repr(v) for v in ds.inputs[i]])
            writer.writerow([i, ds.families[i], "target"] + [repr(v) for v in ds.targets[i]])


# -- trajectories -----------------------------------------------------------------

def save_trajectories(records, path) -> str:
    first = records[0]
    arrays, specs = [], []
    sha = hashlib.sha256()
    for i, rec in enumerate(records):
        wave = rec.psis.astype(np.complex64)
        pos = rec.pos_pmf.astype(np.float32)
        mom = rec.mom_pmf.astype(np.float32)
        for name, arr, dt in ((f"{i}.wavefunc", wave, "c8"),
                              (f"{i}.pos_pdf", pos, "f4"),
                              (f"{i}.mom_pdf", mom, "f4")):
            specs.append({"name": name, "shape": list(arr.shape), "dtype": dt})
            arrays.append(arr)
            sha.update(arr.tobytes())
    digest = sha.hexdigest()
    header = {
        "format": "kanolab-trajectories", "version": FORMAT_VERSION,
        "hamiltonian": first.hamiltonian,
        "grid": {"n": first.grid.n, "length": first.grid.length},
        "dt": first.dt, "snapshots": first.snapshots, "count": len(records),
        "protocols": [r.protocol for r in records],
        "seeds": [[r.seed, r.index] for r in records],
        "fields": ["wavefunc", "pos_pdf", "mom_pdf"],
        "digest": digest, "arrays": specs,
    }
    _write(path, header, arrays)
    return digest


def load_trajectories(path):
    header, arrays = _read(path)
    if header.get("format") != "kanolab-trajectories":
        raise UserError(f"{path} is not a trajectory file")
    grid = PeriodicGrid(header["grid"]["n"], header["grid"]["length"])
    records = []
    for i in range(header["count"]):
        wave = np.array(arrays[3 * i], dtype=np.complex128)
        pos = np.array(arrays[3 * i + 1], dtype=np.float64)
        mom = np.array(arrays[3 * i + 2], dtype=np.float64)
        seed, index = header["seeds"][i]
        records.append(TrajectoryRecord(
            protocol=header["protocols"][i], seed=seed, index=index,
            hamiltonian=header["hamiltonian"], grid=grid, dt=header["dt"],
            psis=wave, pos_pmf=pos, mom_pmf=mom))
    return records


# -- model checkpoints ---------------------------------------------------------------

def _edge_state(edge):
    if isinstance(edge, SplineEdge):
        desc = {"type": "spline", "lo": edge.t_lo, "hi": edge.t_hi,
                "grid": edge.grid, "degree": edge.degree, "base": edge.base,
                "out_scale": edge.out_scale,
                "complex": bool(edge.coeffs.is_complex)}
        arrays = {"coeffs": edge.coeffs.data}
        if edge.base_weight is not None:
            arrays["base_weight"] = np.atleast_1d(edge.base_weight.data)
        return desc, arrays
    if isinstance(edge, PolyEdge):
        return ({"type": "poly", "lo": edge.t_lo, "hi": edge.t_hi,
                 "degrees": list(edge.degrees),
                 "complex": bool(edge.coeffs.is_complex)},
                {"coeffs": edge.coeffs.data})
    raise UserError(f"cannot serialize edge of type {type(edge).__name__}")


def _edge_from_state(desc, arrays):
    from . import diffcore as dc

    if desc["type"] == "spline":
        edge = SplineEdge(desc["lo"], desc["hi"], grid=desc["grid"],
                          degree=desc["degree"], base=desc["base"],
                          complex_coeffs=desc["complex"], out_scale=desc["out_scale"])
        edge.coeffs = dc.Tensor(arrays["coeffs"], requires_grad=True)
        if edge.base_weight is not None:
            edge.base_weight = dc.Tensor(arrays["base_weight"].reshape(()), requires_grad=True)
        return edge
    return_edge = PolyEdge(desc["degrees"], arrays["coeffs"], desc["lo"], desc["hi"])
    return return_edge


def model_state(model):
    """(arch, arrays) for any trainable model in this package."""
    if isinstance(model, FnoNet):
        arch = model.arch()
        arrays = [(name, p.data) for name, p in model.named_parameters()]
        return arch, arrays
    if isinstance(model, KanoNet):
        arch = {"kind": "kano", "n": model.grid.n, "length": model.grid.length,
                "layers": []}
        arrays = []
        for li, layer in enumerate(model.layers):
            sym = layer.symbol
            ldesc = {"channels": list(sym.channels),
                     "spline_grid": sym.spline_grid, "degree": sym.degree,
                     "psi_abs_max": sym.psi_abs_max, "edges": {}, "activation": {}}
            for name, edge in sym.edge_items():
                desc, arrs = _edge_state(edge)
                ldesc["edges"][name] = desc
                arrays += [(f"layer{li}.symbol.{name}.{k}", v) for k, v in arrs.items()]
            for name, edge in layer.activation.edge_items():
                desc, arrs = _edge_state(edge)
                ldesc["activation"][name] = desc
                arrays += [(f"layer{li}.act.{name}.{k}", v) for k, v in arrs.items()]
            arch["layers"].append(ldesc)
        return arch, arrays
    if isinstance(model, QkanoModel):
        arch = {"kind": "qkano", "n": model.grid.n, "length": model.grid.length,
                "dt_macro": model.dt_macro, "state_dependent": model.state_dependent,
                "use_activation": model.activation is not None,
                "kinetic_init": model.kinetic_init,
                "spline_grid": model.phase_symbol.spline_grid,
                "psi_abs_max": model.phase_symbol.psi_abs_max, "edges": {},
                "act_edges": {}}
        arrays = []
        for name, edge in model.phase_symbol.edge_items():
            desc, arrs = _edge_state(edge)
            arch["edges"][name] = desc
            arrays += [(f"symbol.{name}.{k}", v) for k, v in arrs.items()]
        if model.activation is not None:
            for name, edge in (("mag", model.act_mag), ("arg", model.act_arg)):
                desc, arrs = _edge_state(edge)
                arch["act_edges"][name] = desc
                arrays += [(f"act.{name}.{k}", v) for k, v in arrs.items()]
        return arch, arrays
    raise UserError(f"cannot checkpoint model of type {type(model).__name__}")


def model_from_state(arch: dict, arrays: dict):
    from . import diffcore as dc

    kind = arch["kind"]
    grid = PeriodicGrid(arch["n"], arch["length"])
    if kind == "fno":
        model = FnoNet.from_arch(arch)
        for name, p in model.named_parameters():
            p.data = np.ascontiguousarray(arrays[name])
        return model
    if kind == "kano":
        layers = []
        for li, ldesc in enumerate(arch["layers"]):
            sym = SymbolNet(grid, channels=tuple(ldesc["channels"]),
                            complex_coeffs=True, spline_grid=ldesc["spline_grid"],
                            degree=ldesc["degree"], psi_abs_max=ldesc["psi_abs_max"])
            for name, desc in ldesc["edges"].items():
                sub = {k.rsplit(".", 1)[1]: v for k, v in arrays.items()
                       if k.startswith(f"layer{li}.symbol.{name}.")}
                sym.edges[name] = _edge_from_state(desc, sub)
            act = ActivationNet(-1.0, 1.0)
            for name, desc in ldesc["activation"].items():
                sub = {k.rsplit(".", 1)[1]: v for k, v in arrays.items()
                       if k.startswith(f"layer{li}.act.{name}.")}
                edge = _edge_from_state(desc, sub)
                if name == "u":
                    act.u_edge = edge
                else:
                    act.a_edge = edge
            layers.append(KanoLayer(sym, act))
        return KanoNet(layers)
    if kind == "qkano":
        # kinetic_init recorded for provenance; the stored arrays supersede it
        model = QkanoModel(grid, dt_macro=arch["dt_macro"],
                           state_dependent=arch["state_dependent"],
                           use_activation=arch["use_activation"],
                           spline_grid=arch["spline_grid"],
                           psi_abs_max=arch["psi_abs_max"], kinetic_init=False)
        model.kinetic_init = arch.get("kinetic_init", False)
        for name, desc in arch["edges"].items():
            sub = {k.rsplit(".", 1)[1]: v for k, v in arrays.items()
                   if k.startswith(f"symbol.{name}.")}
            model.phase_symbol.edges[name] = _edge_from_state(desc, sub)
        if model.activation is not None:
            for name, attr in (("mag", "act_mag"), ("arg", "act_arg")):
                sub = {k.rsplit(".", 1)[1]: v for k, v in arrays.items()
                       if k.startswith(f"act.{name}.")}
                setattr(model, attr, _edge_from_state(arch["act_edges"][name], sub))
            model.activation = (model.act_mag, model.act_arg)
        return model
    raise UserError(f"unknown checkpoint kind {kind!r}")


def arch_hash(arch: dict) -> str:
    return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).hexdigest()[:16]


def save_checkpoint(model, path, extra: dict | None = None) -> str:
    arch, arrays = model_state(model)
    specs, payload = [], []
    for name, arr in arrays:
        arr = np.atleast_1d(np.asarray(arr))
        dt = "c16" if np.iscomplexobj(arr) else "f8"
        specs.append({"name": name, "shape": list(arr.shape), "dtype": dt})
        payload.append(arr.astype(np.complex128 if dt == "c16" else np.float64))
    header = {"format": "kanolab-checkpoint", "version": FORMAT_VERSION,
              "kind": arch["kind"], "arch": arch, "arch_hash": arch_hash(arch),
              "extra": extra or {}, "arrays": specs}
    _write(path, header, payload)
    return header["arch_hash"]


def load_checkpoint(path):
    header, arrays = _read(path)
    if header.get("format") != "kanolab-checkpoint":
        raise UserError(f"{path} is not a checkpoint file")
    if arch_hash(header["arch"]) != header["arch_hash"]:
        raise UserError(f"{path}: architecture hash mismatch")
    named = {spec["name"]: np.array(arr)
             for spec, arr in zip(header["arrays"], arrays)}
    model = model_from_state(header["arch"], named)
    return model, header
