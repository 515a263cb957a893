"""Binary persistence: dataset containers, model checkpoints.

Container layout (one file per artifact):
  bytes  0..15   magic "PDETTC01" padded with NULs to 16 bytes
  bytes 16..23   u64 little-endian JSON header length
  header         UTF-8 JSON (record_type, shapes, metadata)
  payload        row-major little-endian float32, trajectory-major then
                 time-major then channel-major, channels [rho, vx, vy, p]

Checkpoint layout:
  magic "PDETTCPM", u64 header length, JSON header (model kind,
  architecture config, step count, rng seeds, parameter order), then
  float64 parameter blobs in header-declared order.

A sidecar <path>.json mirrors every container header for human
inspection.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .euler import (Dataset, GridSpec, ICSpec, Normalization, Snapshot,
                    Trajectory)
from .nn import ParamStore
from .vit import ModelConfig

CONTAINER_MAGIC = b"PDETTC01" + b"\x00" * 8
CHECKPOINT_MAGIC = b"PDETTCPM"


class StorageError(RuntimeError):
    """Corrupt or mistyped artifact file."""


def _write_header(fh, magic: bytes, header: dict) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    fh.write(magic)
    fh.write(struct.pack("<Q", len(blob)))
    fh.write(blob)


def _read_header(fh, magic: bytes, path) -> dict:
    got = fh.read(len(magic))
    if got != magic:
        raise StorageError(f"{path}: bad magic {got[:16]!r}")
    (n,) = struct.unpack("<Q", fh.read(8))
    try:
        return json.loads(fh.read(n).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StorageError(f"{path}: corrupt header: {exc}") from None


def write_container(path, header: dict, payload: np.ndarray) -> None:
    """Write one container plus its sidecar .json header mirror."""
    path = Path(path)
    header = dict(header)
    header["payload_shape"] = list(payload.shape)
    data = np.ascontiguousarray(payload, dtype="<f4")
    with open(path, "wb") as fh:
        _write_header(fh, CONTAINER_MAGIC, header)
        fh.write(data.tobytes())
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(header, sort_keys=True, indent=2) + "\n")


def read_container(path, expect_type: str | None = None):
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_header(fh, CONTAINER_MAGIC, path)
        shape = tuple(header["payload_shape"])
        n = int(np.prod(shape)) if shape else 0
        raw = fh.read(4 * n)
    if len(raw) != 4 * n:
        raise StorageError(f"{path}: truncated payload")
    if expect_type is not None and header.get("record_type") != expect_type:
        raise StorageError(
            f"{path}: record_type {header.get('record_type')!r}, wanted {expect_type!r}")
    payload = np.frombuffer(raw, dtype="<f4").reshape(shape)
    return header, payload


# ---------------------------------------------------------------------------
# Datasets


def save_dataset(path, ds: Dataset, config_digest: str | None = None) -> None:
    n = len(ds.trajectories)
    n_t = len(ds.trajectories[0]) if n else 0
    header = {
        "record_type": "DATASET",
        "grid": {"nx": ds.grid.nx, "ny": ds.grid.ny, "lx": ds.grid.lx, "ly": ds.grid.ly},
        "gamma": ds.gamma,
        "channel_order": ["rho", "vx", "vy", "p"],
        "n_trajectories": n,
        "n_snapshots": n_t,
        "times": ds.trajectories[0].times.tolist() if n else [],
        "families": list(ds.families),
        "seed": ds.seed,
        "trajectories": [
            {"family": tr.ic.family, "seed": tr.ic.seed, "params": tr.ic.params}
            for tr in ds.trajectories
        ],
        "splits": ds.split,
        "normalization": ds.normalization.to_dict() if ds.normalization else None,
    }
    if config_digest is not None:
        header["config_digest"] = config_digest
    if n:
        payload = np.stack([
            np.stack([s.fields() for s in tr.snapshots]) for tr in ds.trajectories
        ])
    else:
        payload = np.zeros((0, 0, 4, ds.grid.nx, ds.grid.ny))
    write_container(path, header, payload)


def load_dataset(path) -> Dataset:
    header, payload = read_container(path, expect_type="DATASET")
    g = header["grid"]
    grid = GridSpec(nx=g["nx"], ny=g["ny"], lx=g["lx"], ly=g["ly"])
    times = np.asarray(header["times"])
    trajectories = []
    for i, meta in enumerate(header["trajectories"]):
        spec = ICSpec(family=meta["family"], params=meta["params"], seed=meta["seed"])
        snaps = [Snapshot.from_fields(payload[i, k], times[k])
                 for k in range(header["n_snapshots"])]
        trajectories.append(Trajectory(ic=spec, snapshots=snaps, times=times))
    norm = header["normalization"]
    return Dataset(
        grid=grid, gamma=header["gamma"], trajectories=trajectories,
        split={k: list(v) for k, v in header["splits"].items()},
        normalization=Normalization.from_dict(norm) if norm else None,
        seed=header["seed"], families=tuple(header["families"]),
    )


# ---------------------------------------------------------------------------
# Checkpoints


@dataclass
class Checkpoint:
    model_kind: str                  # "surrogate" | "prm"
    config: ModelConfig
    step_count: int
    values: dict                     # name -> float64 ndarray
    normalization: Normalization | None
    extra: dict


def save_checkpoint(path, model_kind: str, config: ModelConfig, store: ParamStore,
                    normalization: Normalization | None = None,
                    extra: dict | None = None) -> None:
    names = store.names()
    header = {
        "model_kind": model_kind,
        "config": config.to_dict(),
        "step_count": store.step_count,
        "params": [{"name": n, "shape": list(store[n].value.shape)} for n in names],
        "normalization": normalization.to_dict() if normalization else None,
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        _write_header(fh, CHECKPOINT_MAGIC, header)
        for n in names:
            fh.write(np.ascontiguousarray(store[n].value, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    with open(path, "rb") as fh:
        header = _read_header(fh, CHECKPOINT_MAGIC, path)
        values = {}
        for meta in header["params"]:
            shape = tuple(meta["shape"])
            n = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * n)
            if len(raw) != 8 * n:
                raise StorageError(f"{path}: truncated parameter blob {meta['name']}")
            values[meta["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    norm = header["normalization"]
    return Checkpoint(
        model_kind=header["model_kind"],
        config=ModelConfig.from_dict(header["config"]),
        step_count=header["step_count"],
        values=values,
        normalization=Normalization.from_dict(norm) if norm else None,
        extra=header.get("extra", {}),
    )
