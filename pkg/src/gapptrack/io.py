"""Dataset JSON and streaming NDJSON results files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .estimates import ParticleSnapshot, StepSnapshot, point_estimates
from .world import Frame, GenParams, ScenarioDataset, TrueObject


class DataError(ValueError):
    """Malformed dataset or results file."""


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def dataset_to_dict(ds: ScenarioDataset) -> dict:
    out = {
        "meta": {"T": ds.step, "dims": ds.dims, "bounds": [list(b) for b in ds.bounds], "seed": ds.seed},
        "frames": [{"k": f.k, "obs": np.asarray(f.observations).tolist()} for f in ds.frames],
    }
    if ds.has_truth or ds.truth_params is not None or ds.objects:
        out["truth"] = {
            "params": ds.truth_params.to_dict() if ds.truth_params is not None else None,
            "objects": [
                {
                    "id": o.id,
                    "birth": o.birth_step,
                    "death": o.death_step,
                    "class": o.class_label,
                    "rate": o.detection_rate,
                    "positions": np.asarray(o.positions).tolist(),
                }
                for o in ds.objects
            ],
            "labels": ds.labels,
        }
    return out


def dataset_from_dict(d: dict, with_truth: bool = True) -> ScenarioDataset:
    """Parse a dataset; ``with_truth=False`` ignores the truth section."""
    try:
        meta = d["meta"]
        dims = int(meta["dims"])
        frames = [
            Frame(int(f["k"]), np.asarray(f["obs"], dtype=float).reshape(-1, dims)) for f in d["frames"]
        ]
        ds = ScenarioDataset(
            step=float(meta["T"]),
            dims=dims,
            bounds=tuple(tuple(float(x) for x in b) for b in meta["bounds"]),
            seed=meta.get("seed"),
            frames=frames,
        )
        truth = d.get("truth") if with_truth else None
        if truth:
            ds.truth_params = GenParams.from_dict(truth["params"]) if truth.get("params") else None
            ds.objects = [
                TrueObject(
                    int(o["id"]), int(o["birth"]), o["death"], int(o["class"]), float(o["rate"]),
                    np.asarray(o["positions"], dtype=float).reshape(-1, dims),
                )
                for o in truth["objects"]
            ]
            ds.labels = truth.get("labels")
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed dataset: {exc!r}") from exc
    if len(ds.bounds) != dims:
        raise DataError(f"bounds have {len(ds.bounds)} dimensions, meta says {dims}")
    return ds


def write_dataset(ds: ScenarioDataset, path) -> None:
    Path(path).write_text(dumps(dataset_to_dict(ds)) + "\n")


def read_dataset(path, with_truth: bool = True) -> ScenarioDataset:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"dataset {path} must hold a JSON object")
    return dataset_from_dict(raw, with_truth)


def _posterior_summary(steps_particles, attr) -> dict:
    w = np.array([p.weight for p in steps_particles])
    ab = np.array([getattr(p, attr) for p in steps_particles], dtype=float)
    if attr == "noise":
        means = ab[:, 1] / (ab[:, 0] - 1.0)
    else:
        means = ab[:, 0] / ab[:, 1]
    return {"mean": float(w @ means)}


def particle_to_dict(p: ParticleSnapshot, ancestor: int) -> dict:
    return {
        "w": p.weight,
        "anc": int(ancestor),
        "ids": p.ids.tolist(),
        "pos": p.positions.tolist(),
        "var": p.position_vars.tolist(),
        "alpha": p.rate_shape.tolist(),
        "beta": p.rate_rate.tolist(),
        "cls": p.class_probs.tolist(),
        "clutter": list(p.clutter),
        "birth": list(p.birth),
        "noise": list(p.noise),
    }


def particle_from_dict(d: dict, dims: int, n_classes: int) -> ParticleSnapshot:
    n = len(d["ids"])
    return ParticleSnapshot(
        weight=float(d["w"]),
        ids=np.asarray(d["ids"], dtype=np.int64),
        positions=np.asarray(d["pos"], dtype=float).reshape(n, dims),
        position_vars=np.asarray(d["var"], dtype=float).reshape(n, dims),
        rate_shape=np.asarray(d["alpha"], dtype=float),
        rate_rate=np.asarray(d["beta"], dtype=float),
        class_probs=np.asarray(d["cls"], dtype=float).reshape(n, n_classes),
        clutter=tuple(d["clutter"]),
        birth=tuple(d["birth"]),
        noise=tuple(d["noise"]),
    )


def step_record(snap: StepSnapshot, record=None, revivals=None) -> dict:
    ests = point_estimates(snap)
    out = {
        "type": "step",
        "k": snap.k,
        "estimates": [
            {"id": e.id, "mean": e.position.tolist(), "std": e.std.tolist(), "existence": e.existence, "class_probs": e.class_probs.tolist()}
            for e in ests
        ],
        "hyper": {
            "clutter_rate": _posterior_summary(snap.particles, "clutter"),
            "birth_rate": _posterior_summary(snap.particles, "birth"),
            "noise_var": _posterior_summary(snap.particles, "noise"),
        },
        "particles": [particle_to_dict(p, a) for p, a in zip(snap.particles, snap.ancestors)],
    }
    if record is not None:
        out["resampled"] = bool(record.resampled)
        out["n_clusters"] = int(record.n_clusters)
        out["bandwidth"] = float(record.bandwidth)
    if revivals is not None:
        out["revivals"] = [list(e) for e in revivals]
    return out


class ResultsWriter:
    """Streams a header, one record per step, then a footer."""

    def __init__(self, path, header: dict):
        self._fh = open(path, "w")
        self._write({"type": "header", **header})

    def _write(self, rec: dict) -> None:
        self._fh.write(dumps(rec) + "\n")
        self._fh.flush()

    def step(self, rec: dict) -> None:
        self._write(rec)

    def close(self, footer: dict) -> None:
        self._write({"type": "footer", **footer})
        self._fh.close()


def read_results(path):
    """Returns ``(header, step_records, footer)``; footer is None if the run was cut short."""
    header, steps, footer = None, [], None
    try:
        with open(path) as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                kind = rec.get("type")
                if kind == "header":
                    header = rec
                elif kind == "step":
                    steps.append(rec)
                elif kind == "footer":
                    footer = rec
                else:
                    raise DataError(f"unknown record type {kind!r}")
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read results {path}: {exc}") from exc
    if header is None:
        raise DataError(f"results {path} lack a header")
    return header, steps, footer


def snapshots_from_records(steps: list[dict], dims: int, n_classes: int) -> list[StepSnapshot]:
    try:
        return [
            StepSnapshot(
                int(r["k"]),
                np.array([p["anc"] for p in r["particles"]], dtype=np.int64),
                [particle_from_dict(p, dims, n_classes) for p in r["particles"]],
            )
            for r in steps
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed results record: {exc!r}") from exc
