"""On-disk scene and solution bundles.

A scene directory holds ``scene.json`` (intrinsics and metadata) and
``tracks.csv``.  A solution directory holds one ``depth_<k>.pfm`` per view
(a 1 x n image in track order), ``weights_<k>-<l>.csv``, ``embedding_<k>-<l>.csv``
under the ARAP prior, ``log.csv`` and the ``config.json`` that produced it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embedding import EmbeddingField
from .exceptions import FormatError, InputError
from .geometry import CameraIntrinsics, ViewObservation
from .io import read_csv, read_json, read_pfm, read_tracks, write_csv, write_json, write_pfm, write_tracks
from .priors import WeightAssignment
from .solver.loss import CorrespondenceMap
from .solver.two_stage import LOG_COLUMNS


@dataclass
class SceneBundle:
    views: list
    corrs: list
    gt_depths: list | None = None
    body_ids: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return self.views[0].intrinsics


def save_scene(out_dir, scene) -> Path:
    """Write a :class:`SyntheticScene` as a track bundle."""
    out = Path(out_dir)
    intr = scene.views[0].intrinsics
    write_tracks(out / "tracks.csv", scene.views, scene.gt_depths, scene.motion_labels)
    meta = {
        "scenario": scene.scenario,
        "intrinsics": intr.to_dict(),
        "n_views": scene.n_views,
        "rigid_instant_pairs": [list(p) for p in scene.rigid_instant_pairs],
        "meta": scene.meta,
    }
    write_json(out / "scene.json", meta)
    return out


def load_scene(scene_dir) -> SceneBundle:
    root = Path(scene_dir)
    if not root.is_dir():
        raise InputError(f"scene directory {root} does not exist")
    meta = read_json(root / "scene.json")
    try:
        intr = CameraIntrinsics(**meta["intrinsics"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"{root / 'scene.json'} has no valid intrinsics: {exc}", offset=0) from exc
    tracks = read_tracks(root / "tracks.csv")
    keys = sorted(tracks)
    if keys != list(range(len(keys))):
        raise FormatError(f"view ids must be 0..m-1, got {keys}", offset=0)
    views = [ViewObservation.from_pixels(intr, tracks[k]["pixels"], tracks[k]["point_id"]) for k in keys]
    corrs = [CorrespondenceMap.from_point_ids(views[k], views[k + 1]) for k in range(len(views) - 1)]
    depths = [tracks[k]["gt_depth"] for k in keys]
    gt = None if any(d is None for d in depths) else depths
    body = tracks[keys[0]]["body_id"]
    return SceneBundle(views, corrs, gt, body, meta)


def save_solution(out_dir, depths, weights, embeddings, log, config: dict) -> Path:
    out = Path(out_dir)
    for k, d in enumerate(depths):
        write_pfm(out / f"depth_{k}.pfm", d.decode().astype(np.float32))
    for k, w in enumerate(weights):
        rows = [(int(i), int(j), repr(float(x))) for (i, j), x in zip(w.edges, w.weights)]
        write_csv(out / f"weights_{k}-{k + 1}.csv", ("i", "j", "weight"), rows)
    for e in embeddings or []:
        k, l = e.view_pair
        header = [f"raw{c}" for c in range(e.v)]
        write_csv(out / f"embedding_{k}-{l}.csv", header, [[repr(float(x)) for x in row] for row in e.raw])
    write_csv(out / "log.csv", LOG_COLUMNS, [[row[c] for c in LOG_COLUMNS] for row in log])
    write_json(out / "config.json", config)
    return out


def load_depths(solution_dir) -> list[np.ndarray]:
    root = Path(solution_dir)
    paths = sorted(root.glob("depth_*.pfm"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise InputError(f"no depth_<k>.pfm files in {root}")
    return [read_pfm(p).ravel().astype(np.float64) for p in paths]


def load_embeddings(solution_dir) -> list[EmbeddingField]:
    root = Path(solution_dir)
    out = []
    for path in sorted(root.glob("embedding_*.csv"), key=lambda p: int(p.stem.split("_")[1].split("-")[0])):
        k, l = (int(x) for x in path.stem.split("_")[1].split("-"))
        rows = read_csv(path)
        raw = np.array([[float(v) for v in row.values()] for row in rows])
        out.append(EmbeddingField(raw, (k, l)))
    if not out:
        raise InputError(f"no embedding_<k>-<l>.csv files in {root} (solve with the arap prior)")
    return out


def load_weights(solution_dir) -> list[WeightAssignment]:
    root = Path(solution_dir)
    out = []
    for path in sorted(root.glob("weights_*.csv"), key=lambda p: int(p.stem.split("_")[1].split("-")[0])):
        rows = read_csv(path)
        edges = np.array([(int(r["i"]), int(r["j"])) for r in rows], dtype=np.int64).reshape(-1, 2)
        out.append(WeightAssignment(edges, [float(r["weight"]) for r in rows], "override"))
    return out
