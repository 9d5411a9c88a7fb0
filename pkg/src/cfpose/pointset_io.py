"""Shared JSON formats: point sets and scene oracle files.

Point-set schema:
    {"dim": 2 | 3,
     "points": [[x, y, z], ...],
     "gray": [g, ...] | null,
     "source": {...}}            # free-form metadata, optional

Oracle schema (written next to simulated scenes):
    {"model": "...", "theta_star": [...],
     "perm_clean": [...],        # P index -> position in the clean Q set
     "q_origin": [...],          # final Q position -> P index, -1 = outlier
     "outlier_mask": [...]}
"""

from __future__ import annotations

import json

import numpy as np

from .exceptions import PointSetFormatError
from .geometry import PointSet


def pointset_to_dict(ps: PointSet, source: dict | None = None) -> dict:
    doc = {
        "dim": ps.dim,
        "points": ps.points.tolist(),
        "gray": None if ps.gray is None else ps.gray.tolist(),
    }
    if source:
        doc["source"] = source
    return doc


def pointset_from_dict(doc) -> PointSet:
    if not isinstance(doc, dict):
        raise PointSetFormatError("point-set document must be a JSON object")
    for key in ("dim", "points"):
        if key not in doc:
            raise PointSetFormatError(f"point-set document missing field {key!r}")
    dim = doc["dim"]
    if dim not in (2, 3):
        raise PointSetFormatError(f"dim must be 2 or 3, got {dim!r}")
    try:
        pts = np.asarray(doc["points"], dtype=np.float64)
        gray = doc.get("gray")
        if gray is not None:
            gray = np.asarray(gray, dtype=np.float64)
        return PointSet(dim, pts, gray)
    except (TypeError, ValueError) as exc:
        raise PointSetFormatError(f"invalid point-set payload: {exc}") from exc


def save_pointset(path, ps: PointSet, source: dict | None = None):
    with open(path, "w") as fh:
        json.dump(pointset_to_dict(ps, source), fh)
        fh.write("\n")


def load_pointset(path) -> PointSet:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PointSetFormatError(f"{path}: not valid JSON ({exc})") from exc
    return pointset_from_dict(doc)


def save_json(path, doc: dict):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path) -> dict:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise PointSetFormatError(f"{path}: not valid JSON ({exc})") from exc
