"""Scene documents and the small text formats around them.

The scene document is JSON with sorted keys and a trailing newline; that
canonical form makes write(read(x)) byte-identical, which the round-trip
tests rely on. Anchor lists and vocabularies are line-oriented text for
hand editing.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .anchors import Anchor
from .errors import InvalidArgument, ParseError
from .retrieval import RetrievalResult


@dataclass
class Placement:
    instance: int
    asset: int
    score: float
    scale: tuple[float, float, float]
    offset: tuple[float, float, float]
    position: tuple[float, float, float]
    heading: tuple[float, float]

    @classmethod
    def from_result(cls, result: RetrievalResult) -> "Placement":
        return cls(
            instance=result.instance_id,
            asset=result.asset_id,
            score=float(result.score),
            scale=tuple(float(v) for v in result.scale),
            offset=tuple(float(v) for v in result.offset),
            position=tuple(float(v) for v in result.position),
            heading=tuple(float(v) for v in result.heading),
        )


@dataclass
class SceneLayout:
    mode: str
    vocabulary: list[str]
    anchors: list[Anchor]
    structure_mesh: str | None = None
    floor_polygon: list[tuple[float, float]] | None = None
    shelf_box: dict | None = None  # {"min": [...], "max": [...], "opening_axis", "opening_sign"}
    placements: list[Placement] = field(default_factory=list)
    object_meshes: dict[int, str] = field(default_factory=dict)  # instance id -> mesh path

    def category_index(self, name: str) -> int:
        try:
            return self.vocabulary.index(name)
        except ValueError:
            raise InvalidArgument(f"category {name!r} not in vocabulary") from None


def _anchor_to_doc(anchor: Anchor, vocabulary: list[str]) -> dict:
    return {
        "id": anchor.id,
        "category": vocabulary[anchor.category_index],
        "position": [float(v) for v in anchor.position],
        "heading": [float(v) for v in anchor.heading],
        "size": [float(v) for v in anchor.size],
    }


def _anchor_from_doc(doc: dict, vocabulary: list[str], where: str, path: str) -> Anchor:
    for key in ("id", "category", "position", "heading", "size"):
        if key not in doc:
            raise ParseError(f"{where}: missing field {key!r}", path)
    name = doc["category"]
    if name not in vocabulary:
        raise ParseError(f"{where}: category {name!r} not in vocabulary", path)
    try:
        return Anchor.create(
            int(doc["id"]),
            tuple(float(v) for v in doc["position"]),
            tuple(float(v) for v in doc["heading"]),
            tuple(float(v) for v in doc["size"]),
            vocabulary.index(name),
            len(vocabulary),
        )
    except (InvalidArgument, TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}", path) from None


def scene_to_text(scene: SceneLayout) -> str:
    doc = {
        "mode": scene.mode,
        "vocabulary": list(scene.vocabulary),
        "structure_mesh": scene.structure_mesh,
        "floor_polygon": None
        if scene.floor_polygon is None
        else [[float(x), float(z)] for x, z in scene.floor_polygon],
        "shelf_box": scene.shelf_box,
        "anchors": [_anchor_to_doc(a, scene.vocabulary) for a in scene.anchors],
        "object_meshes": {str(k): v for k, v in scene.object_meshes.items()},
        "placements": [
            {
                "instance": p.instance,
                "asset": p.asset,
                "score": float(p.score),
                "scale": [float(v) for v in p.scale],
                "offset": [float(v) for v in p.offset],
                "position": [float(v) for v in p.position],
                "heading": [float(v) for v in p.heading],
            }
            for p in scene.placements
        ],
    }
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def save_scene(scene: SceneLayout, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(scene_to_text(scene))


def load_scene(path: str) -> SceneLayout:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}", path) from None
    if not isinstance(doc, dict):
        raise ParseError("scene document must be a JSON object", path)
    for key in ("mode", "vocabulary", "anchors"):
        if key not in doc:
            raise ParseError(f"missing field {key!r}", path)
    vocabulary = list(doc["vocabulary"])
    if len(set(vocabulary)) != len(vocabulary):
        raise ParseError("vocabulary has duplicate names", path)
    anchors = [
        _anchor_from_doc(a, vocabulary, f"anchors[{i}]", path)
        for i, a in enumerate(doc["anchors"])
    ]
    ids = [a.id for a in anchors]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate anchor ids", path)

    shelf_box = doc.get("shelf_box")
    if shelf_box is not None:
        for key in ("min", "max"):
            if key not in shelf_box:
                raise ParseError(f"shelf_box: missing field {key!r}", path)
        shelf_box = {
            "min": [float(v) for v in shelf_box["min"]],
            "max": [float(v) for v in shelf_box["max"]],
            "opening_axis": int(shelf_box.get("opening_axis", 1)),
            "opening_sign": int(shelf_box.get("opening_sign", 1)),
        }

    placements = []
    for i, p in enumerate(doc.get("placements", [])):
        where = f"placements[{i}]"
        for key in ("instance", "asset", "score", "scale", "offset", "position", "heading"):
            if key not in p:
                raise ParseError(f"{where}: missing field {key!r}", path)
        placements.append(
            Placement(
                instance=int(p["instance"]),
                asset=int(p["asset"]),
                score=float(p["score"]),
                scale=tuple(float(v) for v in p["scale"]),
                offset=tuple(float(v) for v in p["offset"]),
                position=tuple(float(v) for v in p["position"]),
                heading=tuple(float(v) for v in p["heading"]),
            )
        )

    polygon = doc.get("floor_polygon")
    if polygon is not None:
        polygon = [(float(x), float(z)) for x, z in polygon]

    meshes_doc = doc.get("object_meshes", {})
    try:
        object_meshes = {int(k): str(v) for k, v in meshes_doc.items()}
    except (TypeError, ValueError):
        raise ParseError("object_meshes must map instance ids to paths", path) from None

    return SceneLayout(
        mode=str(doc["mode"]),
        vocabulary=vocabulary,
        anchors=anchors,
        structure_mesh=doc.get("structure_mesh"),
        floor_polygon=polygon,
        shelf_box=shelf_box,
        placements=placements,
        object_meshes=object_meshes,
    )


def load_vocabulary(path: str) -> list[str]:
    """One category name per line; # starts a comment."""
    names = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                names.append(line)
    if not names:
        raise ParseError("vocabulary file has no names", path)
    if len(set(names)) != len(names):
        raise ParseError("vocabulary has duplicate names", path)
    return names


def load_anchor_list(path: str, vocabulary: list[str]) -> list[Anchor]:
    """Whitespace-separated records: id category px py pz theta sx sy sz."""
    anchors = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 9:
                raise ParseError(f"line {lineno}: expected 9 fields, got {len(parts)}", path)
            name = parts[1]
            if name not in vocabulary:
                raise ParseError(f"line {lineno}: category {name!r} not in vocabulary", path)
            try:
                anchor_id = int(parts[0])
                nums = [float(v) for v in parts[2:]]
            except ValueError:
                raise ParseError(f"line {lineno}: malformed number", path) from None
            theta = nums[3]
            try:
                anchors.append(
                    Anchor.create(
                        anchor_id,
                        tuple(nums[0:3]),
                        (float(np.cos(theta)), float(np.sin(theta))),
                        tuple(nums[4:7]),
                        vocabulary.index(name),
                        len(vocabulary),
                    )
                )
            except InvalidArgument as exc:
                raise ParseError(f"line {lineno}: {exc}", path) from None
    if not anchors:
        raise ParseError("anchor list has no records", path)
    return anchors
