"""Triangle meshes: OBJ loading, primitives, and placement transforms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, ParseError


@dataclass
class Mesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray  # (F, 3) int64 vertex indices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and self.faces.max() >= len(self.vertices):
            raise InvalidArgument("face index exceeds vertex count")
        if self.faces.size and self.faces.min() < 0:
            raise InvalidArgument("negative face index")

    def triangles(self) -> np.ndarray:
        """(F, 3, 3) array of triangle corner positions."""
        return self.vertices[self.faces]

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise InvalidArgument("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def extents(self) -> np.ndarray:
        lo, hi = self.bounds()
        return hi - lo

    def transformed(self, matrix: np.ndarray, translation: np.ndarray) -> "Mesh":
        matrix = np.asarray(matrix, dtype=np.float64)
        translation = np.asarray(translation, dtype=np.float64)
        return Mesh(self.vertices @ matrix.T + translation, self.faces)


def yaw_matrix(heading: np.ndarray) -> np.ndarray:
    """Rotation about world y taking local +x to the unit heading (cos, sin).

    The heading lives in the xz plane; a zero-angle heading is (1, 0).
    """
    h = np.asarray(heading, dtype=np.float64).reshape(2)
    norm = float(np.linalg.norm(h))
    if norm < 1e-12:
        raise InvalidArgument("heading vector must be nonzero")
    c, s = h / norm
    return np.array(
        [
            [c, 0.0, -s],
            [0.0, 1.0, 0.0],
            [s, 0.0, c],
        ]
    )


def box_mesh(extents, center=(0.0, 0.0, 0.0)) -> Mesh:
    """Axis-aligned closed box, 12 triangles."""
    e = np.asarray(extents, dtype=np.float64) / 2.0
    if (e <= 0).any():
        raise InvalidArgument(f"box extents must be positive, got {extents}")
    c = np.asarray(center, dtype=np.float64)
    corners = np.array(
        [
            [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
            [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
        ],
        dtype=np.float64,
    )
    verts = corners * e + c
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # z-
            [4, 5, 6], [4, 6, 7],  # z+
            [0, 1, 5], [0, 5, 4],  # y-
            [3, 6, 2], [3, 7, 6],  # y+
            [0, 4, 7], [0, 7, 3],  # x-
            [1, 2, 6], [1, 6, 5],  # x+
        ]
    )
    return Mesh(verts, faces)


def open_box_mesh(extents, center=(0.0, 0.0, 0.0), open_axis: int = 2) -> Mesh:
    """Box missing its +open_axis face (a shelf-like cavity)."""
    full = box_mesh(extents, center)
    normals = _face_axis_signs(full)
    keep = ~((normals[:, open_axis] > 0.5))
    return Mesh(full.vertices, full.faces[keep])


def _face_axis_signs(mesh: Mesh) -> np.ndarray:
    tri = mesh.triangles()
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    lens[lens == 0] = 1.0
    return n / lens


def load_obj(path: str) -> Mesh:
    """Minimal OBJ reader: v and f records, polygon faces fan-triangulated."""
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if parts[0] == "v":
                if len(parts) < 4:
                    raise ParseError(f"line {lineno}: vertex needs 3 coordinates", path)
                vertices.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                if len(parts) < 4:
                    raise ParseError(f"line {lineno}: face needs 3 or more vertices", path)
                idx = []
                for token in parts[1:]:
                    ref = token.split("/")[0]
                    i = int(ref)
                    # OBJ indices are 1-based; negatives count from the end.
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                for a, b in zip(idx[1:-1], idx[2:]):
                    faces.append([idx[0], a, b])
    if not vertices:
        raise ParseError("no vertices found", path)
    if not faces:
        raise ParseError("no faces found", path)
    return Mesh(np.array(vertices), np.array(faces))


def save_obj(mesh: Mesh, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
