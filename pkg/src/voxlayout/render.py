"""Top-down orthographic semantic renders of voxel grids."""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import InvalidArgument
from .grid import GlobalGrid

IMAGE_SIZE = 256
BACKGROUND = (255, 255, 255)

# Shelf-mode category colors; the structure entry doubles as the reserved
# last vocabulary slot.
SHELF_PALETTE = {
    "bookcolumn": "#FABD2E",
    "bookstack": "#F29433",
    "bottle": "#00A1B8",
    "bowl": "#D17AC7",
    "can": "#8C94A3",
    "cup": "#3B7DF2",
    "foodbag": "#DB6E57",
    "foodbox": "#E6B24C",
    "hardware": "#333842",
    "jar": "#2EAD5C",
    "natureshelftrinkets": "#B28040",
    "pan": "#61616B",
    "plate": "#F2EBC7",
    "pot": "#A87052",
    "wineglass": "#6BCCEB",
    "largeshelf": "#7A8285",
}

SHELF_VOCABULARY = [
    "bookcolumn",
    "bookstack",
    "bottle",
    "bowl",
    "can",
    "cup",
    "foodbag",
    "foodbox",
    "hardware",
    "jar",
    "natureshelftrinkets",
    "pan",
    "plate",
    "pot",
    "wineglass",
    "largeshelf",  # structure, reserved last index
]


def parse_color(value: str) -> tuple[int, int, int]:
    v = value.strip().lstrip("#")
    if len(v) != 6:
        raise InvalidArgument(f"expected RRGGBB color, got {value!r}")
    try:
        return tuple(int(v[i : i + 2], 16) for i in (0, 2, 4))
    except ValueError:
        raise InvalidArgument(f"expected RRGGBB color, got {value!r}") from None


def palette_from_names(vocabulary: list[str], colors: dict[str, str]) -> dict[int, tuple]:
    """Index-keyed palette for a vocabulary; every name must have a color."""
    out = {}
    for i, name in enumerate(vocabulary):
        if name not in colors:
            raise InvalidArgument(f"no palette color for category {name!r}")
        out[i] = parse_color(colors[name])
    return out


def fallback_palette(num_categories: int) -> dict[int, tuple]:
    """Deterministic distinct colors for vocabularies without a table."""
    import matplotlib

    cmap = matplotlib.colormaps["tab20"]
    out = {}
    for i in range(num_categories):
        r, g, b, _ = cmap(i % 20)
        out[i] = (int(r * 255), int(g * 255), int(b * 255))
    return out


def render_topdown(
    grid: GlobalGrid, palette: dict[int, tuple], size: int = IMAGE_SIZE
) -> Image.Image:
    """Orthographic xz view; each pixel shows the highest occupied voxel.

    Pixels map to the nearest voxel column; the x axis runs left-right and
    z top-bottom. Structure voxels render with their reserved category.
    """
    dx, dy, dz = grid.spec.dims
    occupied = grid.owner != 0
    any_col = occupied.any(axis=1)
    # Index of the topmost occupied voxel per column.
    top = dy - 1 - np.argmax(occupied[:, ::-1, :], axis=1)

    cats = np.unique(grid.semantic[occupied]) if occupied.any() else np.array([], int)
    missing = [int(c) for c in cats if int(c) not in palette]
    if missing:
        raise InvalidArgument(f"palette missing categories {missing}")

    img = np.full((size, size, 3), BACKGROUND, dtype=np.uint8)
    px = np.minimum((np.arange(size) * dx) // size, dx - 1).astype(np.int64)
    pz = np.minimum((np.arange(size) * dz) // size, dz - 1).astype(np.int64)
    ix = px[None, :].repeat(size, axis=0)
    iz = pz[:, None].repeat(size, axis=1)
    hit = any_col[ix, iz]
    iy = top[ix, iz]
    sem = grid.semantic[ix, iy, iz]
    lut_keys = sorted(palette)
    lut = np.zeros(max(lut_keys) + 1 if lut_keys else 1, dtype=np.int64)
    colors = np.array([palette[k] for k in lut_keys], dtype=np.uint8)
    for pos, k in enumerate(lut_keys):
        lut[k] = pos
    sem_clipped = np.clip(sem, 0, len(lut) - 1)
    img[hit] = colors[lut[sem_clipped[hit]]]
    return Image.fromarray(img, "RGB")


def save_render(grid: GlobalGrid, palette: dict[int, tuple], path: str) -> None:
    render_topdown(grid, palette).save(path, format="PNG")
