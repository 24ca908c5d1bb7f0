"""Pipeline configuration: mode presets plus `key = value` override files.

Every report echoes its configuration through :func:`dump_config`, so a
run's constants are always recoverable from its outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .errors import ParseError

MODES = ("room", "shelf")


@dataclass(frozen=True)
class PipelineConfig:
    mode: str
    voxel_size: float  # s_v, meters per generation voxel
    block_resolution: int  # K
    canonical_resolution: int  # K_A
    max_shift: tuple[int, int, int]  # E, voxels per axis
    mask_probability: float  # p
    iou_threshold: float  # t_IoU
    size_ratio: float  # t_s
    scale_gate: float  # t_a
    sigma: float  # Soft Chamfer kernel width, voxels
    sdf_truncation: float  # T_sdf, voxels
    diffusion_steps: int  # T
    beta_min: float
    beta_max: float
    eval_pitch: float  # s_e, meters
    floor_tolerance: float  # eta, meters
    open_margin: float  # meters, shelf open face
    side_margin: float  # meters, remaining shelf faces
    intrusion_margin: float  # meters, collision AABB shrink
    float_tolerance: float  # delta_f, meters
    or_epsilon: float
    style_clustering: bool
    palette: str  # palette file path, empty = built-in
    seed: int


_SHARED = dict(
    block_resolution=64,
    canonical_resolution=64,
    mask_probability=0.5,
    iou_threshold=0.3,
    size_ratio=1.1,
    scale_gate=1.5,
    sigma=1.5,
    sdf_truncation=8.0,
    diffusion_steps=1000,
    beta_min=1e-4,
    beta_max=0.02,
    open_margin=0.012,
    side_margin=0.036,
    intrusion_margin=0.012,
    float_tolerance=0.01,
    or_epsilon=1e-9,
    palette="",
    seed=0,
)


def room_preset() -> PipelineConfig:
    return PipelineConfig(
        mode="room",
        voxel_size=0.0375,
        max_shift=(4, 0, 4),
        eval_pitch=0.02,
        floor_tolerance=0.02,
        style_clustering=True,
        **_SHARED,
    )


def shelf_preset() -> PipelineConfig:
    return PipelineConfig(
        mode="shelf",
        voxel_size=0.01,
        max_shift=(6, 6, 6),
        eval_pitch=0.012,
        floor_tolerance=0.02,
        style_clustering=False,
        **_SHARED,
    )


def preset(mode: str) -> PipelineConfig:
    if mode == "room":
        return room_preset()
    if mode == "shelf":
        return shelf_preset()
    raise ParseError(f"unknown mode {mode!r}; expected one of {MODES}")


def _parse_triple(raw: str, key: str) -> tuple[int, int, int]:
    parts = raw.replace(",", " ").split()
    if len(parts) != 3:
        raise ParseError(f"key {key!r}: expected 3 integers, got {raw!r}")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ParseError(f"key {key!r}: expected 3 integers, got {raw!r}") from None


def _parse_bool(raw: str, key: str) -> bool:
    low = raw.strip().lower()
    if low in ("on", "true", "1", "yes"):
        return True
    if low in ("off", "false", "0", "no"):
        return False
    raise ParseError(f"key {key!r}: expected on/off, got {raw!r}")


def _parse_value(key: str, raw: str, kind: type):
    if kind is bool:
        return _parse_bool(raw, key)
    if kind is int:
        try:
            return int(raw)
        except ValueError:
            raise ParseError(f"key {key!r}: expected integer, got {raw!r}") from None
    if kind is float:
        try:
            return float(raw)
        except ValueError:
            raise ParseError(f"key {key!r}: expected number, got {raw!r}") from None
    if kind is str:
        return raw
    return _parse_triple(raw, key)


_POSITIVE = (
    "voxel_size",
    "block_resolution",
    "canonical_resolution",
    "size_ratio",
    "sigma",
    "sdf_truncation",
    "diffusion_steps",
    "eval_pitch",
    "or_epsilon",
)
_NON_NEGATIVE = (
    "floor_tolerance",
    "open_margin",
    "side_margin",
    "intrusion_margin",
    "float_tolerance",
)


def validate(cfg: PipelineConfig) -> PipelineConfig:
    def fail(key, why):
        raise ParseError(f"key {key!r}: {why}")

    if cfg.mode not in MODES:
        fail("mode", f"expected one of {MODES}, got {cfg.mode!r}")
    for key in _POSITIVE:
        if getattr(cfg, key) <= 0:
            fail(key, f"must be > 0, got {getattr(cfg, key)}")
    for key in _NON_NEGATIVE:
        if getattr(cfg, key) < 0:
            fail(key, f"must be >= 0, got {getattr(cfg, key)}")
    if any(v < 0 for v in cfg.max_shift):
        fail("max_shift", f"must be >= 0 per axis, got {cfg.max_shift}")
    if not 0.0 <= cfg.mask_probability <= 1.0:
        fail("mask_probability", f"must be in [0, 1], got {cfg.mask_probability}")
    if not 0.0 <= cfg.iou_threshold <= 1.0:
        fail("iou_threshold", f"must be in [0, 1], got {cfg.iou_threshold}")
    if cfg.scale_gate < 1.0:
        fail("scale_gate", f"must be >= 1, got {cfg.scale_gate}")
    if cfg.size_ratio < 1.0:
        fail("size_ratio", f"must be >= 1, got {cfg.size_ratio}")
    if not 0.0 < cfg.beta_min <= cfg.beta_max < 1.0:
        fail("beta_min", f"need 0 < beta_min <= beta_max < 1, got [{cfg.beta_min}, {cfg.beta_max}]")
    if cfg.block_resolution % 4 != 0:
        fail("block_resolution", f"must be divisible by 4, got {cfg.block_resolution}")
    return cfg


def load_config(path: str | None, mode: str) -> PipelineConfig:
    """Mode preset overlaid with `key = value` lines from ``path``.

    Unknown keys are rejected by name; # starts a comment.
    """
    cfg = preset(mode)
    if path is None:
        return validate(cfg)
    kinds = {f.name: f.type for f in fields(PipelineConfig)}
    overrides = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"line {lineno}: expected key = value", path)
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key == "mode":
                raise ParseError(f"line {lineno}: mode is fixed by the command, not the file", path)
            if key not in kinds:
                raise ParseError(f"line {lineno}: unknown key {key!r}", path)
            kind = {"float": float, "int": int, "bool": bool, "str": str}.get(
                kinds[key], tuple
            )
            overrides[key] = _parse_value(key, value, kind)
    return validate(replace(cfg, **overrides))


def dump_config(cfg: PipelineConfig) -> str:
    """Canonical text form, one key per line in declaration order."""
    lines = []
    for f in fields(PipelineConfig):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            text = "on" if v else "off"
        elif isinstance(v, tuple):
            text = ",".join(str(x) for x in v)
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
