"""Run configuration: a flat ``key = value`` text file, overridable from the command line."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .ingest import QualityConfig
from .morphometry import MorphometryConfig
from .skeleton import SkeletonConfig
from .topology import ClassifyConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # quality gate
    quality_gate: bool = True
    min_dimension_px: int = 512
    min_foreground_fraction: float = 0.005
    exclude_hyperopia_at: float | None = None
    # skeleton
    min_component_px: int = 20
    max_hole_px: int = 10
    junction_merge_px: int = 2
    backend: str | None = None
    # topology
    root_reach: float = 1.5
    crossing_dilation_px: int = 2
    collinear_tol_deg: float = 30.0
    # morphometry
    zone_inner_dd: float = 0.5
    zone_outer_dd: float = 2.0
    window_min_px: int = 10
    direction_skip: float = 1.0
    direction_span: float = 2.0
    area_widths: bool = True
    refine_junctions: bool = True
    # statistics and plots
    posthoc: str = "lsd"
    unit: str = "image"
    plot_all: bool = False
    # run
    workers: int = 1
    seed: int = 0
    out: str | None = None

    def __post_init__(self):
        if self.posthoc not in ("lsd", "bonferroni"):
            raise ConfigError(f"posthoc must be lsd or bonferroni, got {self.posthoc!r}")
        if self.unit not in ("image", "subject"):
            raise ConfigError(f"unit must be image or subject, got {self.unit!r}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.backend not in (None, "python", "cython"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if not 0 <= self.zone_inner_dd < self.zone_outer_dd:
            raise ConfigError("zone_inner_dd must be below zone_outer_dd")

    def quality(self):
        # the gate checks the annulus out to its outer radius from the disc centre
        return QualityConfig(self.min_dimension_px, self.min_foreground_fraction, self.zone_outer_dd + 0.5)

    def morphometry(self):
        sk = SkeletonConfig(min_component_px=self.min_component_px, max_hole_px=self.max_hole_px,
                            junction_merge_px=self.junction_merge_px, backend=self.backend)
        cl = ClassifyConfig(crossing_dilation_px=self.crossing_dilation_px, collinear_tol_deg=self.collinear_tol_deg)
        return MorphometryConfig(skeleton=sk, classify=cl, zone_inner_dd=self.zone_inner_dd,
                                 zone_outer_dd=self.zone_outer_dd, root_reach=self.root_reach,
                                 window_min_px=self.window_min_px, direction_skip=self.direction_skip,
                                 direction_span=self.direction_span, area_widths=self.area_widths,
                                 refine_junctions=self.refine_junctions)

    def replace(self, **changes):
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(key, text):
    kind = _TYPES[key]
    text = text.strip()
    optional = "None" in kind
    if optional and text.lower() in ("", "none", "null"):
        return None
    try:
        if kind.startswith("bool"):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r}") from None
    return text


def parse_config(text, source="<config>"):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, value)
    return RunConfig(**values)


def load_config(path=None):
    """RunConfig from a file, or defaults when ``path`` is None."""
    if path is None:
        return RunConfig()
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(p))


def dump_config(cfg):
    """key = value text for ``cfg`` (round-trips through ``parse_config``)."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if v is None else str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"
