"""Dataset manifests, masks, disc annotations, refraction groups and the quality gate."""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

MANIFEST_COLUMNS = ["id", "eye", "ser_diopters", "age_years", "artery_mask", "vein_mask", "disc_json"]


class IngestError(ValueError):
    pass


class RefractionGroup(str, enum.Enum):
    Normal = "Normal"
    LowMyopia = "LowMyopia"
    ModerateMyopia = "ModerateMyopia"
    HighMyopia = "HighMyopia"

    @property
    def label(self):
        return {
            "Normal": "Normal",
            "LowMyopia": "Low myopia",
            "ModerateMyopia": "Moderate myopia",
            "HighMyopia": "High myopia",
        }[self.value]


GROUP_ORDER = list(RefractionGroup)

# (upper bound inclusive, group), checked from most myopic upward
_THRESHOLDS = ((-6.0, RefractionGroup.HighMyopia), (-3.0, RefractionGroup.ModerateMyopia), (-0.5, RefractionGroup.LowMyopia))


def classify_refraction(ser, exclude_hyperopia_at=None):
    """Refraction group of a spherical-equivalent value in diopters.

    With ``exclude_hyperopia_at`` set, values at or above it return None.
    """
    ser = float(ser)
    if not math.isfinite(ser):
        raise IngestError(f"non-finite SER: {ser!r}")
    if exclude_hyperopia_at is not None and ser >= exclude_hyperopia_at:
        return None
    for bound, group in _THRESHOLDS:
        if ser <= bound:
            return group
    return RefractionGroup.Normal


@dataclass(frozen=True)
class DiscAnnotation:
    center: tuple  # (x, y) pixels
    diameter: float

    def __post_init__(self):
        if not self.diameter > 0:
            raise IngestError(f"disc diameter must be positive, got {self.diameter}")

    @property
    def radius(self):
        return self.diameter / 2.0

    def inside(self, shape):
        h, w = shape
        x, y = self.center
        return 0 <= x < w and 0 <= y < h

    def to_json(self):
        return {"center_x": self.center[0], "center_y": self.center[1], "diameter_px": self.diameter}

    @classmethod
    def from_json(cls, obj):
        try:
            return cls((float(obj["center_x"]), float(obj["center_y"])), float(obj["diameter_px"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"bad disc annotation: {exc}") from exc


def read_disc(path):
    with open(path) as fh:
        return DiscAnnotation.from_json(json.load(fh))


def write_disc(disc, path):
    with open(path, "w") as fh:
        json.dump(disc.to_json(), fh)


def read_mask(path):
    """Single-channel PNG -> bool array (nonzero is vessel)."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.ndim == 3:
        arr = arr.max(axis=2)
    return arr != 0


def write_mask(mask, path):
    Image.fromarray((np.asarray(mask) != 0).astype(np.uint8) * 255, mode="L").save(path, optimize=False)


@dataclass(frozen=True)
class LabeledFundus:
    id: str
    eye: str  # "Left" | "Right"
    ser: float
    age: float | None
    artery_mask: np.ndarray = field(repr=False, compare=False)
    vein_mask: np.ndarray = field(repr=False, compare=False)
    disc: DiscAnnotation
    subject: str | None = None
    paths: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.artery_mask.shape != self.vein_mask.shape:
            raise IngestError(f"{self.id}: artery and vein masks differ in shape")

    @property
    def shape(self):
        return self.artery_mask.shape

    @property
    def group(self):
        return classify_refraction(self.ser)


@dataclass
class RowError:
    line: int
    id: str | None
    message: str

    def __str__(self):
        return f"line {self.line} ({self.id or '?'}): {self.message}"


_EYES = {"L": "Left", "R": "Right"}


def parse_row(row, base, line=0):
    """Load one manifest row (paths relative to ``base``); raises IngestError."""
    missing = [c for c in MANIFEST_COLUMNS if row.get(c) in (None, "") and c != "age_years"]
    if missing:
        raise IngestError(f"missing fields {missing}")
    eye = _EYES.get(row["eye"].strip().upper())
    if eye is None:
        raise IngestError(f"eye must be L or R, got {row['eye']!r}")
    try:
        ser = float(row["ser_diopters"])
        age = float(row["age_years"]) if row.get("age_years") not in (None, "") else None
    except ValueError as exc:
        raise IngestError(str(exc)) from exc
    if not math.isfinite(ser):
        raise IngestError(f"non-finite SER {row['ser_diopters']!r}")
    if age is not None and age < 0:
        raise IngestError(f"negative age {age}")
    paths = {k: base / row[k] for k in ("artery_mask", "vein_mask", "disc_json")}
    for k, p in paths.items():
        if not p.is_file():
            raise IngestError(f"{k} file not found: {row[k]}")
    try:
        artery = read_mask(paths["artery_mask"])
        vein = read_mask(paths["vein_mask"])
    except OSError as exc:
        raise IngestError(f"unreadable mask: {exc}") from exc
    disc = read_disc(paths["disc_json"])
    subject = row.get("subject_id") or None
    return LabeledFundus(row["id"], eye, ser, age, artery, vein, disc, subject, paths)


def load_manifest(path, with_errors=False):
    """Read a manifest CSV. Bad rows become ``RowError`` entries, never a global failure.

    Returns the list of records, or ``(records, errors)`` with ``with_errors``.
    """
    path = Path(path)
    base = path.parent
    records, errors = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        absent = [c for c in MANIFEST_COLUMNS if c not in (reader.fieldnames or [])]
        if absent:
            raise IngestError(f"manifest header lacks columns {absent}")
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                errors.append(RowError(line, row.get("id"), "wrong number of fields"))
                continue
            try:
                records.append(parse_row(row, base, line))
            except IngestError as exc:
                errors.append(RowError(line, row.get("id"), str(exc)))
    return (records, errors) if with_errors else records


def manifest_rows(path):
    """Raw manifest rows (no file access), used for group labels."""
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_manifest(rows, path):
    """Write manifest rows (dicts with at least MANIFEST_COLUMNS)."""
    extra = sorted({k for r in rows for k in r} - set(MANIFEST_COLUMNS))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_COLUMNS + extra, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow(r)


def record_row(record):
    """Manifest row for a loaded record, paths relative to the manifest directory."""
    return {
        "id": record.id,
        "eye": record.eye[0],
        "ser_diopters": repr(record.ser),
        "age_years": "" if record.age is None else repr(record.age),
        "artery_mask": str(record.paths.get("artery_mask", "")),
        "vein_mask": str(record.paths.get("vein_mask", "")),
        "disc_json": str(record.paths.get("disc_json", "")),
    }


@dataclass(frozen=True)
class QualityConfig:
    min_dimension_px: int = 512
    min_foreground_fraction: float = 0.005
    # annulus outer edge, in disc diameters from the disc centre
    zone_outer_dd: float = 2.5


class Reason(str, enum.Enum):
    SmallImage = "SmallImage"
    EmptyMask = "EmptyMask"
    DiscOutOfBounds = "DiscOutOfBounds"
    ZoneOutOfBounds = "ZoneOutOfBounds"


@dataclass(frozen=True)
class GateResult:
    accepted: bool
    reasons: tuple = ()

    def __bool__(self):
        return self.accepted


def quality_gate(record, config=QualityConfig()):
    reasons = []
    h, w = record.shape
    if min(h, w) < config.min_dimension_px:
        reasons.append(Reason.SmallImage)
    for m in (record.artery_mask, record.vein_mask):
        if m.mean() < config.min_foreground_fraction:
            reasons.append(Reason.EmptyMask)
            break
    disc = record.disc
    if not disc.inside((h, w)):
        reasons.append(Reason.DiscOutOfBounds)
    else:
        reach = config.zone_outer_dd * disc.diameter
        x, y = disc.center
        if x - reach < 0 or y - reach < 0 or x + reach > w - 1 or y + reach > h - 1:
            reasons.append(Reason.ZoneOutOfBounds)
    return GateResult(not reasons, tuple(reasons))
