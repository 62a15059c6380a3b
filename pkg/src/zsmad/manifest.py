"""Dataset manifests: sample records, loading, and protocol slicing.

The engine never walks image directories; every evaluation is driven by a
manifest file (CSV or JSON) listing one row per image with its label,
morph generator, and capture medium.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

from .errors import ConstraintError, ParseError, SchemaError

CSV_HEADER = ["id", "path", "label", "generator", "medium", "subject_id"]
REQUIRED_COLUMNS = ["id", "path", "label", "generator", "medium"]


class Label(Enum):
    BONA_FIDE = "bonafide"
    MORPH = "morph"


class Generator(Enum):
    LMA_I = "lma-i"
    LMA_II = "lma-ii"
    MIPGAN_2 = "mipgan-2"
    MORDIFF = "mordiff"
    PIPE = "pipe"
    NONE = "-"


class Medium(Enum):
    DIGITAL = "digital"
    PS_1 = "ps-1"
    PS_2 = "ps-2"


MORPH_GENERATORS = [g for g in Generator if g is not Generator.NONE]


def _parse_enum(cls, raw: str, field: str, row=None):
    try:
        return cls(raw.strip().lower())
    except ValueError:
        valid = ", ".join(m.value for m in cls)
        raise ParseError(f"bad {field} {raw!r} (expected one of: {valid})", row=row)


@dataclass(frozen=True)
class FaceSample:
    """One image record: identity, file location, and protocol tags."""

    id: str
    path: str
    label: Label
    generator: Generator
    medium: Medium
    subject_id: Optional[str] = None

    def __post_init__(self):
        if self.label is Label.BONA_FIDE and self.generator is not Generator.NONE:
            raise ConstraintError(
                f"sample {self.id!r}: bona fide sample must have generator '-', "
                f"got {self.generator.value!r}"
            )
        if self.label is Label.MORPH and self.generator is Generator.NONE:
            raise ConstraintError(f"sample {self.id!r}: morph sample must name a generator")


@dataclass(frozen=True)
class Manifest:
    """Ordered collection of samples plus a free-form source tag."""

    samples: tuple[FaceSample, ...]
    source_tag: str = ""

    def __post_init__(self):
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise ConstraintError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def bonafide(self) -> tuple[FaceSample, ...]:
        return tuple(s for s in self.samples if s.label is Label.BONA_FIDE)

    def morphs(self) -> tuple[FaceSample, ...]:
        return tuple(s for s in self.samples if s.label is Label.MORPH)

    def generators(self) -> list[Generator]:
        """Morph generators present, in canonical enum order."""
        present = {s.generator for s in self.samples if s.label is Label.MORPH}
        return [g for g in MORPH_GENERATORS if g in present]

    def mediums(self) -> list[Medium]:
        """Mediums present among all samples, in canonical enum order."""
        present = {s.medium for s in self.samples}
        return [m for m in Medium if m in present]


def _sample_from_fields(fields: dict, row=None) -> FaceSample:
    sid = str(fields["id"]).strip()
    path = str(fields["path"]).strip()
    if not sid:
        raise ParseError("empty id", row=row)
    if not path:
        raise ParseError("empty path", row=row)
    if "," in path:
        raise ParseError(f"path {path!r} contains a comma", row=row)
    label = _parse_enum(Label, str(fields["label"]), "label", row=row)
    generator = _parse_enum(Generator, str(fields["generator"]), "generator", row=row)
    medium = _parse_enum(Medium, str(fields["medium"]), "medium", row=row)
    subject = fields.get("subject_id")
    subject = str(subject).strip() if subject not in (None, "") else None
    return FaceSample(sid, path, label, generator, medium, subject)


def load_manifest(path, format: Optional[str] = None) -> Manifest:
    """Load and validate a manifest from CSV or JSON.

    ``format`` defaults to the file suffix. Raises SchemaError for missing
    columns, ParseError for malformed rows (with row number), and
    ConstraintError for invariant violations.
    """
    path = Path(path)
    if format is None:
        format = path.suffix.lstrip(".").lower()
    if format not in ("csv", "json"):
        raise SchemaError(f"unsupported manifest format {format!r}")
    if format == "csv":
        samples = _load_csv(path)
    else:
        samples = _load_json(path)
    return Manifest(samples=tuple(samples), source_tag=str(path))


def _load_csv(path: Path) -> list[FaceSample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty manifest file")
        header = [h.strip().lower() for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing columns: {', '.join(missing)}")
        idx = {c: header.index(c) for c in header}
        samples = []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", row=rownum
                )
            fields = {c: row[i] for c, i in idx.items()}
            samples.append(_sample_from_fields(fields, row=rownum))
    return samples


def _load_json(path: Path) -> list[FaceSample]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e}")
    if not isinstance(data, list):
        raise SchemaError(f"{path}: expected a JSON array of sample objects")
    samples = []
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise ParseError("expected an object", row=i)
        missing = [c for c in REQUIRED_COLUMNS if c not in obj]
        if missing:
            raise SchemaError(f"{path}: entry {i} missing keys: {', '.join(missing)}")
        samples.append(_sample_from_fields(obj, row=i))
    return samples


def write_manifest(manifest: Manifest, path, format: Optional[str] = None) -> None:
    """Write a manifest with canonical lowercase-hyphen spellings.

    Round-trips with load_manifest: load(write(M)) has identical contents.
    """
    path = Path(path)
    if format is None:
        format = path.suffix.lstrip(".").lower()
    if format == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for s in manifest:
                writer.writerow(
                    [s.id, s.path, s.label.value, s.generator.value,
                     s.medium.value, s.subject_id or ""]
                )
    elif format == "json":
        rows = [
            {
                "id": s.id,
                "path": s.path,
                "label": s.label.value,
                "generator": s.generator.value,
                "medium": s.medium.value,
                "subject_id": s.subject_id,
            }
            for s in manifest
        ]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        raise SchemaError(f"unsupported manifest format {format!r}")


def slice_manifest(
    manifest: Manifest,
    generator: Optional[Generator] = None,
    medium: Optional[Medium] = None,
) -> Manifest:
    """Sub-manifest for one evaluation cell.

    Morph samples must match both filters; bona fide samples are retained
    whenever their medium matches, regardless of the generator filter (the
    bona fide pool is shared across generators within a medium).
    """
    kept = []
    for s in manifest:
        if medium is not None and s.medium is not medium:
            continue
        if generator is not None and s.label is Label.MORPH and s.generator is not generator:
            continue
        kept.append(s)
    return replace(manifest, samples=tuple(kept))
