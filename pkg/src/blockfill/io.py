"""Table ingestion and emission.

CSV is the canonical interchange format; GeoJSON ingestion is a
convenience that reduces geometry to centroids. Floats are written with
``repr`` (shortest round-trip), so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

from .errors import DataError, ParseError, SchemaError
from .model import SHARE_NAMES, BlockRecord, BlockTable, validate_table

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "block_id",
    "x",
    "y",
    *SHARE_NAMES,
    "site_area",
    "fsi",
    "gsi",
)

_FLAG_COLUMNS = ("fsi_imputed_flag", "gsi_imputed_flag")


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _parse_float(text: str, column: str, locus: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{locus}: column {column!r}: cannot parse {text!r} as a number") from None
    return value


def _parse_target(text: str, column: str, locus: str) -> float | None:
    if text.strip() == "":
        return None
    value = _parse_float(text, column, locus)
    return None if value != value else value  # NaN cell means missing


def _record_from_fields(fields: dict[str, str], locus: str) -> BlockRecord:
    return BlockRecord(
        id=fields["block_id"],
        centroid=(
            _parse_float(fields["x"], "x", locus),
            _parse_float(fields["y"], "y", locus),
        ),
        shares=tuple(_parse_float(fields[c], c, locus) for c in SHARE_NAMES),
        site_area=_parse_float(fields["site_area"], "site_area", locus),
        fsi=_parse_target(fields["fsi"], "fsi", locus),
        gsi=_parse_target(fields["gsi"], "gsi", locus),
    )


def _check_violations(table: BlockTable, source: str) -> None:
    violations = validate_table(table)
    errors = [v for v in violations if v.severity == "error"]
    for v in violations:
        if v.severity == "warning":
            logger.warning("%s: block %s field %s: %s", source, v.block_id, v.field, v.message)
    if errors:
        head = "; ".join(f"block {v.block_id} field {v.field}: {v.message}" for v in errors[:5])
        more = f" (+{len(errors) - 5} more)" if len(errors) > 5 else ""
        raise DataError(f"{source}: {len(errors)} invariant violations: {head}{more}")


def load_csv(path: str | Path) -> BlockTable:
    path = Path(path)
    records = []
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required columns: {', '.join(missing)}")
        extra = [c for c in header if c not in CSV_COLUMNS and c not in _FLAG_COLUMNS]
        if extra:
            logger.warning("%s: ignoring extra columns: %s", path, ", ".join(extra))
        col = {name: header.index(name) for name in CSV_COLUMNS}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            locus = f"{path}:{lineno}"
            if len(row) != len(header):
                raise ParseError(f"{locus}: expected {len(header)} cells, got {len(row)}")
            fields = {name: row[col[name]] for name in CSV_COLUMNS}
            records.append(_record_from_fields(fields, locus))
    table = BlockTable(records)
    _check_violations(table, str(path))
    return table


def _polygon_centroid(coordinates) -> tuple[float, float]:
    """Arithmetic mean of the exterior ring's vertices."""
    ring = coordinates[0]
    if len(ring) > 1 and ring[0] == ring[-1]:
        ring = ring[:-1]
    xs = [float(p[0]) for p in ring]
    ys = [float(p[1]) for p in ring]
    return (sum(xs) / len(xs), sum(ys) / len(ys))


def load_geojson(path: str | Path) -> BlockTable:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from None
    crs_name = json.dumps(doc.get("crs", {}))
    if "4326" in crs_name or "CRS84" in crs_name:
        raise ParseError(f"{path}: geographic (lat/lon) coordinates are not supported; reproject first")
    if doc.get("type") != "FeatureCollection":
        raise ParseError(f"{path}: expected a FeatureCollection")
    records = []
    needed = [c for c in CSV_COLUMNS if c not in ("x", "y", "fsi", "gsi")]
    for i, feature in enumerate(doc.get("features", [])):
        locus = f"{path}: feature {i}"
        props = feature.get("properties") or {}
        absent = [c for c in needed if c not in props]
        if absent:
            raise SchemaError(f"{locus}: missing properties: {', '.join(absent)}")
        geom = feature.get("geometry") or {}
        gtype = geom.get("type")
        if gtype == "Point":
            x, y = (float(geom["coordinates"][0]), float(geom["coordinates"][1]))
        elif gtype == "Polygon":
            x, y = _polygon_centroid(geom["coordinates"])
        else:
            raise ParseError(f"{locus}: unsupported geometry type {gtype!r}")

        def target(name):
            value = props.get(name)
            if value is None or value == "":
                return None
            return float(value)

        records.append(
            BlockRecord(
                id=str(props["block_id"]),
                centroid=(x, y),
                shares=tuple(float(props[c]) for c in SHARE_NAMES),
                site_area=float(props["site_area"]),
                fsi=target("fsi"),
                gsi=target("gsi"),
            )
        )
    table = BlockTable(records)
    _check_violations(table, str(path))
    return table


def load_table(path: str | Path, fmt: str | None = None) -> BlockTable:
    """Load a block table from CSV or GeoJSON (by flag or extension)."""
    path = Path(path)
    if fmt is None:
        fmt = "geojson" if path.suffix.lower() in (".geojson", ".json") else "csv"
    if fmt == "csv":
        return load_csv(path)
    if fmt == "geojson":
        return load_geojson(path)
    raise DataError(f"unknown format {fmt!r} (expected csv or geojson)")


def save_table(path: str | Path, table: BlockTable) -> None:
    path = Path(path)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for rec in table.records:
            writer.writerow(
                [
                    rec.id,
                    repr(float(rec.centroid[0])),
                    repr(float(rec.centroid[1])),
                    *[repr(float(s)) for s in rec.shares],
                    repr(float(rec.site_area)),
                    _fmt(rec.fsi),
                    _fmt(rec.gsi),
                ]
            )


def save_imputed(path: str | Path, table: BlockTable, imputed: dict, provenance: dict) -> None:
    """Write the table with missing targets filled plus imputation flags.

    A sidecar ``<path>.meta.json`` records the provenance (method,
    config hash, seed, timestamp). Flag columns are true exactly where a
    value was originally missing and has been filled.
    """
    path = Path(path)
    missing_ids = {table.records[int(p)].id for p in table.missing_positions()}
    unknown = set(imputed) - missing_ids
    if unknown:
        raise DataError(f"imputed keys are not missing blocks: {sorted(unknown)[:5]}")
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([*CSV_COLUMNS, *_FLAG_COLUMNS])
        for rec in table.records:
            fsi, gsi = rec.fsi, rec.gsi
            fsi_flag = gsi_flag = False
            pred = imputed.get(rec.id)
            if pred is not None:
                if fsi is None:
                    fsi, fsi_flag = pred.fsi, True
                if gsi is None:
                    gsi, gsi_flag = pred.gsi, True
            writer.writerow(
                [
                    rec.id,
                    repr(float(rec.centroid[0])),
                    repr(float(rec.centroid[1])),
                    *[repr(float(s)) for s in rec.shares],
                    repr(float(rec.site_area)),
                    _fmt(fsi),
                    _fmt(gsi),
                    "true" if fsi_flag else "false",
                    "true" if gsi_flag else "false",
                ]
            )
    sidecar = Path(str(path) + ".meta.json")
    sidecar.write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")
