"""Core data model: blocks, tables, target pairs, and validation.

A block is the smallest unit: an id, a planar centroid (projected CRS,
meters), seven land-use shares, a site area, and optionally the two
density indices (fsi = floor area / site area, gsi = footprint area /
site area). Tables are immutable after construction; all numeric views
are cached NumPy arrays with missing targets encoded as NaN.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateAreaError

SHARE_NAMES = (
    "share_residential",
    "share_recreation",
    "share_business",
    "share_industrial",
    "share_transport",
    "share_special",
    "share_agricultural",
)

LAND_USE_CATEGORIES = (
    "residential",
    "recreational",
    "business",
    "industrial",
    "transport",
    "special",
    "agricultural",
)

#: Shares and gsi slightly above 1 occur in real block data (overlapping
#: functional zones); values up to this bound are accepted as-is.
SHARE_UPPER_BOUND = 1.1

#: Site areas at or below this are physically implausible -> warning.
TINY_AREA_THRESHOLD = 1e-6


@dataclass(frozen=True)
class TargetPair:
    """The two density indices of a block, dimensionless and >= 0."""

    fsi: float
    gsi: float


@dataclass(frozen=True)
class BlockRecord:
    id: str
    centroid: tuple[float, float]
    shares: tuple[float, float, float, float, float, float, float]
    site_area: float
    fsi: float | None = None
    gsi: float | None = None

    @property
    def has_targets(self) -> bool:
        return self.fsi is not None and self.gsi is not None


@dataclass(frozen=True)
class Violation:
    """One invariant violation found by :func:`validate_table`.

    severity is "error" (reject at load) or "warning" (log and keep).
    """

    block_id: str | None
    field: str
    message: str
    severity: str = "error"


class BlockTable:
    """Ordered, immutable collection of blocks with cached array views.

    The positional order is the insertion order of ``records``; the cached
    arrays are marked read-only so downstream code cannot mutate shared
    state.
    """

    def __init__(self, records: Iterable[BlockRecord]):
        self.records: tuple[BlockRecord, ...] = tuple(records)
        index: dict[str, int] = {}
        for pos, rec in enumerate(self.records):
            index.setdefault(rec.id, pos)
        self.index = index
        self._arrays: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, block_id: str) -> BlockRecord:
        return self.records[self.index[block_id]]

    # -- cached numeric views -------------------------------------------

    def _build_arrays(self) -> dict[str, np.ndarray]:
        n = len(self.records)
        coords = np.empty((n, 2), dtype=np.float64)
        shares = np.empty((n, 7), dtype=np.float64)
        area = np.empty(n, dtype=np.float64)
        fsi = np.full(n, np.nan, dtype=np.float64)
        gsi = np.full(n, np.nan, dtype=np.float64)
        for i, rec in enumerate(self.records):
            coords[i] = rec.centroid
            shares[i] = rec.shares
            area[i] = rec.site_area
            if rec.fsi is not None:
                fsi[i] = rec.fsi
            if rec.gsi is not None:
                gsi[i] = rec.gsi
        arrays = {"coords": coords, "shares": shares, "site_area": area, "fsi": fsi, "gsi": gsi}
        for arr in arrays.values():
            arr.setflags(write=False)
        return arrays

    def _array(self, name: str) -> np.ndarray:
        if self._arrays is None:
            self._arrays = self._build_arrays()
        return self._arrays[name]

    @property
    def coords(self) -> np.ndarray:
        return self._array("coords")

    @property
    def shares(self) -> np.ndarray:
        return self._array("shares")

    @property
    def site_area(self) -> np.ndarray:
        return self._array("site_area")

    @property
    def fsi(self) -> np.ndarray:
        """fsi per block, NaN where missing."""
        return self._array("fsi")

    @property
    def gsi(self) -> np.ndarray:
        return self._array("gsi")

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(rec.id for rec in self.records)

    def observed_positions(self) -> np.ndarray:
        """Positions of blocks with both targets present."""
        return np.flatnonzero(~np.isnan(self.fsi) & ~np.isnan(self.gsi))

    def missing_positions(self) -> np.ndarray:
        """Positions of blocks with at least one target absent."""
        return np.flatnonzero(np.isnan(self.fsi) | np.isnan(self.gsi))

    def with_hidden(
        self,
        positions: Sequence[int],
        gsi_positions: Sequence[int] | None = None,
    ) -> "BlockTable":
        """Return a copy with targets removed at the given positions.

        With one argument both targets are hidden jointly; passing
        ``gsi_positions`` hides fsi at ``positions`` and gsi at
        ``gsi_positions`` independently.
        """
        fsi_hide = set(int(p) for p in positions)
        gsi_hide = fsi_hide if gsi_positions is None else set(int(p) for p in gsi_positions)
        records = list(self.records)
        for p in fsi_hide | gsi_hide:
            rec = records[p]
            records[p] = BlockRecord(
                id=rec.id,
                centroid=rec.centroid,
                shares=rec.shares,
                site_area=rec.site_area,
                fsi=None if p in fsi_hide else rec.fsi,
                gsi=None if p in gsi_hide else rec.gsi,
            )
        return BlockTable(records)

    def fingerprint(self) -> str:
        """SHA-256 over ids and all numeric content (NaN for missing)."""
        h = hashlib.sha256()
        for rec in self.records:
            h.update(rec.id.encode("utf-8"))
            h.update(b"\x00")
        h.update(np.ascontiguousarray(self.coords).tobytes())
        h.update(np.ascontiguousarray(self.shares).tobytes())
        h.update(self.site_area.tobytes())
        h.update(self.fsi.tobytes())
        h.update(self.gsi.tobytes())
        return h.hexdigest()


def _finite(x: float) -> bool:
    return math.isfinite(x)


def validate_table(table: BlockTable) -> list[Violation]:
    """Check every block invariant; returns violations, empty when valid.

    Violations are data, not failures: the function never raises. The
    verdict per row does not depend on row order (duplicate-id reports
    point at every later occurrence of an already-seen id).
    """
    violations: list[Violation] = []
    seen: dict[str, int] = {}
    for pos, rec in enumerate(table.records):
        if rec.id in seen:
            violations.append(
                Violation(rec.id, "id", f"duplicate block id at positions {seen[rec.id]} and {pos}")
            )
        else:
            seen[rec.id] = pos

        x, y = rec.centroid
        if not (_finite(x) and _finite(y)):
            violations.append(Violation(rec.id, "centroid", "centroid coordinates must be finite"))

        for name, value in zip(SHARE_NAMES, rec.shares):
            if not _finite(value):
                violations.append(Violation(rec.id, name, "share must be finite"))
            elif value < 0:
                violations.append(Violation(rec.id, name, f"share {value} is negative"))
            elif value > SHARE_UPPER_BOUND:
                violations.append(
                    Violation(rec.id, name, f"share {value} exceeds tolerated bound {SHARE_UPPER_BOUND}")
                )

        if not _finite(rec.site_area):
            violations.append(Violation(rec.id, "site_area", "site area must be finite"))
        elif rec.site_area <= 0:
            violations.append(Violation(rec.id, "site_area", f"site area {rec.site_area} must be > 0"))
        elif rec.site_area <= TINY_AREA_THRESHOLD:
            violations.append(
                Violation(
                    rec.id,
                    "site_area",
                    f"site area {rec.site_area} m^2 is implausibly small",
                    severity="warning",
                )
            )

        for name, value in (("fsi", rec.fsi), ("gsi", rec.gsi)):
            if value is None:
                continue
            if not _finite(value):
                violations.append(Violation(rec.id, name, f"{name} must be finite"))
            elif value < 0:
                violations.append(Violation(rec.id, name, f"{name} {value} is negative"))

        if (rec.fsi is None) != (rec.gsi is None):
            violations.append(
                Violation(rec.id, "fsi" if rec.fsi is None else "gsi",
                          "only one of fsi/gsi is present", severity="warning")
            )
    return violations


def compute_fsi_gsi(total_floor_area: float, footprint_area: float, site_area: float) -> TargetPair:
    """Density indices from raw areas (all in square meters).

    fsi = total floor area / site area, gsi = footprint area / site area.
    Scaling all three areas by the same positive factor leaves the result
    unchanged.
    """
    if not _finite(site_area) or site_area <= 0:
        raise DegenerateAreaError(f"site_area must be positive and finite, got {site_area}")
    if total_floor_area < 0 or footprint_area < 0:
        raise ValueError("areas must be >= 0")
    return TargetPair(fsi=total_floor_area / site_area, gsi=footprint_area / site_area)
