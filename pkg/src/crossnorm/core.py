"""Domain types for two-species orthologous-gene count data.

All types are immutable after construction, so they can be shared freely
across parallel workers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

__all__ = [
    "GeneRecord",
    "OrthologTable",
    "ConservedSet",
    "ScalingFactor",
    "validate_table",
]


@dataclass(frozen=True)
class GeneRecord:
    """One orthologous gene: per-species gene length (bases) and mapped reads."""

    gene_id: str
    length_sp1: int
    length_sp2: int
    count_sp1: int
    count_sp2: int

    def __post_init__(self) -> None:
        if not self.gene_id:
            raise ValueError("gene_id must be a non-empty string")
        if self.length_sp1 < 1:
            raise ValueError(f"gene {self.gene_id!r}: length_sp1 must be >= 1")
        if self.length_sp2 < 1:
            raise ValueError(f"gene {self.gene_id!r}: length_sp2 must be >= 1")
        if self.count_sp1 < 0 or self.count_sp2 < 0:
            raise ValueError(f"gene {self.gene_id!r}: counts must be >= 0")

    @property
    def testable(self) -> bool:
        """Genes with zero reads in both species carry no testable signal."""
        return self.count_sp1 + self.count_sp2 > 0


@dataclass(frozen=True)
class OrthologTable:
    """The one-to-one ortholog set plus exact per-species read totals.

    Totals are integer sums over the retained records; records that are
    all-zero stay in the table (so totals match the input file) but are
    flagged untestable via :attr:`GeneRecord.testable`.
    """

    records: tuple[GeneRecord, ...]
    total_sp1: int
    total_sp2: int

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for rec in self.records:
            if rec.gene_id in seen:
                raise ValueError(f"duplicate gene_id {rec.gene_id!r}")
            seen.add(rec.gene_id)
        sum1 = sum(r.count_sp1 for r in self.records)
        sum2 = sum(r.count_sp2 for r in self.records)
        if (sum1, sum2) != (self.total_sp1, self.total_sp2):
            raise ValueError("stored totals do not match the record sums")
        if self.total_sp1 <= 0 or self.total_sp2 <= 0:
            raise ValueError("each species needs at least one mapped read")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[GeneRecord]:
        return iter(self.records)

    @property
    def gene_ids(self) -> tuple[str, ...]:
        return tuple(r.gene_id for r in self.records)


def validate_table(records: Iterable[GeneRecord]) -> OrthologTable:
    """Build a validated :class:`OrthologTable` with exact integer totals.

    Idempotent: validating the records of an already-valid table reproduces
    an equal table.
    """
    recs = tuple(records)
    total_sp1 = sum(r.count_sp1 for r in recs)
    total_sp2 = sum(r.count_sp2 for r in recs)
    return OrthologTable(records=recs, total_sp1=total_sp1, total_sp2=total_sp2)


@dataclass(frozen=True)
class ConservedSet:
    """Gene ids presumed non-differentially expressed between the species."""

    gene_ids: frozenset[str]

    def __post_init__(self) -> None:
        if not self.gene_ids:
            raise ValueError("a conserved set needs at least one gene")

    @property
    def m(self) -> int:
        return len(self.gene_ids)

    @classmethod
    def for_table(cls, gene_ids: Iterable[str], table: OrthologTable) -> "ConservedSet":
        """Validate that every id occurs in the companion table."""
        ids = frozenset(gene_ids)
        known = set(table.gene_ids)
        missing = ids - known
        if missing:
            some = ", ".join(sorted(missing)[:5])
            raise ValueError(f"{len(missing)} conserved gene id(s) not in table: {some}")
        return cls(gene_ids=ids)


@dataclass(frozen=True)
class ScalingFactor:
    """The dimensionless between-species scale c (total output sp2 / sp1)."""

    c: float

    def __post_init__(self) -> None:
        if not (self.c > 0.0) or self.c != self.c or self.c == float("inf"):
            raise ValueError(f"scaling factor must be positive and finite, got {self.c!r}")

    def __float__(self) -> float:
        return self.c
