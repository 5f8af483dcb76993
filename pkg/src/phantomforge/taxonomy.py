"""Structure registry: names, IDs, groups, symmetric pairs, sex-specificity.

The bundled default covers 140 structures in four groups (body
composition 4, skeletal 62, abdominal 13, general 61) with 16 symmetric
bone pairs (12 rib pairs plus clavicles, scapulae, hip bones, femurs;
arm bones are present but deliberately unpaired) and a three-structure
skull-completeness trio.  All of it is plain JSON and fully editable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

GROUPS = ("composition", "skeletal", "abdominal", "general")
SEXES = ("male", "female")


class TaxonomyError(ValueError):
    """Invalid taxonomy description."""


@dataclass(frozen=True)
class StructureDef:
    id: int
    name: str
    group: str
    pair_id: int | None = None
    sex_specific: str | None = None
    expected: bool = True

    def __post_init__(self):
        if self.id < 1 or self.id > 0xFFFF:
            raise TaxonomyError(f"structure id {self.id} outside u16 range [1, 65535]")
        if self.group not in GROUPS:
            raise TaxonomyError(f"unknown group {self.group!r} for {self.name!r}")
        if self.sex_specific is not None and self.sex_specific not in SEXES:
            raise TaxonomyError(f"bad sex_specific {self.sex_specific!r}")
        if self.pair_id == self.id:
            raise TaxonomyError(f"structure {self.name!r} is paired with itself")


@dataclass(frozen=True)
class Taxonomy:
    structures: tuple[StructureDef, ...]
    symmetry_set: tuple[tuple[int, int], ...]
    skull_trio: tuple[int, int, int]
    by_id: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        by_id = {s.id: s for s in self.structures}
        object.__setattr__(self, "by_id", by_id)
        _validate(self)

    def name_of(self, structure_id: int) -> str:
        return self.by_id[structure_id].name

    def ids(self) -> list[int]:
        return [s.id for s in self.structures]

    def group_counts(self) -> dict[str, int]:
        counts = {g: 0 for g in GROUPS}
        for s in self.structures:
            counts[s.group] += 1
        return counts


def _validate(t: Taxonomy) -> None:
    ids = [s.id for s in t.structures]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise TaxonomyError(f"duplicate structure ids {dupes}")
    names = [s.name for s in t.structures]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise TaxonomyError(f"duplicate structure names {dupes}")
    for s in t.structures:
        if s.pair_id is None:
            continue
        partner = t.by_id.get(s.pair_id)
        if partner is None:
            raise TaxonomyError(f"{s.name!r} pairs with unknown id {s.pair_id}")
        if partner.pair_id != s.id:
            raise TaxonomyError(
                f"asymmetric pair: {s.name!r} -> {partner.name!r} is not reciprocated"
            )
        if partner.group != s.group:
            raise TaxonomyError(
                f"paired structures {s.name!r}/{partner.name!r} are in different groups"
            )
    for a, b in t.symmetry_set:
        if a not in t.by_id or b not in t.by_id:
            raise TaxonomyError(f"symmetry_set references unknown ids ({a}, {b})")
        if t.by_id[a].pair_id != b or t.by_id[b].pair_id != a:
            raise TaxonomyError(
                f"symmetry_set entry ({a}, {b}) is not a mutual pair in structures"
            )
    if len(t.skull_trio) != 3 or len(set(t.skull_trio)) != 3:
        raise TaxonomyError(f"skull_trio must be 3 distinct ids, got {t.skull_trio}")
    for sid in t.skull_trio:
        if sid not in t.by_id:
            raise TaxonomyError(f"skull_trio references unknown id {sid}")


def _from_dict(doc: dict) -> Taxonomy:
    structures = tuple(
        StructureDef(
            id=int(s["id"]),
            name=str(s["name"]),
            group=str(s["group"]),
            pair_id=int(s["pair_id"]) if s.get("pair_id") is not None else None,
            sex_specific=s.get("sex_specific"),
            expected=bool(s.get("expected", True)),
        )
        for s in doc["structures"]
    )
    symmetry = tuple((int(a), int(b)) for a, b in doc.get("symmetry_set", []))
    trio = tuple(int(i) for i in doc.get("skull_trio", []))
    return Taxonomy(structures=structures, symmetry_set=symmetry, skull_trio=trio)


def load_taxonomy(path: str | None = None) -> Taxonomy:
    """Load and validate a taxonomy JSON; without a path, the bundled default."""
    if path is None:
        text = (
            resources.files("phantomforge.data")
            .joinpath("default_taxonomy.json")
            .read_text()
        )
        return _from_dict(json.loads(text))
    with open(path) as fh:
        return _from_dict(json.load(fh))


def symmetric_pairs(t: Taxonomy) -> list[tuple[int, int]]:
    """Pairs used by the bilateral check, ordered by ascending left id."""
    return sorted(t.symmetry_set, key=lambda p: p[0])


def expected_structures(t: Taxonomy, sex: str = "unknown") -> set[int]:
    """IDs counted in zero-volume denominators for a patient of the given sex.

    Structures whose sex_specific contradicts ``sex`` are excluded;
    unknown sex excludes nothing.
    """
    out = set()
    for s in t.structures:
        if not s.expected:
            continue
        if sex in SEXES and s.sex_specific is not None and s.sex_specific != sex:
            continue
        out.add(s.id)
    return out
