import json

import pytest

from phantomforge.taxonomy import (
    TaxonomyError,
    expected_structures,
    load_taxonomy,
    symmetric_pairs,
)


@pytest.fixture(scope="module")
def default():
    return load_taxonomy()


def test_default_counts(default):
    assert len(default.structures) == 140
    counts = default.group_counts()
    assert counts == {"composition": 4, "skeletal": 62, "abdominal": 13, "general": 61}
    assert len(default.symmetry_set) == 16
    assert len(default.skull_trio) == 3


def test_default_pairs_are_12_ribs_plus_girdle(default):
    pairs = symmetric_pairs(default)
    assert len(pairs) == 16
    names = [(default.name_of(a), default.name_of(b)) for a, b in pairs]
    ribs = [p for p in names if p[0].startswith("rib_")]
    assert len(ribs) == 12
    others = {p[0] for p in names if not p[0].startswith("rib_")}
    assert others == {"clavicle_left", "scapula_left", "hip_left", "femur_left"}
    # deterministic ascending-left order, no self pairs, no repeats
    lefts = [a for a, _ in pairs]
    assert lefts == sorted(lefts)
    seen = set()
    for a, b in pairs:
        assert a != b
        assert a not in seen and b not in seen
        seen.update((a, b))


def test_humerus_present_but_unpaired(default):
    humeri = [s for s in default.structures if s.name.startswith("humerus")]
    assert len(humeri) == 2
    assert all(s.pair_id is None for s in humeri)
    in_pairs = {i for pair in symmetric_pairs(default) for i in pair}
    assert not any(s.id in in_pairs for s in humeri)


def test_skull_trio(default):
    names = {default.name_of(i) for i in default.skull_trio}
    assert names == {"brain", "brainstem", "skull"}


def test_expected_structures_sex_filtering(default):
    male = expected_structures(default, "male")
    female = expected_structures(default, "female")
    unknown = expected_structures(default, "unknown")
    by_name = {s.name: s.id for s in default.structures}
    assert by_name["prostate"] not in female
    assert by_name["seminal_vesicles"] not in female
    assert by_name["uterus"] not in male
    assert by_name["prostate"] in male
    assert len(unknown) == 140
    # union within all-expected, symmetric difference == sex-specific ids
    assert male | female == unknown
    sex_specific = {s.id for s in default.structures if s.sex_specific}
    assert male ^ female == sex_specific


def test_all_expected_false_gives_empty_set(tmp_path):
    doc = {
        "structures": [
            {"id": 1, "name": "a", "group": "general", "expected": False},
            {"id": 2, "name": "b", "group": "general", "expected": False},
            {"id": 3, "name": "c", "group": "general", "expected": True},
        ],
        "symmetry_set": [],
        "skull_trio": [1, 2, 3],
    }
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    t = load_taxonomy(str(path))
    assert expected_structures(t, "unknown") == {3}
    assert symmetric_pairs(t) == []


def test_minimal_two_structure_pair(tmp_path):
    doc = {
        "structures": [
            {"id": 1, "name": "left", "group": "skeletal", "pair_id": 2},
            {"id": 2, "name": "right", "group": "skeletal", "pair_id": 1},
            {"id": 3, "name": "x", "group": "general"},
            {"id": 4, "name": "y", "group": "general"},
            {"id": 5, "name": "z", "group": "general"},
        ],
        "symmetry_set": [[1, 2]],
        "skull_trio": [3, 4, 5],
    }
    path = tmp_path / "t.json"
    path.write_text(json.dumps(doc))
    assert symmetric_pairs(load_taxonomy(str(path))) == [(1, 2)]


@pytest.mark.parametrize(
    "mutation, match",
    [
        (lambda d: d["structures"][1].pop("pair_id"), "not reciprocated"),
        (lambda d: d["structures"].append(
            {"id": 1, "name": "dup", "group": "general"}), "duplicate structure ids"),
        (lambda d: d["structures"].append(
            {"id": 9, "name": "left", "group": "general"}), "duplicate structure names"),
        (lambda d: d.update(skull_trio=[3, 4, 99]), "unknown id 99"),
        (lambda d: d.update(skull_trio=[3, 3, 4]), "distinct"),
        (lambda d: d["structures"][1].update(group="general"), "different groups"),
    ],
)
def test_validation_errors(tmp_path, mutation, match):
    doc = {
        "structures": [
            {"id": 1, "name": "left", "group": "skeletal", "pair_id": 2},
            {"id": 2, "name": "right", "group": "skeletal", "pair_id": 1},
            {"id": 3, "name": "x", "group": "general"},
            {"id": 4, "name": "y", "group": "general"},
            {"id": 5, "name": "z", "group": "general"},
        ],
        "symmetry_set": [],
        "skull_trio": [3, 4, 5],
    }
    mutation(doc)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(TaxonomyError, match=match):
        load_taxonomy(str(path))
