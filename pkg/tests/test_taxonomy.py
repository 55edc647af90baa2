import math
from importlib import resources

import pytest
import yaml

from pannav.errors import DuplicateClassId, MissingUnknownClass, NegativeCost, RegistryError
from pannav.taxonomy import UNKNOWN_ID, UNKNOWN_OBJECT_ID, Kind, default_registry, dump_registry, load_registry


def test_default_registry_size():
    reg = default_registry()
    assert len(reg) == 35
    assert [s.class_id for s in reg] == sorted(s.class_id for s in reg)
    assert reg.get(UNKNOWN_ID).name == "unknown"


def test_named_classes_present():
    reg = default_registry()
    for name in ("bucket", "gripper", "self-arm", "container", "stone", "gravel-pile", "road", "gravel", "grass",
                 "person", "fence", "car", "building-other-merged"):
        reg.by_name(name)


def test_traversability_examples():
    reg = default_registry()
    for name in ("road", "gravel", "grass"):
        assert reg.by_name(name).traversable
    for name in ("person", "fence"):
        assert not reg.by_name(name).traversable
    assert reg.by_name("road").traverse_cost == 0.0
    assert reg.by_name("mud").traverse_cost == 5.0


def test_kinds():
    reg = default_registry()
    for name in ("bucket", "container", "car", "person", "machine"):
        assert reg.by_name(name).kind is Kind.THING
    for name in ("road", "fence", "gravel"):
        assert reg.by_name(name).kind is Kind.STUFF
    assert reg.is_thing(UNKNOWN_ID)


def test_duplicate_id():
    doc = """classes:
- {id: 0, name: unknown, kind: thing, traversable: false, cost: 10}
- {id: 7, name: a, kind: stuff, traversable: true, cost: 1}
- {id: 7, name: b, kind: stuff, traversable: true, cost: 1}
"""
    with pytest.raises(DuplicateClassId) as e:
        load_registry(doc)
    assert e.value.class_id == 7 and "7" in str(e.value)


def test_missing_unknown():
    with pytest.raises(MissingUnknownClass):
        load_registry("classes:\n- {id: 1, name: a, kind: stuff, traversable: true, cost: 1}\n")


def test_negative_and_zero_cost_rules():
    base = "classes:\n- {id: 0, name: unknown, kind: thing, traversable: false, cost: 10}\n"
    with pytest.raises(NegativeCost) as e:
        load_registry(base + "- {id: 3, name: neg, kind: stuff, traversable: true, cost: -1}\n")
    assert "neg" in str(e.value)
    with pytest.raises(NegativeCost):
        load_registry(base + "- {id: 3, name: z, kind: stuff, traversable: false, cost: 0}\n")
    with pytest.raises(NegativeCost):
        load_registry(base + "- {id: 3, name: z, kind: stuff, traversable: true, cost: .inf}\n")


def test_unknown_must_be_blocking_thing():
    with pytest.raises(RegistryError):
        load_registry("classes:\n- {id: 0, name: unknown, kind: thing, traversable: true, cost: 1}\n")


def test_roundtrip_bit_exact():
    reg = default_registry()
    text = dump_registry(reg)
    again = load_registry(text)
    assert again == reg
    assert dump_registry(again) == text


def test_luts_match_bundled_table():
    text = resources.files("pannav.data").joinpath("classes.yaml").read_text()
    table = yaml.safe_load(text)["classes"]
    reg = default_registry()
    trav, cost, thing = reg.traversable_lut(), reg.cost_lut(), reg.thing_lut()
    for e in table:
        assert trav[e["id"]] == e["traversable"]
        assert thing[e["id"]] == (e["kind"] == "thing")
        assert cost[e["id"]] == (float(e["cost"]) if e["traversable"] else math.inf)


def test_unknown_object_reserved():
    reg = default_registry()
    assert UNKNOWN_OBJECT_ID in reg
    spec = reg.get(UNKNOWN_OBJECT_ID)
    assert not spec.traversable and spec.is_thing
    assert reg.id_of("road") == 15
    with pytest.raises(KeyError):
        reg.id_of("nope")
