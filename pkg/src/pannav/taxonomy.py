"""Class taxonomy registry ("things" vs "stuff", traversability metadata).

The registry document is YAML with one entry per class::

    classes:
    - {id: 0, name: unknown, kind: thing, traversable: false, cost: 10.0}
    - {id: 15, name: road, kind: stuff, traversable: true, cost: 0.0}

``id`` 0 is reserved for ``unknown``. Id 255 is reserved for the synthetic
``unknown-object`` class that marks unlabeled dynamic tracks in the grid map; it
is resolvable through :meth:`ClassRegistry.get` but is not part of the document.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import DuplicateClassId, MissingUnknownClass, NegativeCost, RegistryError

UNKNOWN_ID = 0
UNKNOWN_OBJECT_ID = 255


class Kind(enum.Enum):
    THING = "thing"
    STUFF = "stuff"


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    name: str
    kind: Kind
    traversable: bool
    traverse_cost: float

    @property
    def is_thing(self) -> bool:
        return self.kind is Kind.THING


_UNKNOWN_OBJECT = ClassSpec(UNKNOWN_OBJECT_ID, "unknown-object", Kind.THING, False, 10.0)


class ClassRegistry:
    """Immutable id -> :class:`ClassSpec` mapping, iterated in id order."""

    def __init__(self, specs):
        by_id: dict[int, ClassSpec] = {}
        for spec in specs:
            if spec.class_id in by_id:
                raise DuplicateClassId(spec.class_id)
            _check_spec(spec)
            by_id[spec.class_id] = spec
        if UNKNOWN_ID not in by_id:
            raise MissingUnknownClass()
        unknown = by_id[UNKNOWN_ID]
        if unknown.traversable or unknown.kind is not Kind.THING:
            raise RegistryError("class 0 must be a non-traversable thing")
        self._by_id = dict(sorted(by_id.items()))
        self._by_name = {s.name: s for s in self._by_id.values()}
        self._lut_traversable = np.zeros(256, dtype=bool)
        self._lut_cost = np.full(256, math.inf)
        self._lut_thing = np.ones(256, dtype=bool)
        for s in self._by_id.values():
            self._lut_traversable[s.class_id] = s.traversable
            self._lut_cost[s.class_id] = s.traverse_cost if s.traversable else math.inf
            self._lut_thing[s.class_id] = s.is_thing

    def __len__(self):
        return len(self._by_id)

    def __iter__(self):
        return iter(self._by_id.values())

    def __contains__(self, class_id):
        return class_id in self._by_id or class_id == UNKNOWN_OBJECT_ID

    def __eq__(self, other):
        return isinstance(other, ClassRegistry) and list(self) == list(other)

    def get(self, class_id: int) -> ClassSpec:
        if class_id == UNKNOWN_OBJECT_ID and class_id not in self._by_id:
            return _UNKNOWN_OBJECT
        return self._by_id[class_id]

    def by_name(self, name: str) -> ClassSpec:
        return self._by_name[name]

    def id_of(self, name_or_id) -> int:
        """Resolve a class name or integer id to an id present in the registry."""
        if isinstance(name_or_id, str):
            if name_or_id not in self._by_name:
                raise KeyError(f"unknown class name {name_or_id!r}")
            return self._by_name[name_or_id].class_id
        cid = int(name_or_id)
        if cid not in self:
            raise KeyError(f"unknown class id {cid}")
        return cid

    @property
    def ids(self) -> np.ndarray:
        return np.fromiter(self._by_id.keys(), dtype=np.int64)

    def is_thing(self, class_id: int) -> bool:
        return bool(self._lut_thing[class_id])

    # vectorised lookups over uint8 rasters
    def traversable_lut(self) -> np.ndarray:
        return self._lut_traversable.copy()

    def cost_lut(self) -> np.ndarray:
        return self._lut_cost.copy()

    def thing_lut(self) -> np.ndarray:
        return self._lut_thing.copy()


def _check_spec(spec: ClassSpec):
    if not (0 <= spec.class_id < UNKNOWN_OBJECT_ID):
        raise RegistryError(f"class id {spec.class_id} outside 0..254")
    c = spec.traverse_cost
    if not math.isfinite(c) or c < 0:
        raise NegativeCost(spec.name, c)
    if c == 0 and not spec.traversable:
        raise NegativeCost(spec.name, c)


def _spec_from_entry(entry, index) -> ClassSpec:
    try:
        kind = Kind(str(entry["kind"]).lower())
        cid = entry["id"]
        if isinstance(cid, bool) or not isinstance(cid, int):
            raise RegistryError(f"classes[{index}].id must be an integer")
        trav = entry["traversable"]
        if not isinstance(trav, bool):
            raise RegistryError(f"classes[{index}].traversable must be a boolean")
        return ClassSpec(cid, str(entry["name"]), kind, trav, float(entry["cost"]))
    except KeyError as exc:
        raise RegistryError(f"classes[{index}] missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise RegistryError(f"classes[{index}]: {exc}") from None


def load_registry(source=None) -> ClassRegistry:
    """Build a registry from a YAML document.

    ``source`` may be a path, YAML text, an already-parsed mapping, or ``None`` for
    the bundled default taxonomy.
    """
    if source is None:
        text = resources.files("pannav.data").joinpath("classes.yaml").read_text()
        doc = yaml.safe_load(text)
    elif isinstance(source, dict):
        doc = source
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).is_file()):
        doc = yaml.safe_load(Path(source).read_text())
    else:
        doc = yaml.safe_load(source)
    if not isinstance(doc, dict) or not isinstance(doc.get("classes"), list):
        raise RegistryError("registry document needs a top-level 'classes' list")
    return ClassRegistry(_spec_from_entry(e, i) for i, e in enumerate(doc["classes"]))


def dump_registry(registry: ClassRegistry) -> str:
    """Canonical YAML text; ``load_registry(dump_registry(r)) == r``."""
    lines = ["classes:"]
    for s in registry:
        lines.append(
            f"- {{id: {s.class_id}, name: {_yaml_str(s.name)}, kind: {s.kind.value}, "
            f"traversable: {'true' if s.traversable else 'false'}, cost: {float(s.traverse_cost)!r}}}"
        )
    return "\n".join(lines) + "\n"


def _yaml_str(name: str) -> str:
    # quote anything YAML might reinterpret
    plain = yaml.safe_dump(name, default_flow_style=True).strip()
    if plain.endswith("..."):
        plain = plain[: -3].strip()
    if yaml.safe_load(plain) == name and "," not in plain and "}" not in plain:
        return plain
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


_DEFAULT: ClassRegistry | None = None


def default_registry() -> ClassRegistry:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = load_registry()
    return _DEFAULT
