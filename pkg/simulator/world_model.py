"""Static scene representation and partial-observability bookkeeping.

A ``Scene`` is immutable once built and is shared freely between rollout
workers. Everything that changes during an episode (object locations,
compartment doors, what the agent has seen) lives outside of it: object
locations in an ordered ``dict[str, Place]`` owned by the environment, and
visibility in a ``VisibilityState`` value.
"""
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Literal, Mapping, NamedTuple

from pydantic import BaseModel, ConfigDict

from simulator.errors import ActionParseError, SceneValidationError
from simulator.vocabulary import SIZES, Vocabulary, load_vocabulary

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class Size(str, Enum):
    SMALL = "small"
    LARGE = "large"


class ReceptacleKind(str, Enum):
    SURFACE = "surface"
    ARTICULATED = "articulated"


class Place(NamedTuple):
    """A receptacle surface (compartment None) or one compartment of it."""
    receptacle: str
    compartment: str | None = None


class Room(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    name: str


class Receptacle(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    name: str
    kind: ReceptacleKind
    sub_parts: tuple[str, ...] = ()
    room: str

    @property
    def is_articulated(self) -> bool:
        return self.kind is ReceptacleKind.ARTICULATED


class ObjectInstance(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str
    category: str
    color: str
    size: Size
    location: str
    compartment: str | None = None

    @property
    def place(self) -> Place:
        return Place(self.location, self.compartment)

    @property
    def name(self) -> str:
        """Short name used in world graphs and instructions, e.g. "red cup"."""
        return f"{self.color} {self.category}"

    @property
    def descriptor(self) -> str:
        """Full descriptor including size, e.g. "large red bowl"."""
        return f"{self.size.value} {self.color} {self.category}"


class Scene(BaseModel):
    """Rooms, receptacles, objects and the navigation graph.

    Derived lookups are cached on first use; build a new ``Scene`` instead of
    calling ``model_copy(update=...)`` so stale caches are never carried over.
    """
    model_config = ConfigDict(frozen=True)

    schema_version: Literal[1] = SCHEMA_VERSION
    id: str
    rooms: tuple[Room, ...]
    receptacles: tuple[Receptacle, ...]
    objects: tuple[ObjectInstance, ...]
    nav_edges: tuple[tuple[str, str], ...]

    # --- lookups -------------------------------------------------------

    @cached_property
    def _receptacle_index(self) -> dict[str, Receptacle]:
        return {r.id: r for r in self.receptacles}

    @cached_property
    def _object_index(self) -> dict[str, ObjectInstance]:
        return {o.id: o for o in self.objects}

    @cached_property
    def _place_names(self) -> dict[str, Place]:
        names: dict[str, Place] = {}
        for rec in self.receptacles:
            names[rec.name] = Place(rec.id, None)
            for part in rec.sub_parts:
                names[part] = Place(rec.id, part)
        return names

    @cached_property
    def _adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {r.id: [] for r in self.receptacles}
        for a, b in self.nav_edges:
            if a in adj and b in adj:
                adj[a].append(b)
                adj[b].append(a)
        return adj

    @cached_property
    def _hops(self) -> dict[str, dict[str, int]]:
        return {r.id: _bfs_hops(self._adjacency, r.id) for r in self.receptacles}

    def receptacle(self, receptacle_id: str) -> Receptacle:
        return self._receptacle_index[receptacle_id]

    def has_receptacle(self, receptacle_id: str) -> bool:
        return receptacle_id in self._receptacle_index

    def object(self, object_id: str) -> ObjectInstance:
        return self._object_index[object_id]

    def receptacle_by_name(self, name: str) -> Receptacle | None:
        place = self._place_names.get(name)
        if place is None or place.compartment is not None:
            return None
        return self.receptacle(place.receptacle)

    def place_by_name(self, name: str) -> Place | None:
        return self._place_names.get(name)

    def place_name(self, place: Place) -> str:
        if place.compartment is not None:
            return place.compartment
        return self.receptacle(place.receptacle).name

    def places(self) -> list[Place]:
        """Every place in scene-definition order: surface first, then compartments."""
        out = []
        for rec in self.receptacles:
            out.append(Place(rec.id, None))
            out.extend(Place(rec.id, part) for part in rec.sub_parts)
        return out

    def place_names(self) -> list[str]:
        return [self.place_name(p) for p in self.places()]

    def compartments(self) -> list[Place]:
        return [p for p in self.places() if p.compartment is not None]

    def hop_distance(self, a: str, b: str) -> int:
        return self._hops[a].get(b, 10**6)

    def neighbors(self, receptacle_id: str) -> list[str]:
        return list(self._adjacency[receptacle_id])

    def initial_locations(self) -> dict[str, Place]:
        return {o.id: o.place for o in self.objects}

    def categories(self) -> list[str]:
        return list(dict.fromkeys(o.category for o in self.objects))

    def objects_of(self, category: str) -> list[ObjectInstance]:
        return [o for o in self.objects if o.category == category]

    # --- serialization ------------------------------------------------

    def to_dict(self) -> dict:
        """Stable-order JSON document (schema_version 1)."""
        return {
            "schema_version": self.schema_version,
            "id": self.id,
            "rooms": [{"id": r.id, "name": r.name} for r in self.rooms],
            "receptacles": [
                {"id": r.id, "name": r.name, "kind": r.kind.value, "sub_parts": list(r.sub_parts), "room": r.room}
                for r in self.receptacles
            ],
            "objects": [
                {"id": o.id, "category": o.category, "color": o.color, "size": o.size.value,
                 "location": o.location, "compartment": o.compartment}
                for o in self.objects
            ],
            "nav_edges": [[a, b] for a, b in self.nav_edges],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Mapping) -> "Scene":
        return cls.model_validate(
            {**data, "nav_edges": [tuple(e) for e in data.get("nav_edges", [])]}
        )

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        return cls.from_dict(json.loads(text))


def _bfs_hops(adjacency: Mapping[str, list[str]], start: str) -> dict[str, int]:
    hops = {start: 0}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        for nxt in adjacency[node]:
            if nxt not in hops:
                hops[nxt] = hops[node] + 1
                queue.append(nxt)
    return hops


def validate_scene(scene: Scene, vocab: Vocabulary | None = None) -> Scene:
    """Check every structural invariant of a scene; return it unchanged or raise."""
    vocab = vocab or load_vocabulary()
    room_ids = {r.id for r in scene.rooms}
    rec_ids = [r.id for r in scene.receptacles]
    if len(set(rec_ids)) != len(rec_ids):
        raise SceneValidationError(f"scene {scene.id}: duplicate receptacle ids")
    obj_ids = [o.id for o in scene.objects]
    if len(set(obj_ids)) != len(obj_ids):
        raise SceneValidationError(f"scene {scene.id}: duplicate object ids")

    names: set[str] = set()
    for rec in scene.receptacles:
        if rec.room not in room_ids:
            raise SceneValidationError(f"receptacle {rec.id} references unknown room {rec.room}")
        if rec.kind is ReceptacleKind.SURFACE and rec.sub_parts:
            raise SceneValidationError(f"surface receptacle {rec.id} cannot have compartments")
        if rec.kind is ReceptacleKind.ARTICULATED and not rec.sub_parts:
            raise SceneValidationError(f"articulated receptacle {rec.id} has no compartments")
        for name in (rec.name, *rec.sub_parts):
            if name in names:
                raise SceneValidationError(f"place name {name!r} is not unique in scene {scene.id}")
            names.add(name)

    seen_at_receptacle: set[tuple[str, str, str, str]] = set()
    for obj in scene.objects:
        if not scene.has_receptacle(obj.location):
            raise SceneValidationError(f"object {obj.id} located at unknown receptacle {obj.location}")
        rec = scene.receptacle(obj.location)
        if obj.compartment is not None and obj.compartment not in rec.sub_parts:
            raise SceneValidationError(f"object {obj.id} in unknown compartment {obj.compartment}")
        if not vocab.is_known_pair(obj.color, obj.category):
            raise SceneValidationError(f"object {obj.id}: {obj.color} {obj.category} is not in the category table")
        key = (obj.location, obj.category, obj.color, obj.size.value)
        if key in seen_at_receptacle:
            raise SceneValidationError(
                f"two identical {obj.descriptor} instances on receptacle {rec.name}"
            )
        seen_at_receptacle.add(key)

    for a, b in scene.nav_edges:
        if not (scene.has_receptacle(a) and scene.has_receptacle(b)):
            raise SceneValidationError(f"nav edge ({a}, {b}) references an unknown receptacle")
    if rec_ids:
        reachable = _bfs_hops(scene._adjacency, rec_ids[0])
        if len(reachable) != len(rec_ids):
            raise SceneValidationError(f"nav graph of scene {scene.id} is not connected")
    return scene


# --- visibility --------------------------------------------------------


@dataclass(frozen=True)
class VisibilityState:
    """What the agent has observed so far. ``seen_order`` only ever grows."""
    visited_receptacles: frozenset[str] = frozenset()
    seen_order: tuple[str, ...] = ()
    opened_compartments: frozenset[str] = frozenset()

    @property
    def seen_objects(self) -> frozenset[str]:
        return frozenset(self.seen_order)


def mark_observed(
    scene: Scene,
    vis: VisibilityState,
    receptacle_id: str,
    compartment: str | None = None,
    *,
    locations: Mapping[str, Place] | None = None,
    open_compartments: Iterable[str] | None = None,
) -> VisibilityState:
    """Observe a receptacle, optionally opening one of its compartments.

    Objects become seen when they sit on the receptacle surface or inside a
    compartment that is open at observation time. ``open_compartments``
    defaults to every compartment ever opened.
    """
    if not scene.has_receptacle(receptacle_id):
        raise ActionParseError(f"unknown receptacle id {receptacle_id!r}")
    rec = scene.receptacle(receptacle_id)
    if compartment is not None and compartment not in rec.sub_parts:
        raise ActionParseError(f"{compartment!r} is not a compartment of {rec.name}")

    opened = vis.opened_compartments | {compartment} if compartment is not None else vis.opened_compartments
    currently_open = set(opened if open_compartments is None else open_compartments)
    if compartment is not None:
        currently_open.add(compartment)

    visible = {Place(rec.id, None)} | {Place(rec.id, part) for part in rec.sub_parts if part in currently_open}
    locations = scene.initial_locations() if locations is None else locations
    already = set(vis.seen_order)
    new_seen = [oid for oid, place in locations.items() if place in visible and oid not in already]
    return VisibilityState(
        visited_receptacles=vis.visited_receptacles | {rec.id},
        seen_order=vis.seen_order + tuple(new_seen),
        opened_compartments=opened,
    )


# --- text world graph ---------------------------------------------------


@dataclass(frozen=True)
class TextWorldGraph:
    """Receptacle listing plus place -> object names, prompt-block formatted."""
    receptacles: tuple[str, ...]
    placements: tuple[tuple[str, tuple[str, ...]], ...] = field(default_factory=tuple)

    def format(self) -> str:
        lines = [f"Receptacles: [{', '.join(self.receptacles)}]", "", "Receptacles with objects:"]
        lines.extend(f"{place}: [{', '.join(names)}]" for place, names in self.placements)
        return "\n".join(lines)

    def lines(self) -> list[str]:
        return [f"{place}: [{', '.join(names)}]" for place, names in self.placements]

    @classmethod
    def parse(cls, text: str) -> "TextWorldGraph":
        receptacles: tuple[str, ...] = ()
        placements: list[tuple[str, tuple[str, ...]]] = []
        in_block = False
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("Receptacles:"):
                receptacles = _split_list(line[len("Receptacles:"):])
            elif line == "Receptacles with objects:":
                in_block = True
            elif in_block and ":" in line:
                place, rest = line.split(":", 1)
                placements.append((place.strip(), _split_list(rest)))
        return cls(receptacles=receptacles, placements=tuple(placements))


def _split_list(text: str) -> tuple[str, ...]:
    inner = text.strip().removeprefix("[").removesuffix("]").strip()
    if not inner:
        return ()
    return tuple(part.strip() for part in inner.split(","))


def _world_graph(scene: Scene, locations: Mapping[str, Place], include: frozenset[str] | None) -> TextWorldGraph:
    by_place: dict[Place, list[str]] = {}
    for oid, place in locations.items():
        if include is not None and oid not in include:
            continue
        by_place.setdefault(place, []).append(scene.object(oid).name)
    placements = tuple(
        (scene.place_name(place), tuple(by_place[place])) for place in scene.places() if by_place.get(place)
    )
    return TextWorldGraph(receptacles=tuple(scene.place_names()), placements=placements)


def visible_world_graph(
    scene: Scene, vis: VisibilityState, locations: Mapping[str, Place] | None = None
) -> TextWorldGraph:
    """World graph restricted to objects the agent has seen."""
    locations = scene.initial_locations() if locations is None else locations
    return _world_graph(scene, locations, vis.seen_objects)


def full_world_graph(scene: Scene, locations: Mapping[str, Place] | None = None) -> TextWorldGraph:
    """World graph listing every object regardless of visibility."""
    locations = scene.initial_locations() if locations is None else locations
    return _world_graph(scene, locations, None)


def size_words() -> tuple[str, ...]:
    return SIZES
