"""Episode records and the fixed instruction templates.

Instructions are rendered from three slot-filled templates and parsed back
into a ``TaskIntent``; agents only ever see the instruction text, never the
hidden ground truth stored on the ``EpisodeSpec``.
"""
import json
import re
from enum import Enum
from typing import Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field

from simulator.errors import InstructionParseError
from simulator.vocabulary import SIZES, Vocabulary, load_vocabulary
from simulator.world_model import Place, Scene

EPISODE_SCHEMA_VERSION = 1


class TaskFamily(str, Enum):
    NO_AMBIGUITY = "NoAmbiguity"
    ATTRIBUTE_RECOGNITION = "AttributeRecognition"
    SPATIAL_REASONING = "SpatialReasoning"
    OBJECT_SIZE = "ObjectSize"
    COMPOSITIONAL = "Compositional"
    CLEAN_CLUTTER = "CleanClutter"
    PREFERENCE_BASED = "PreferenceBased"

    @property
    def is_identification(self) -> bool:
        return self not in (TaskFamily.CLEAN_CLUTTER, TaskFamily.PREFERENCE_BASED)


class Difficulty(str, Enum):
    TRAIN = "train"
    UNSEEN_TASK = "unseen_task"


class TargetPlacement(BaseModel):
    model_config = ConfigDict(frozen=True)

    object_id: str
    receptacle: str
    compartment: str | None = None

    @property
    def place(self) -> Place:
        return Place(self.receptacle, self.compartment)


class PreferenceEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    category: str
    receptacle: str
    compartment: str | None = None

    @property
    def place(self) -> Place:
        return Place(self.receptacle, self.compartment)


class EpisodeSpec(BaseModel):
    """One episode: scene, instruction and the hidden ground truth."""
    model_config = ConfigDict(frozen=True)

    schema_version: Literal[1] = EPISODE_SCHEMA_VERSION
    id: str
    scene: Scene
    family: TaskFamily
    difficulty: Difficulty = Difficulty.TRAIN
    split: str = "train"
    instruction: str
    targets: tuple[TargetPlacement, ...]
    clutter_set: tuple[str, ...] = ()
    source_receptacle: str | None = None
    preferences: tuple[PreferenceEntry, ...] = ()
    distractors: tuple[str, ...] = ()
    K: int = Field(ge=0)
    budget: int = Field(ge=0)
    max_steps: int = Field(gt=0)
    start_receptacle: str
    seed: int = 0

    def preference_map(self) -> dict[str, Place]:
        return {p.category: p.place for p in self.preferences}

    def target_map(self) -> dict[str, Place]:
        return {t.object_id: t.place for t in self.targets}

    def with_budget(self, budget: int) -> "EpisodeSpec":
        data = self.model_dump(mode="json")
        data["budget"] = budget
        return EpisodeSpec.from_dict(data)

    def to_dict(self) -> dict:
        data = self.model_dump(mode="json", exclude={"scene"})
        data["scene"] = self.scene.to_dict()
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Mapping) -> "EpisodeSpec":
        payload = dict(data)
        payload["scene"] = Scene.from_dict(payload["scene"])
        return cls.model_validate(payload)


# --- instructions -------------------------------------------------------

FETCH_TEMPLATE = "Bring the {descriptor} and place it on the {destination}."
CLUTTER_TEMPLATE = "Clear the clutter from the {source} and put it away."
PREFERENCE_TEMPLATE = "Move all {group} to the {destination}."

_FETCH_RE = re.compile(r"^Bring the (?P<descriptor>.+?) and place it on the (?P<destination>.+)\.$")
_CLUTTER_RE = re.compile(r"^Clear the clutter from the (?P<source>.+?) and put it away\.$")
_PREFERENCE_RE = re.compile(r"^Move all (?P<group>.+?) to the (?P<destination>.+)\.$")


class Descriptor(BaseModel):
    """Partially specified object reference: "[size] [color] category"."""
    model_config = ConfigDict(frozen=True)

    category: str
    color: str | None = None
    size: str | None = None

    def render(self) -> str:
        return " ".join(part for part in (self.size, self.color, self.category) if part)

    def matches(self, obj) -> bool:
        return (
            obj.category == self.category
            and (self.color is None or obj.color == self.color)
            and (self.size is None or obj.size.value == self.size)
        )


def parse_descriptor(text: str, vocab: Vocabulary | None = None, allow_plural: bool = False) -> Descriptor | None:
    vocab = vocab or load_vocabulary()
    words = text.strip().split()
    if not words:
        return None
    category = vocab.singular(words[-1])
    if category is None or (not allow_plural and words[-1] != category):
        return None
    size = color = None
    rest = words[:-1]
    if rest and rest[0] in SIZES:
        size = rest.pop(0)
    if rest:
        if len(rest) != 1 or rest[0] not in vocab.colors:
            return None
        color = rest[0]
    return Descriptor(category=category, color=color, size=size)


class TaskIntent(BaseModel):
    """What an agent can read off the instruction text."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["fetch", "clear_clutter", "preference"]
    descriptor: Descriptor | None = None
    destination: str | None = None
    source: str | None = None
    group: str | None = None


def render_fetch(descriptor: Descriptor, destination: str) -> str:
    return FETCH_TEMPLATE.format(descriptor=descriptor.render(), destination=destination)


def render_clutter(source: str) -> str:
    return CLUTTER_TEMPLATE.format(source=source)


def render_preference(group: str, destination: str) -> str:
    return PREFERENCE_TEMPLATE.format(group=group, destination=destination)


def parse_instruction(text: str, vocab: Vocabulary | None = None) -> TaskIntent:
    vocab = vocab or load_vocabulary()
    if m := _FETCH_RE.match(text):
        descriptor = parse_descriptor(m["descriptor"], vocab)
        if descriptor is None:
            raise InstructionParseError(f"unknown object in instruction: {text!r}")
        return TaskIntent(kind="fetch", descriptor=descriptor, destination=m["destination"])
    if m := _CLUTTER_RE.match(text):
        return TaskIntent(kind="clear_clutter", source=m["source"])
    if m := _PREFERENCE_RE.match(text):
        if m["group"] not in vocab.groups:
            raise InstructionParseError(f"unknown category group in instruction: {text!r}")
        return TaskIntent(kind="preference", group=m["group"], destination=m["destination"])
    raise InstructionParseError(f"instruction does not follow a known template: {text!r}")
