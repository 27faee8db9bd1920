"""Static vocabulary: object categories, colours, sizes and receptacle pools.

Loaded once from the JSON files in ``knowledge_bases/``.
"""
import json
import logging
import os
from dataclasses import dataclass
from functools import lru_cache

logger = logging.getLogger(__name__)

KNOWLEDGE_BASE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "knowledge_bases")
CATEGORIES_PATH = os.path.join(KNOWLEDGE_BASE_DIR, "object_categories.json")
RECEPTACLES_PATH = os.path.join(KNOWLEDGE_BASE_DIR, "receptacles.json")

SIZES = ("small", "large")


@dataclass(frozen=True)
class CategoryInfo:
    category: str
    plural: str
    group: str
    colors: tuple[str, ...]


@dataclass(frozen=True)
class ReceptacleTemplate:
    name: str
    room: str
    sub_parts: tuple[str, ...] = ()

    @property
    def articulated(self) -> bool:
        return bool(self.sub_parts)


@dataclass(frozen=True)
class Vocabulary:
    categories: tuple[CategoryInfo, ...]
    extra_pairs: frozenset[tuple[str, str]]
    rooms: tuple[str, ...]
    surfaces: tuple[ReceptacleTemplate, ...]
    articulated: tuple[ReceptacleTemplate, ...]

    @property
    def category_names(self) -> tuple[str, ...]:
        return tuple(c.category for c in self.categories)

    @property
    def colors(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for info in self.categories:
            for color in info.colors:
                seen.setdefault(color, None)
        for color, _ in sorted(self.extra_pairs):
            seen.setdefault(color, None)
        return tuple(seen)

    @property
    def max_sub_parts(self) -> int:
        return max((len(t.sub_parts) for t in self.articulated), default=0)

    @property
    def groups(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(c.group for c in self.categories))

    def info(self, category: str) -> CategoryInfo:
        for c in self.categories:
            if c.category == category:
                return c
        raise KeyError(category)

    def is_known_pair(self, color: str, category: str) -> bool:
        """True when the colour/category pair is allowed anywhere in a scene."""
        try:
            table_colors = self.info(category).colors
        except KeyError:
            return False
        return color in table_colors or (color, category) in self.extra_pairs

    def table_pairs(self) -> list[tuple[str, str]]:
        """Pairs listed by the category table; generators draw only from these."""
        return [(color, c.category) for c in self.categories for color in c.colors]

    def categories_in_group(self, group: str) -> tuple[str, ...]:
        return tuple(c.category for c in self.categories if c.group == group)

    def plural(self, category: str) -> str:
        return self.info(category).plural

    def singular(self, word: str) -> str | None:
        """Map a singular or plural category word back to the category."""
        for c in self.categories:
            if word in (c.category, c.plural):
                return c.category
        return None

    @property
    def all_place_names(self) -> tuple[str, ...]:
        names = [t.name for t in self.surfaces]
        for t in self.articulated:
            names.append(t.name)
            names.extend(t.sub_parts)
        return tuple(names)

    @property
    def all_receptacle_names(self) -> tuple[str, ...]:
        return tuple(t.name for t in self.surfaces) + tuple(t.name for t in self.articulated)


@lru_cache(maxsize=1)
def load_vocabulary(categories_path: str = CATEGORIES_PATH, receptacles_path: str = RECEPTACLES_PATH) -> Vocabulary:
    with open(categories_path, "r", encoding="utf-8") as f:
        raw_categories = json.load(f)
    with open(receptacles_path, "r", encoding="utf-8") as f:
        raw_receptacles = json.load(f)

    categories = tuple(
        CategoryInfo(
            category=item["category"],
            plural=item["plural"],
            group=item["group"],
            colors=tuple(item["colors"]),
        )
        for item in raw_categories["categories"]
    )
    extra = frozenset((color, category) for color, category in raw_categories.get("extra_pairs_from_example_scene", []))
    surfaces = tuple(ReceptacleTemplate(name=r["name"], room=r["room"]) for r in raw_receptacles["surfaces"])
    articulated = tuple(
        ReceptacleTemplate(name=r["name"], room=r["room"], sub_parts=tuple(r["sub_parts"]))
        for r in raw_receptacles["articulated"]
    )
    vocab = Vocabulary(
        categories=categories,
        extra_pairs=extra,
        rooms=tuple(raw_receptacles["rooms"]),
        surfaces=surfaces,
        articulated=articulated,
    )
    logger.debug("Loaded vocabulary: %d categories, %d receptacle templates",
                 len(categories), len(surfaces) + len(articulated))
    return vocab
