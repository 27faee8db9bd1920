"""Procedural scenes, the seven ambiguous task families and evaluation splits.

Every function here is a pure function of its seed and config. An episode is
generated on top of a base scene layout: the receptacles and navigation graph
are kept, background objects of the task's categories are removed and the
task objects are injected, so each family's ambiguity is exactly the one the
generator intended.
"""
import logging
from collections import Counter, deque
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict
from tqdm import tqdm

from simulator.dialogue import (
    AnswerKey,
    GroundedQuestion,
    Template,
    answer_under,
    initial_hypothesis,
    question_universe,
    true_hypothesis,
)
from simulator.episode import (
    Descriptor,
    Difficulty,
    EpisodeSpec,
    PreferenceEntry,
    TargetPlacement,
    TaskFamily,
    render_clutter,
    render_fetch,
    render_preference,
)
from simulator.errors import SceneGenerationError, SearchLimitError, TaskGenerationError
from simulator.vocabulary import SIZES, Vocabulary, load_vocabulary
from simulator.world_model import (
    ObjectInstance,
    Place,
    Receptacle,
    ReceptacleKind,
    Room,
    Scene,
    validate_scene,
)
from utils.config import DatasetConfig, SceneConfig

logger = logging.getLogger(__name__)

MAX_K = 7
FAMILY_INDEX = {family: i for i, family in enumerate(TaskFamily)}
SPLITS = ("train", "unseen_scenes", "unseen_tasks")

# candidate-set sizes per difficulty; unseen tasks draw one of the listed sizes
CANDIDATES = {
    TaskFamily.ATTRIBUTE_RECOGNITION: {Difficulty.TRAIN: (2,), Difficulty.UNSEEN_TASK: (3, 4)},
    TaskFamily.SPATIAL_REASONING: {Difficulty.TRAIN: (2,), Difficulty.UNSEEN_TASK: (3, 4)},
    TaskFamily.OBJECT_SIZE: {Difficulty.TRAIN: (2,), Difficulty.UNSEEN_TASK: (3, 4)},
    TaskFamily.COMPOSITIONAL: {Difficulty.TRAIN: (3,), Difficulty.UNSEEN_TASK: (4,)},
    TaskFamily.CLEAN_CLUTTER: {Difficulty.TRAIN: (3,), Difficulty.UNSEEN_TASK: (4,)},
    TaskFamily.PREFERENCE_BASED: {Difficulty.TRAIN: (2,), Difficulty.UNSEEN_TASK: (3, 4)},
}


def _rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng([int(k) for k in keys])


def _pick(rng: np.random.Generator, items):
    items = list(items)
    return items[int(rng.integers(len(items)))]


def _room_id(name: str) -> str:
    return "room_" + name.replace(" ", "_")


# --- placement bookkeeping ---------------------------------------------------


@dataclass
class _Draft:
    category: str
    color: str
    size: str
    place: Place


class _Occupancy:
    """Per-place object counts and the identical-instance rule per receptacle."""

    def __init__(self, max_per_place: int):
        self.max_per_place = max_per_place
        self.counts: Counter = Counter()
        self.keys: set[tuple[str, str, str, str]] = set()

    def fits(self, draft: _Draft) -> bool:
        key = (draft.place.receptacle, draft.category, draft.color, draft.size)
        return self.counts[draft.place] < self.max_per_place and key not in self.keys

    def add(self, draft: _Draft) -> None:
        self.counts[draft.place] += 1
        self.keys.add((draft.place.receptacle, draft.category, draft.color, draft.size))


def _draft_of(obj: ObjectInstance) -> _Draft:
    return _Draft(obj.category, obj.color, obj.size.value, obj.place)


def _build_objects(drafts: list[_Draft]) -> tuple[ObjectInstance, ...]:
    return tuple(
        ObjectInstance(
            id=f"obj_{i:02d}",
            category=d.category,
            color=d.color,
            size=d.size,
            location=d.place.receptacle,
            compartment=d.place.compartment,
        )
        for i, d in enumerate(drafts)
    )


# --- scenes ----------------------------------------------------------------------


def generate_scene(seed: int, config: SceneConfig | None = None, scene_id: str | None = None,
                   vocab: Vocabulary | None = None) -> Scene:
    """Random receptacle layout, connected navigation graph and background objects."""
    config = config or SceneConfig()
    vocab = vocab or load_vocabulary()
    n_articulated = config.num_articulated
    n_surfaces = config.num_receptacles - n_articulated
    if config.num_receptacles < 4:
        raise SceneGenerationError(f"a scene needs at least 4 receptacles, got {config.num_receptacles}")
    if n_articulated < 1:
        raise SceneGenerationError("a scene needs at least 1 articulated receptacle")
    if n_articulated > len(vocab.articulated) or n_surfaces > len(vocab.surfaces):
        raise SceneGenerationError(
            f"receptacle pools hold {len(vocab.surfaces)} surfaces and {len(vocab.articulated)} "
            f"articulated receptacles; requested {n_surfaces} and {n_articulated}"
        )
    if n_surfaces < 2:
        raise SceneGenerationError("a scene needs at least 2 surface receptacles")

    rng = _rng(seed)
    surface_idx = sorted(rng.choice(len(vocab.surfaces), size=n_surfaces, replace=False).tolist())
    articulated_idx = sorted(rng.choice(len(vocab.articulated), size=n_articulated, replace=False).tolist())
    templates = [vocab.surfaces[i] for i in surface_idx] + [vocab.articulated[i] for i in articulated_idx]
    templates = [templates[i] for i in rng.permutation(len(templates)).tolist()]

    receptacles = tuple(
        Receptacle(
            id=f"rec_{i:02d}",
            name=t.name,
            kind=ReceptacleKind.ARTICULATED if t.articulated else ReceptacleKind.SURFACE,
            sub_parts=t.sub_parts,
            room=_room_id(t.room),
        )
        for i, t in enumerate(templates)
    )
    room_names = list(dict.fromkeys(t.room for t in templates))
    rooms = tuple(Room(id=_room_id(name), name=name) for name in room_names)

    ids = [r.id for r in receptacles]
    edges: list[tuple[str, str]] = []
    for i in range(1, len(ids)):
        edges.append((ids[int(rng.integers(i))], ids[i]))
    existing = {frozenset(e) for e in edges}
    for _ in range(config.extra_edges):
        a, b = rng.choice(len(ids), size=2, replace=False).tolist()
        if frozenset((ids[a], ids[b])) not in existing:
            existing.add(frozenset((ids[a], ids[b])))
            edges.append((ids[a], ids[b]))

    places = [Place(r.id, None) for r in receptacles] + [Place(r.id, p) for r in receptacles for p in r.sub_parts]
    capacity = len(places) * config.max_objects_per_place
    if config.num_objects > min(capacity, config.max_objects):
        raise SceneGenerationError(
            f"{config.num_objects} objects exceed capacity {min(capacity, config.max_objects)}"
        )

    occupancy = _Occupancy(config.max_objects_per_place)
    pairs = vocab.table_pairs()
    drafts: list[_Draft] = []
    attempts = 0
    while len(drafts) < config.num_objects:
        attempts += 1
        if attempts > 1000 * max(config.num_objects, 1):
            raise SceneGenerationError("could not place background objects")
        color, category = _pick(rng, pairs)
        draft = _Draft(category, color, _pick(rng, SIZES), _pick(rng, places))
        if occupancy.fits(draft):
            occupancy.add(draft)
            drafts.append(draft)

    scene = Scene(
        id=scene_id or f"scene_{seed}",
        rooms=rooms,
        receptacles=receptacles,
        objects=_build_objects(drafts),
        nav_edges=tuple(edges),
    )
    return validate_scene(scene, vocab)


def layout_signature(scene: Scene) -> tuple:
    return (
        tuple(r.name for r in scene.receptacles),
        tuple(sorted(tuple(sorted(e)) for e in scene.nav_edges)),
    )


# --- episodes ----------------------------------------------------------------


@dataclass
class _TaskPlan:
    drafts: list[_Draft]
    instruction: str
    targets: list[tuple[int, Place]]
    distractors: list[int]
    clutter: list[int]
    source: str | None
    preferences: list[tuple[str, Place]]
    drop_places: set[Place]


def _surfaces(scene: Scene) -> list[Receptacle]:
    return [r for r in scene.receptacles if not r.is_articulated]


def _place_on(rng: np.random.Generator, rec: Receptacle) -> Place:
    if rec.is_articulated and rng.random() < 0.5:
        return Place(rec.id, _pick(rng, rec.sub_parts))
    return Place(rec.id, None)


def _fetch_destination(rng, scene: Scene, family: TaskFamily, target_receptacle: str) -> Receptacle:
    options = [r for r in _surfaces(scene) if r.id != target_receptacle]
    if not options:
        raise TaskGenerationError(family.value, "a surface receptacle other than the target's to deliver to")
    return _pick(rng, options)


def _fetch_plan(rng, scene: Scene, family: TaskFamily, drafts: list[_Draft], target: int,
                descriptor: Descriptor) -> _TaskPlan:
    dest = _fetch_destination(rng, scene, family, drafts[target].place.receptacle)
    return _TaskPlan(
        drafts=drafts,
        instruction=render_fetch(descriptor, dest.name),
        targets=[(target, Place(dest.id, None))],
        distractors=[i for i in range(len(drafts)) if i != target],
        clutter=[],
        source=None,
        preferences=[],
        drop_places=set(),
    )


def _n_candidates(rng, family: TaskFamily, difficulty: Difficulty) -> int:
    return int(_pick(rng, CANDIDATES[family][difficulty]))


def _plan_no_ambiguity(rng, scene, vocab, difficulty) -> _TaskPlan:
    family = TaskFamily.NO_AMBIGUITY
    info = _pick(rng, vocab.categories)
    color = _pick(rng, info.colors)
    drafts = [_Draft(info.category, color, _pick(rng, SIZES), _place_on(rng, _pick(rng, scene.receptacles)))]
    others = [c for c in info.colors if c != color]
    if others and rng.random() < 0.5:
        rec = _pick(rng, scene.receptacles)
        drafts.append(_Draft(info.category, _pick(rng, others), _pick(rng, SIZES), _place_on(rng, rec)))
    return _fetch_plan(rng, scene, family, drafts, 0, Descriptor(category=info.category, color=color))


def _plan_attribute(rng, scene, vocab, difficulty) -> _TaskPlan:
    family = TaskFamily.ATTRIBUTE_RECOGNITION
    wanted = _n_candidates(rng, family, difficulty)
    options = [c for c in vocab.categories if len(c.colors) >= min(wanted, 3)]
    if not options:
        raise TaskGenerationError(family.value, f"a category with {wanted} colours")
    info = _pick(rng, options)
    n = min(wanted, len(info.colors))
    colors = rng.permutation(list(info.colors))[:n].tolist()
    drafts = [
        _Draft(info.category, color, _pick(rng, SIZES), _place_on(rng, _pick(rng, scene.receptacles)))
        for color in colors
    ]
    target = int(rng.integers(n))
    return _fetch_plan(rng, scene, family, drafts, target, Descriptor(category=info.category))


def _plan_spatial(rng, scene, vocab, difficulty) -> _TaskPlan:
    family = TaskFamily.SPATIAL_REASONING
    n = _n_candidates(rng, family, difficulty)
    if len(scene.receptacles) < n + 1:
        raise TaskGenerationError(family.value, f"{n} receptacles to hold identical candidates")
    info = _pick(rng, vocab.categories)
    color, size = _pick(rng, info.colors), _pick(rng, SIZES)
    recs = [scene.receptacles[i] for i in rng.choice(len(scene.receptacles), size=n, replace=False).tolist()]
    drafts = [_Draft(info.category, color, size, _place_on(rng, rec)) for rec in recs]
    target = int(rng.integers(n))
    return _fetch_plan(rng, scene, family, drafts, target, Descriptor(category=info.category, color=color))


def _plan_object_size(rng, scene, vocab, difficulty) -> _TaskPlan:
    family = TaskFamily.OBJECT_SIZE
    n = _n_candidates(rng, family, difficulty)
    info = _pick(rng, vocab.categories)
    color = _pick(rng, info.colors)
    n_recs = 1 if n <= len(SIZES) else 2
    if len(scene.receptacles) < n_recs + 1:
        raise TaskGenerationError(family.value, f"{n_recs} receptacles for the size candidates")
    recs = [scene.receptacles[i] for i in rng.choice(len(scene.receptacles), size=n_recs, replace=False).tolist()]
    # small and large share a receptacle; a third or fourth candidate goes to a second one
    drafts = [
        _Draft(info.category, color, SIZES[i % len(SIZES)], Place(recs[i // len(SIZES)].id, None))
        for i in range(n)
    ]
    target = int(rng.integers(n))
    return _fetch_plan(rng, scene, family, drafts, target, Descriptor(category=info.category, color=color))


def _plan_compositional(rng, scene, vocab, difficulty) -> _TaskPlan:
    family = TaskFamily.COMPOSITIONAL
    n = _n_candidates(rng, family, difficulty)
    options = [c for c in vocab.categories if len(c.colors) >= 2]
    for _ in range(200):
        info = _pick(rng, options)
        triples = {
            (_pick(rng, info.colors), _pick(rng, SIZES), _pick(rng, scene.receptacles).id)
            for _ in range(n)
        }
        if len(triples) < n:
            continue
        triples = sorted(triples)
        colors = [t[0] for t in triples]
        sizes = [t[1] for t in triples]
        recs = [t[2] for t in triples]
        # no single attribute may separate every candidate
        if len(set(colors)) == n or len(set(sizes)) == n or len(set(recs)) == n:
            continue
        if len(set(colors)) == 1 and len(set(sizes)) == 1:
            continue
        order = rng.permutation(n).tolist()
        drafts = [
            _Draft(info.category, triples[i][0], triples[i][1], Place(triples[i][2], None)) for i in order
        ]
        target = int(rng.integers(n))
        return _fetch_plan(rng, scene, family, drafts, target, Descriptor(category=info.category))
    raise TaskGenerationError(family.value, f"{n} candidates that no single attribute separates")


def _plan_clean_clutter(rng, scene, vocab, difficulty, max_per_place: int) -> _TaskPlan:
    family = TaskFamily.CLEAN_CLUTTER
    n = _n_candidates(rng, family, difficulty)
    compartments = scene.compartments()
    if not compartments:
        raise TaskGenerationError(family.value, "an articulated receptacle to put clutter away in")
    if n > max_per_place:
        raise TaskGenerationError(family.value, f"a source surface that holds {n} objects")
    source = _pick(rng, _surfaces(scene))
    categories = rng.choice(len(vocab.categories), size=n, replace=False).tolist()
    drafts = []
    for idx in categories:
        info = vocab.categories[idx]
        drafts.append(_Draft(info.category, _pick(rng, info.colors), _pick(rng, SIZES), Place(source.id, None)))
    max_clutter = min(n - 1, MAX_K - n)
    n_clutter = int(rng.integers(1, max_clutter + 1))
    clutter = sorted(rng.choice(n, size=n_clutter, replace=False).tolist())
    preferences = [(drafts[i].category, _pick(rng, compartments)) for i in clutter]
    pref_map = dict(preferences)
    return _TaskPlan(
        drafts=drafts,
        instruction=render_clutter(source.name),
        targets=[(i, pref_map[drafts[i].category]) for i in clutter],
        distractors=[i for i in range(n) if i not in clutter],
        clutter=clutter,
        source=source.id,
        preferences=preferences,
        drop_places={Place(source.id, None)},
    )


def _plan_preference(rng, scene, vocab, difficulty) -> _TaskPlan:
    family = TaskFamily.PREFERENCE_BASED
    m = _n_candidates(rng, family, difficulty)
    groups = [g for g in vocab.groups if len(vocab.categories_in_group(g)) >= m]
    if not groups:
        raise TaskGenerationError(family.value, f"a category group with {m} categories")
    articulated = [r for r in scene.receptacles if r.is_articulated]
    if not articulated:
        raise TaskGenerationError(family.value, "an articulated receptacle to move the group into")
    group = _pick(rng, groups)
    dest = _pick(rng, articulated)
    members = list(vocab.categories_in_group(group))
    chosen = [members[i] for i in sorted(rng.choice(len(members), size=m, replace=False).tolist())]
    # every instance of the group must move, so the whole group is cleared from the background
    surfaces = _surfaces(scene)
    drafts = []
    for category in chosen:
        info = vocab.info(category)
        drafts.append(_Draft(category, _pick(rng, info.colors), _pick(rng, SIZES), Place(_pick(rng, surfaces).id, None)))
    parts = list(dest.sub_parts)
    slots = rng.permutation(len(parts)).tolist()
    preferences = [(category, Place(dest.id, parts[slots[i % len(parts)]])) for i, category in enumerate(chosen)]
    pref_map = dict(preferences)
    return _TaskPlan(
        drafts=drafts,
        instruction=render_preference(group, dest.name),
        targets=[(i, pref_map[d.category]) for i, d in enumerate(drafts)],
        distractors=[],
        clutter=[],
        source=None,
        preferences=preferences,
        drop_places=set(),
    )


def _excluded_categories(family: TaskFamily, plan: _TaskPlan, vocab: Vocabulary) -> set[str]:
    categories = {d.category for d in plan.drafts}
    if family is TaskFamily.PREFERENCE_BASED:
        group = vocab.info(plan.drafts[0].category).group
        categories |= set(vocab.categories_in_group(group))
    return categories


def _compose_drafts(scene: Scene, plan: _TaskPlan, excluded: set[str], family: TaskFamily,
                    scene_config: SceneConfig) -> tuple[list[_Draft], list[int]]:
    """Background objects plus task objects; returns drafts and the task objects' indices."""
    occupancy = _Occupancy(scene_config.max_objects_per_place)
    for draft in plan.drafts:
        if not occupancy.fits(draft):
            raise TaskGenerationError(family.value, f"room for {draft.color} {draft.category} at {draft.place}")
        occupancy.add(draft)
    budget = scene_config.max_objects - len(plan.drafts)
    background = []
    for obj in scene.objects:
        draft = _draft_of(obj)
        if obj.category in excluded or draft.place in plan.drop_places:
            continue
        if len(background) >= budget or not occupancy.fits(draft):
            continue
        occupancy.add(draft)
        background.append(draft)
    return background + plan.drafts, list(range(len(background), len(background) + len(plan.drafts)))


def generate_episode(
    scene: Scene,
    family: TaskFamily | str,
    difficulty: Difficulty | str = Difficulty.TRAIN,
    seed: int = 0,
    config: DatasetConfig | None = None,
    scene_config: SceneConfig | None = None,
    episode_id: str | None = None,
    split: str = "train",
    vocab: Vocabulary | None = None,
) -> EpisodeSpec:
    """Instantiate one episode of ``family`` on top of ``scene``'s layout; K is computed, not given."""
    family = TaskFamily(family)
    difficulty = Difficulty(difficulty)
    config = config or DatasetConfig()
    scene_config = scene_config or SceneConfig()
    vocab = vocab or load_vocabulary()
    rng = _rng(seed, FAMILY_INDEX[family], 0 if difficulty is Difficulty.TRAIN else 1)

    if family is TaskFamily.NO_AMBIGUITY:
        plan = _plan_no_ambiguity(rng, scene, vocab, difficulty)
    elif family is TaskFamily.ATTRIBUTE_RECOGNITION:
        plan = _plan_attribute(rng, scene, vocab, difficulty)
    elif family is TaskFamily.SPATIAL_REASONING:
        plan = _plan_spatial(rng, scene, vocab, difficulty)
    elif family is TaskFamily.OBJECT_SIZE:
        plan = _plan_object_size(rng, scene, vocab, difficulty)
    elif family is TaskFamily.COMPOSITIONAL:
        plan = _plan_compositional(rng, scene, vocab, difficulty)
    elif family is TaskFamily.CLEAN_CLUTTER:
        plan = _plan_clean_clutter(rng, scene, vocab, difficulty, scene_config.max_objects_per_place)
    else:
        plan = _plan_preference(rng, scene, vocab, difficulty)

    drafts, task_idx = _compose_drafts(scene, plan, _excluded_categories(family, plan, vocab), family, scene_config)
    objects = _build_objects(drafts)
    episode_scene = validate_scene(
        Scene(id=scene.id, rooms=scene.rooms, receptacles=scene.receptacles, objects=objects,
              nav_edges=scene.nav_edges),
        vocab,
    )
    object_id = {i: objects[task_idx[i]].id for i in range(len(plan.drafts))}

    spec = EpisodeSpec(
        id=episode_id or f"{split}-{family.value}-{seed}",
        scene=episode_scene,
        family=family,
        difficulty=difficulty,
        split=split,
        instruction=plan.instruction,
        targets=tuple(
            TargetPlacement(object_id=object_id[i], receptacle=p.receptacle, compartment=p.compartment)
            for i, p in plan.targets
        ),
        clutter_set=tuple(object_id[i] for i in plan.clutter),
        source_receptacle=plan.source,
        preferences=tuple(
            PreferenceEntry(category=c, receptacle=p.receptacle, compartment=p.compartment) for c, p in plan.preferences
        ),
        distractors=tuple(object_id[i] for i in plan.distractors),
        K=0,
        budget=config.budget_offset,
        max_steps=config.max_steps,
        start_receptacle=_pick(rng, scene.receptacles).id,
        seed=seed,
    )
    k = min_questions(spec, config.k_node_cap)
    if k > MAX_K:
        raise TaskGenerationError(family.value, f"an episode needing at most {MAX_K} questions (got {k})")
    return spec.model_copy(update={"K": k, "budget": k + config.budget_offset})


# --- minimum question count ---------------------------------------------------------


def shortest_question_plan(spec: EpisodeSpec, node_cap: int = 200_000) -> list[GroundedQuestion]:
    """Breadth-first search over question sequences under this episode's truthful answers.

    States are (candidate set, unknown preferences) pairs; each state is expanded once.
    """
    key = AnswerKey.from_spec(spec)
    start = initial_hypothesis(spec)
    if start.resolved:
        return []
    truth = true_hypothesis(spec)
    universe = question_universe(spec)
    truthful = [answer_under(truth, gq, key) for gq in universe]
    consistent = [
        frozenset(h for h in start.candidate_targets if answer_under(h, gq, key) == truthful[i])
        for i, gq in enumerate(universe)
    ]
    reveals = [
        gq.category if gq.template is Template.WHICH_PLACE and truthful[i].kind.value == "receptacle_name" else None
        for i, gq in enumerate(universe)
    ]

    root = (start.candidate_targets, start.unknown_preferences)
    visited = {root}
    frontier: deque = deque([(root, ())])
    expanded = 0
    while frontier:
        (candidates, prefs), path = frontier.popleft()
        for i in range(len(universe)):
            expanded += 1
            if expanded > node_cap:
                raise SearchLimitError(f"episode {spec.id}: question search exceeded {node_cap} nodes")
            state = (candidates & consistent[i], prefs - {reveals[i]})
            if state in visited:
                continue
            if len(state[0]) == 1 and not state[1]:
                return [universe[j] for j in (*path, i)]
            visited.add(state)
            frontier.append((state, (*path, i)))
    raise SearchLimitError(f"episode {spec.id}: no question sequence resolves the episode")


def min_questions(spec: EpisodeSpec, node_cap: int = 200_000) -> int:
    return len(shortest_question_plan(spec, node_cap))


# --- splits ------------------------------------------------------------------------


class SplitManifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_version: int = 1
    seed: int
    train_scenes: tuple[str, ...]
    eval_scenes: tuple[str, ...]
    unseen_task_params: dict[str, tuple[int, ...]]


def _distinct_scenes(prefix: str, count: int, base_seed: int, salt: int, config: SceneConfig,
                     dataset: DatasetConfig, taken: set) -> list[Scene]:
    scenes = []
    for i in range(count):
        for attempt in range(dataset.layout_attempts):
            scene_seed = int(_rng(base_seed, salt, i, attempt).integers(2**31 - 1))
            scene = generate_scene(scene_seed, config, scene_id=f"{prefix}_{i:02d}")
            signature = layout_signature(scene)
            if signature not in taken:
                taken.add(signature)
                scenes.append(scene)
                break
        else:
            raise SceneGenerationError(
                f"could not find {count} distinct {prefix} layouts within {dataset.layout_attempts} attempts each"
            )
    return scenes


def build_scene_sets(dataset: DatasetConfig, scene_config: SceneConfig, seed: int) -> tuple[list[Scene], list[Scene]]:
    taken: set = set()
    train = _distinct_scenes("train_scene", dataset.train_scenes, seed, 0, scene_config, dataset, taken)
    evaluation = _distinct_scenes("eval_scene", dataset.eval_scenes, seed, 1, scene_config, dataset, taken)
    return train, evaluation


def _split_manifest(seed: int, train: list[Scene], evaluation: list[Scene]) -> SplitManifest:
    return SplitManifest(
        seed=seed,
        train_scenes=tuple(s.id for s in train),
        eval_scenes=tuple(s.id for s in evaluation),
        unseen_task_params={f.value: CANDIDATES[f][Difficulty.UNSEEN_TASK] for f in CANDIDATES},
    )


def build_splits(dataset: DatasetConfig, scene_config: SceneConfig, seed: int) -> SplitManifest:
    """Scene ids per split and the held-out task parameters, without generating episodes."""
    return _split_manifest(seed, *build_scene_sets(dataset, scene_config, seed))


def generate_dataset(
    dataset: DatasetConfig,
    scene_config: SceneConfig,
    seed: int,
    families: list[str] | None = None,
    progress: bool = True,
) -> tuple[SplitManifest, dict[str, list[EpisodeSpec]]]:
    """All three splits: train scenes, unseen scenes, and unseen tasks on unseen scenes."""
    train_scenes, eval_scenes = build_scene_sets(dataset, scene_config, seed)
    manifest = _split_manifest(seed, train_scenes, eval_scenes)
    families = [TaskFamily(f) for f in (families or dataset.families)]
    layout = {
        "train": (train_scenes, Difficulty.TRAIN),
        "unseen_scenes": (eval_scenes, Difficulty.TRAIN),
        "unseen_tasks": (eval_scenes, Difficulty.UNSEEN_TASK),
    }
    episodes: dict[str, list[EpisodeSpec]] = {}
    for split_index, split in enumerate(SPLITS):
        scenes, difficulty = layout[split]
        out = []
        jobs = [(f, i) for f in families for i in range(dataset.episodes_per_family)]
        for family, i in tqdm(jobs, desc=f"generating {split}", disable=not progress):
            episode_seed = int(_rng(seed, split_index, FAMILY_INDEX[family], i).integers(2**31 - 1))
            out.append(
                generate_episode(
                    scenes[i % len(scenes)],
                    family,
                    difficulty,
                    seed=episode_seed,
                    config=dataset,
                    scene_config=scene_config,
                    episode_id=f"{split}-{family.value}-{i:04d}",
                    split=split,
                )
            )
        episodes[split] = out
        logger.info("Generated %d %s episodes over %d scenes", len(out), split, len(scenes))
    return manifest, episodes
