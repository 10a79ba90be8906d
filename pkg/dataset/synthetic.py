'''
Synthetic indoor scenes with templated annotations.

A room is a floor rectangle holding non-overlapping furniture boxes standing on it.
Points are sampled on the floor and on the box surfaces and colored by the instance
color; captions, questions, dialogues, plans and descriptions come from a fixed
attribute grammar so every answer is recoverable from the attributes.
'''
import sys, os
sys.path.append(os.pardir)
from dataclasses import dataclass, field

import numpy as np

from utils.geometry import Box3D, PointCloud, SceneBounds
from utils.errors import DataError

# nominal (x, y, z) extents in meters
CATEGORIES = {
    'chair': (0.5, 0.5, 0.9),
    'table': (1.4, 0.8, 0.75),
    'sofa': (1.8, 0.9, 0.8),
    'bed': (2.0, 1.5, 0.5),
    'desk': (1.2, 0.6, 0.75),
    'cabinet': (0.8, 0.5, 1.6),
    'lamp': (0.3, 0.3, 1.5),
    'bookshelf': (0.9, 0.35, 1.8),
    'plant': (0.4, 0.4, 0.8),
    'television': (1.0, 0.3, 0.6),
}
PLURALS = {'bookshelf': 'bookshelves'}

COLORS = {
    'red': (0.8, 0.1, 0.1),
    'green': (0.1, 0.6, 0.2),
    'blue': (0.1, 0.2, 0.8),
    'yellow': (0.9, 0.8, 0.1),
    'white': (0.95, 0.95, 0.95),
    'black': (0.05, 0.05, 0.05),
    'brown': (0.5, 0.3, 0.1),
    'gray': (0.5, 0.5, 0.5),
}
FLOOR_COLOR = (0.6, 0.55, 0.5)


@dataclass
class SceneConfig:
    n_points: int = 1024
    min_instances: int = 3
    max_instances: int = 8
    room_min: float = 4.0
    room_max: float = 7.0
    floor_fraction: float = 0.3
    margin: float = 0.1
    gap: float = 0.05
    max_retries: int = 200


@dataclass
class Instance:
    box: Box3D
    category: str
    attributes: dict
    captions: list = field(default_factory=list)


@dataclass
class QAPair:
    question: str
    answer: str
    related: list = field(default_factory=list)


@dataclass
class Turn:
    role: str
    text: str


@dataclass
class Plan:
    goal: str
    steps: list


@dataclass(eq=False)
class SceneRecord:
    ''' points : (N x 6) xyz then rgb '''
    scene_id: str
    points: np.ndarray
    instances: list = field(default_factory=list)
    qa: list = field(default_factory=list)
    dialogues: list = field(default_factory=list)
    plans: list = field(default_factory=list)
    descriptions: list = field(default_factory=list)

    def __eq__(self, other):
        if not isinstance(other, SceneRecord):
            return NotImplemented
        return (self.scene_id == other.scene_id
                and self.points.shape == other.points.shape
                and bool(np.array_equal(self.points, other.points))
                and self.instances == other.instances
                and self.qa == other.qa
                and self.dialogues == other.dialogues
                and self.plans == other.plans
                and self.descriptions == other.descriptions)

    @property
    def point_cloud(self):
        return PointCloud.from_xyzrgb(self.points)

    @property
    def bounds(self):
        return SceneBounds.from_points(self.points[:, :3])

    def validate(self):
        n = len(self.instances)
        for i, pair in enumerate(self.qa):
            for rel in pair.related:
                if not 0 <= rel < n:
                    raise DataError("qa[{}].related references missing instance {}".format(i, rel))
        bounds = self.bounds
        for i, inst in enumerate(self.instances):
            if not (bounds.contains(inst.box.min_corner) and bounds.contains(inst.box.max_corner)):
                raise DataError("instances[{}].box lies outside the scene bounds".format(i))
        return self


def name(inst):
    return "{} {}".format(inst.attributes['color'], inst.category)


def plural(category):
    return PLURALS.get(category, category + "s")


def _overlaps(a, b, gap):
    return bool(np.all(a.min_corner - gap < b.max_corner) and np.all(b.min_corner - gap < a.max_corner))


def place_instances(rng, room, n, cfg):
    instances = []
    categories = sorted(CATEGORIES)
    colors = sorted(COLORS)
    for _ in range(n):
        category = categories[rng.integers(len(categories))]
        nominal = np.array(CATEGORIES[category])
        size = nominal * rng.uniform(0.85, 1.15, size=3)
        for _ in range(cfg.max_retries):
            lo = cfg.margin + size[:2] / 2
            hi = np.array(room) - cfg.margin - size[:2] / 2
            if np.any(hi <= lo):
                break
            xy = rng.uniform(lo, hi)
            box = Box3D((xy[0], xy[1], size[2] / 2), size)
            if not any(_overlaps(box, other.box, cfg.gap) for other in instances):
                break
        else:
            raise DataError("could not place a {} without overlap after {} retries".format(category, cfg.max_retries))
        if np.any(hi <= lo):
            raise DataError("a {} does not fit into a {:.2f} x {:.2f} room".format(category, *room))
        size_class = 'large' if box.volume > float(np.prod(nominal)) else 'small'
        color = colors[rng.integers(len(colors))]
        instances.append(Instance(box, category, {'color': color, 'size': size_class}))
    return instances


def nearest_instance(instances, i):
    ''' index of the instance whose center is closest to instance i, lowest index on ties '''
    center = np.array(instances[i].box.center)
    best, best_dist = None, np.inf
    for j, other in enumerate(instances):
        if j == i:
            continue
        dist = float(np.sum((np.array(other.box.center) - center) ** 2))
        if dist < best_dist:
            best, best_dist = j, dist
    return best


def sample_box_surface(rng, box, n):
    ''' n points uniformly on the surface of box, faces chosen by area '''
    w, d, h = box.size
    areas = np.array([d * h, d * h, w * h, w * h, w * d, w * d])
    faces = rng.choice(6, size=n, p=areas / areas.sum())
    uv = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.array(box.size)
    axis = faces // 2
    sign = np.where(faces % 2 == 0, -0.5, 0.5)
    uv[np.arange(n), axis] = sign * np.array(box.size)[axis]
    return uv + np.array(box.center)


def box_corners(box):
    lo, hi = box.min_corner, box.max_corner
    return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


def sample_points(rng, room, instances, cfg):
    '''
    floor points, box surface points and the exact box / floor corners,
    so the point bounds contain every box
    '''
    corners = [np.array([[0, 0, 0], [room[0], 0, 0], [0, room[1], 0], [room[0], room[1], 0]], dtype=np.float64)]
    corner_colors = [np.tile(FLOOR_COLOR, (4, 1))]
    for inst in instances:
        corners.append(box_corners(inst.box))
        corner_colors.append(np.tile(COLORS[inst.attributes['color']], (8, 1)))
    n_fixed = sum(len(c) for c in corners)
    n_free = cfg.n_points - n_fixed
    if n_free < len(instances) + 1:
        raise DataError("n_points {} is too small for {} instances".format(cfg.n_points, len(instances)))

    n_floor = max(1, int(n_free * cfg.floor_fraction))
    areas = np.array([2 * (i.box.size[0] * i.box.size[1] + i.box.size[0] * i.box.size[2] + i.box.size[1] * i.box.size[2])
                      for i in instances])
    alloc = np.floor(areas / areas.sum() * (n_free - n_floor)).astype(int)
    alloc[: (n_free - n_floor) - alloc.sum()] += 1

    xyz = [rng.uniform((0, 0), room, size=(n_floor, 2))]
    xyz[0] = np.concatenate([xyz[0], np.zeros((n_floor, 1))], axis=1)
    rgb = [np.tile(FLOOR_COLOR, (n_floor, 1))]
    for inst, n in zip(instances, alloc):
        xyz.append(sample_box_surface(rng, inst.box, n))
        rgb.append(np.tile(COLORS[inst.attributes['color']], (n, 1)))
    xyz = np.concatenate(corners + xyz)
    rgb = np.concatenate(corner_colors + rgb)
    rgb = np.clip(rgb + rng.normal(0, 0.02, size=rgb.shape), 0, 1)
    return np.concatenate([xyz, rgb], axis=1)


def make_captions(instances, i):
    inst = instances[i]
    other = instances[nearest_instance(instances, i)]
    color = inst.attributes['color']
    return [
        "this is a {} {}. it is next to the {}.".format(color, inst.category, name(other)),
        "a {} {} {} placed near the {}.".format(inst.attributes['size'], color, inst.category, other.category),
    ]


def make_qa(instances):
    qa = []
    counts = {}
    for inst in instances:
        counts[inst.category] = counts.get(inst.category, 0) + 1
    names = [name(inst) for inst in instances]
    for i, inst in enumerate(instances):
        if counts[inst.category] == 1:
            qa.append(QAPair("what color is the {}?".format(inst.category), inst.attributes['color'], [i]))
        if names.count(names[i]) == 1:
            j = nearest_instance(instances, i)
            qa.append(QAPair("what is next to the {}?".format(names[i]), "the {}".format(names[j]), [i, j]))
    for category in sorted(counts):
        related = [i for i, inst in enumerate(instances) if inst.category == category]
        qa.append(QAPair("how many {} are there in the room?".format(plural(category)), str(counts[category]), related))
    return qa


def make_dialogue(instances, i):
    inst = instances[i]
    other = instances[nearest_instance(instances, i)]
    return [
        Turn('human', "is there a {} in this room?".format(inst.category)),
        Turn('assistant', "yes, there is a {}.".format(name(inst))),
        Turn('human', "what is next to it?"),
        Turn('assistant', "the {} is next to it.".format(name(other))),
        Turn('human', "what color is the {}?".format(other.category)),
        Turn('assistant', "it is {}.".format(other.attributes['color'])),
    ]


def make_plan(instances, i):
    a = instances[i]
    b = instances[nearest_instance(instances, i)]
    return Plan(
        "move the {} next to the {}".format(name(a), b.category),
        ["walk to the {}".format(name(a)),
         "pick up the {}".format(a.category),
         "carry it to the {}".format(name(b)),
         "put it down next to the {}".format(b.category)])


def make_description(instances):
    parts = ["a {}".format(name(inst)) for inst in instances]
    listing = ", ".join(parts[:-1]) + " and " + parts[-1]
    return "this room has {} objects: {}.".format(len(instances), listing)


def generate_scene(seed, cfg=None, scene_id=None):
    cfg = cfg or SceneConfig()
    if cfg.min_instances < 2 or cfg.max_instances < cfg.min_instances:
        raise DataError("instance count range [{}, {}] is invalid".format(cfg.min_instances, cfg.max_instances))
    rng = np.random.default_rng(seed)
    room = tuple(rng.uniform(cfg.room_min, cfg.room_max, size=2))
    n = int(rng.integers(cfg.min_instances, cfg.max_instances + 1))
    instances = place_instances(rng, room, n, cfg)
    points = sample_points(rng, room, instances, cfg)
    for i, inst in enumerate(instances):
        inst.captions = make_captions(instances, i)

    first = int(rng.integers(n))
    record = SceneRecord(
        scene_id=scene_id if scene_id is not None else "scene{:06d}".format(seed),
        points=points,
        instances=instances,
        qa=make_qa(instances),
        dialogues=[make_dialogue(instances, first)],
        plans=[make_plan(instances, first)],
        descriptions=[make_description(instances)])
    return record.validate()


def sample_click(rng, box):
    ''' uniform click inside box '''
    return tuple(float(v) for v in rng.uniform(box.min_corner, box.max_corner))
