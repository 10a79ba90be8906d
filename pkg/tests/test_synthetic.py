import numpy as np
import pytest

from dataset.synthetic import (SceneConfig, generate_scene, sample_click, nearest_instance,
                               CATEGORIES, COLORS)
from utils.geometry import box_iou_3d, points_in_box
from utils.errors import DataError


CFG = SceneConfig(n_points=256, max_instances=4)


def test_deterministic_per_seed():
    assert generate_scene(3, CFG) == generate_scene(3, CFG)
    assert generate_scene(3, CFG) != generate_scene(4, CFG)


def test_scene_id_and_point_count(scene):
    assert scene.scene_id == "scene000000"
    assert scene.points.shape == (256, 6)
    assert generate_scene(1, CFG, scene_id='kitchen').scene_id == 'kitchen'


def test_instances_fit_and_do_not_overlap():
    for seed in range(5):
        scene = generate_scene(seed, CFG)
        assert CFG.min_instances <= len(scene.instances) <= CFG.max_instances
        boxes = [inst.box for inst in scene.instances]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                assert box_iou_3d(boxes[i], boxes[j]) == 0.0
        for inst in scene.instances:
            assert inst.category in CATEGORIES
            assert inst.attributes['color'] in COLORS
            assert inst.box.min_corner[2] == pytest.approx(0.0)


def test_every_instance_has_points(scene):
    coords = scene.points[:, :3]
    for i, inst in enumerate(scene.instances):
        near = np.all(np.abs(coords - np.array(inst.box.center)) <= np.array(inst.box.size) / 2 + 1e-9, axis=1)
        assert near.sum() >= 8
        assert set(points_in_box(coords, inst.box).tolist()) <= set(np.flatnonzero(near).tolist())


def test_answers_follow_attributes(scene):
    for pair in scene.qa:
        if pair.question.startswith('what color is the'):
            assert pair.answer == scene.instances[pair.related[0]].attributes['color']
        elif pair.question.startswith('how many'):
            assert pair.answer == str(len(pair.related))
            categories = {scene.instances[r].category for r in pair.related}
            assert len(categories) == 1


def test_annotations_present(scene):
    assert all(len(inst.captions) == 2 for inst in scene.instances)
    assert len(scene.dialogues) == 1 and len(scene.dialogues[0]) == 6
    assert len(scene.plans) == 1 and len(scene.plans[0].steps) == 4
    assert scene.descriptions[0].startswith("this room has {} objects".format(len(scene.instances)))


def test_point_budget_too_small():
    with pytest.raises(DataError):
        generate_scene(0, SceneConfig(n_points=20))
    with pytest.raises(DataError):
        generate_scene(0, SceneConfig(min_instances=1))


def test_sample_click_inside_box(scene):
    rng = np.random.default_rng(0)
    box = scene.instances[0].box
    for _ in range(10):
        p = np.array(sample_click(rng, box))
        assert np.all(p >= box.min_corner) and np.all(p <= box.max_corner)


def test_nearest_instance(scene):
    i = 0
    j = nearest_instance(scene.instances, i)
    assert j != i
    center = np.array(scene.instances[i].box.center)
    dist = [np.sum((np.array(inst.box.center) - center) ** 2) for inst in scene.instances]
    dist[i] = np.inf
    assert j == int(np.argmin(dist))
