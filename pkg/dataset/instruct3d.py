import sys, os
sys.path.append(os.pardir)
import glob
import json

import numpy as np
from torch.utils.data import Dataset

from utils.errors import DataError
from dataset.scene_io import read_scene
from dataset.samples import TrainingSample, assemble_samples, TASKS

SPLITS = ('train', 'val')


def scene_paths(root, split):
    if split not in SPLITS:
        raise DataError("unknown split {!r}, expected one of {}".format(split, SPLITS))
    directory = os.path.join(root, split)
    if not os.path.isdir(directory):
        raise DataError("dataset split directory {} does not exist, run datagen first".format(directory))
    return sorted(glob.glob(os.path.join(directory, '*.json')))


def load_scenes(root, split):
    ''' {scene_id: SceneRecord} in file order '''
    scenes = {}
    for path in scene_paths(root, split):
        record = read_scene(path)
        scenes[record.scene_id] = record
    if len(scenes) == 0:
        raise DataError("no scene files under {}".format(os.path.join(root, split)))
    return scenes


def build_samples(scenes, tasks, seed):
    ''' assembles every task over every scene with one rng, so (scenes, tasks, seed) fixes the samples '''
    rng = np.random.default_rng(seed)
    samples = []
    for scene_id in scenes:
        for task in tasks:
            samples.extend(assemble_samples(scenes[scene_id], task, rng))
    return samples


def load_corpus(root):
    ''' LM pretraining corpus: list of TrainingSample without prompts '''
    path = os.path.join(root, 'corpus.json')
    try:
        with open(path, 'r') as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise DataError("corpus file {} does not exist, run datagen first".format(path))
    return [TrainingSample(item['scene_id'], item['task'], item['instruction'], item['response']) for item in doc]


class InstructDataset(Dataset):
    """
    Args:
        root (string): dataset directory written by datagen.
        split (string): train | val
        tasks (list): tasks to assemble samples for.
        seed (int): seed of the sample assembly (prompt types, instruction variants, clicks).
    """
    def __init__(self, root, split='train', tasks=TASKS, seed=0):
        self.root = root
        self.split = split
        self.tasks = list(tasks)
        self.scenes = load_scenes(root, split)
        self.samples = build_samples(self.scenes, self.tasks, seed)
        if len(self.samples) == 0:
            raise DataError("no {} samples for tasks {}".format(split, self.tasks))

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, index):
        sample = self.samples[index]
        return sample, self.scenes[sample.scene_id]

    def count_by_task(self):
        counts = {}
        for sample in self.samples:
            counts[sample.task] = counts.get(sample.task, 0) + 1
        return counts


# samples differ in length and prompt count, batches stay python lists
def collate_samples(batch):
    return list(batch)
