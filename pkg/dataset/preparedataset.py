'''
`datagen`: synthetic scene files, vocabulary and LM pretraining corpus.

<root>/train/<scene id>.json, <root>/val/<scene id>.json, <root>/vocab.txt, <root>/corpus.json
Train and validation scenes are drawn from disjoint seed ranges.
'''
import sys, os
sys.path.append(os.pardir)
import json
import time

from joblib import Parallel, delayed
from tqdm import tqdm

from utils.utils import sec2str
from langmodels.vocab import build_vocab
from langmodels.instructions import TEMPLATES, RESPONSES, PLACEHOLDER_RE
from dataset.synthetic import SceneConfig, CATEGORIES, PLURALS, COLORS, generate_scene
from dataset.scene_io import write_scene
from dataset.samples import PLAN_DONE, TASKS
from dataset.instruct3d import load_scenes, build_samples

SPLIT_OFFSET = {'train': 0, 'val': 500000}


def scene_seed(seed, split, i):
    return seed * 1000000 + SPLIT_OFFSET[split] + i


def scene_config(cfg):
    return SceneConfig(n_points=cfg.data.n_points, min_instances=cfg.data.min_instances,
                       max_instances=cfg.data.max_instances)


def generate_one(seed, scene_cfg, directory):
    record = generate_scene(seed, scene_cfg)
    path = os.path.join(directory, '{}.json'.format(record.scene_id))
    write_scene(record, path)
    return path


def generate_split(cfg, split, n_scenes):
    directory = os.path.join(cfg.data.root, split)
    os.makedirs(directory, exist_ok=True)
    scene_cfg = scene_config(cfg)
    seeds = [scene_seed(cfg.seed, split, i) for i in range(n_scenes)]
    paths = Parallel(n_jobs=cfg.data.n_jobs, backend='threading')(
        delayed(generate_one)(seed, scene_cfg, directory) for seed in tqdm(seeds, desc=split))
    return paths


def template_texts():
    ''' every template string without its placeholders, plus the vocabulary the grammar can emit '''
    texts = [PLACEHOLDER_RE.sub(" ", t) for t in list(TEMPLATES.values()) + list(RESPONSES.values())]
    texts.append(PLAN_DONE)
    texts.extend(CATEGORIES)
    texts.extend(PLURALS.values())
    texts.extend(COLORS)
    return texts


def build_corpus(samples):
    return [{'scene_id': s.scene_id, 'task': s.task, 'instruction': s.instruction, 'response': s.response}
            for s in samples]


def datagen(cfg):
    begin = time.time()
    root = cfg.data.root
    os.makedirs(root, exist_ok=True)
    print('generating {} train and {} val scenes into {}'.format(cfg.data.n_scenes, cfg.data.n_val_scenes, root), flush=True)
    generate_split(cfg, 'train', cfg.data.n_scenes)
    generate_split(cfg, 'val', cfg.data.n_val_scenes)
    print('{} | scenes written'.format(sec2str(time.time() - begin)), flush=True)

    train_samples = build_samples(load_scenes(root, 'train'), TASKS, cfg.seed)
    val_samples = build_samples(load_scenes(root, 'val'), TASKS, cfg.seed)
    texts = [s.text() for s in train_samples + val_samples] + template_texts()
    vocab = build_vocab(texts, verbose=True)
    vocab.save(os.path.join(root, 'vocab.txt'))

    corpus = build_corpus(train_samples)
    with open(os.path.join(root, 'corpus.json'), 'w') as f:
        json.dump(corpus, f, indent=1)
    print('{} | vocabulary of {} tokens, corpus of {} samples saved to {}'.format(
        sec2str(time.time() - begin), len(vocab), len(corpus), root), flush=True)
    return vocab, corpus
