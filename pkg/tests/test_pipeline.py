import json
import os

import pandas as pd
import pytest

import ll3d
from options import config_to_dict
from utils.checkpoint import load_checkpoint, checkpoint_digest
from conftest import tiny_config

pytestmark = pytest.mark.slow

GREEDY = ['--strategy', 'greedy', '--max_new_tokens', '8']


@pytest.fixture(scope='module')
def run(tmp_path_factory):
    base = tmp_path_factory.mktemp('pipeline')
    root = str(base / 'data')
    config = str(base / 'tiny.json')
    with open(config, 'w') as f:
        json.dump(config_to_dict(tiny_config(root)), f)
    paths = {'base': str(base), 'root': root, 'config': config,
             'pretrained': str(base / 'pretrained.ll3d'), 'output': str(base / 'tuned')}

    assert ll3d.main(['datagen', '--config', config, '--out', root, '--n_scenes', '2']) == 0
    assert ll3d.main(['pretrain-lm', '--config', config, '--data', root, '--out', paths['pretrained']]) == 0
    assert ll3d.main(['train', '--config', config, '--init', paths['pretrained'], '--data', root,
                      '--output', paths['output'], '--steps', '2']) == 0
    paths['tuned'] = os.path.join(paths['output'], 'ckpt_step000002.ll3d')
    return paths


def test_training_outputs(run):
    assert os.path.exists(run['tuned'])
    log = pd.read_csv(os.path.join(run['output'], 'loss_log.csv'))
    assert list(log['step']) == [1, 2]
    assert os.path.exists(os.path.join(run['output'], 'loss_curve.png'))


def test_frozen_weights_survive_tuning(run):
    pretrained = checkpoint_digest(load_checkpoint(run['pretrained']), frozen_only=True)
    tuned = load_checkpoint(run['tuned'])
    assert pretrained
    assert {k: v for k, v in checkpoint_digest(tuned).items() if k in pretrained} == pretrained
    assert tuned.has_optimizer and tuned.step == 2


def test_trainable_weights_change(run):
    pretrained = checkpoint_digest(load_checkpoint(run['pretrained']))
    tuned = checkpoint_digest(load_checkpoint(run['tuned']))
    assert pretrained['interactor.query_embed'] != tuned['interactor.query_embed']


@pytest.mark.parametrize('task', ['densecap', 'qa', 'scene_description', 'dialogue', 'planning', 'detect'])
def test_eval_writes_reports(run, task):
    assert ll3d.main(['eval', '--checkpoint', run['tuned'], '--task', task] + GREEDY) == 0
    prefix = os.path.join(run['output'], 'report_{}_val'.format(task))
    with open(prefix + '.json') as f:
        doc = json.load(f)
    assert doc['task'] == task and doc['step'] == 2
    assert len(doc['metrics']) > 0
    assert list(pd.read_csv(prefix + '.csv').columns) == ['metric', 'threshold', 'value', 'n_items']


def test_eval_localize_and_report_path(run):
    report = os.path.join(run['base'], 'reports', 'localized')
    assert ll3d.main(['eval', '--checkpoint', run['tuned'], '--task', 'densecap', '--localize',
                      '--report', report] + GREEDY) == 0
    assert os.path.exists(report + '.json')


def test_generate(run, capsys):
    scene = os.path.join(run['root'], 'val', 'scene500000.json')
    with open(scene) as f:
        box = json.load(f)['instances'][0]['box']
    code = ll3d.main(['generate', '--checkpoint', run['tuned'], '--scene', scene,
                      '--instruction', 'describe this object in the given 3D scene.',
                      '--box', ','.join(box)] + GREEDY)
    assert code == 0


def test_inspect(run, capsys):
    assert ll3d.main(['checkpoint', 'inspect', run['tuned']]) == 0
    out = capsys.readouterr().out
    assert 'interactor.query_embed' in out and 'frozen' in out


def test_finetune_continues_step_count(run):
    output = os.path.join(run['base'], 'finetuned')
    assert ll3d.main(['train', '--config', run['config'], '--init', run['pretrained'], '--data', run['root'],
                      '--output', output, '--steps', '1', '--finetune_from', run['tuned'],
                      '--tasks', 'densecap']) == 0
    assert load_checkpoint(os.path.join(output, 'ckpt_step000003.ll3d')).step == 3


def test_ablate_fusion(run):
    output = os.path.join(run['base'], 'ablation')
    assert ll3d.main(['ablate-fusion', '--config', run['config'], '--init', run['pretrained'],
                      '--data', run['root'], '--output', output, '--steps', '1']) == 0
    assert os.path.exists(os.path.join(output, 'fusion_ablation.json'))
    assert os.path.exists(os.path.join(output, 'direct', 'ckpt_step000001.ll3d'))


def test_exit_codes(run, capsys):
    assert ll3d.main(['train']) == 1
    assert ll3d.main(['eval', '--checkpoint', os.path.join(run['base'], 'missing.ll3d'), '--task', 'qa']) == 2
    scene = os.path.join(run['root'], 'val', 'scene500000.json')
    assert ll3d.main(['generate', '--checkpoint', run['tuned'], '--scene', scene,
                      '--instruction', 'hi', '--click', '1,2']) == 1
    assert ll3d.main(['generate', '--checkpoint', run['tuned'], '--scene', scene,
                      '--instruction', 'hi', '--click', '900,900,900']) == 2
    assert 'error:' in capsys.readouterr().err
