'''
`train`: instruction tuning of the prompt encoder, the multi-modal transformer and the
projector on top of a pretrained checkpoint whose scene encoder and LM stay frozen.
'''
import sys, os
sys.path.append(os.pardir)
import math
import time

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd
import torch
from torch.utils.data import DataLoader

from utils.utils import sec2str, set_seed, count_parameters, parameter_digest
from utils.numerics import AdamW, zero_grad, backward, cosine_lr
from utils.checkpoint import (make_checkpoint, save_checkpoint, load_checkpoint, apply_checkpoint,
                              check_config_dims, assert_frozen_unchanged)
from utils.errors import DataError
from utils.makemodel import load_assistant
from options import config_to_dict
from langmodels.transformer import token_accuracy
from langmodels.decoding import GenerationConfig
from langmodels.vocab import decode_tokens
from dataset.instruct3d import InstructDataset, collate_samples


def sample_loss(model, sample, scene, vocab):
    ''' (nll, correct, total) of one sample under teacher forcing '''
    emb = model.encode_scene(scene.point_cloud, key=scene.scene_id)
    nll, logits, seq = model(emb, sample.prompts, sample.instruction_tokens(vocab), sample.response_tokens(vocab))
    correct, total = token_accuracy(logits, seq.ids[1:], seq.loss_mask[1:])
    return nll, correct, total


def batch_loss(model, batch, vocab):
    nlls, correct, total = [], 0, 0
    for sample, scene in batch:
        nll, c, t = sample_loss(model, sample, scene, vocab)
        nlls.append(nll)
        correct += c
        total += t
    return torch.stack(nlls).mean(), correct, total


def validate(model, dset, vocab, n_show=3, max_new_tokens=48):
    ''' mean nll, perplexity and teacher-forced token accuracy over dset, plus a few greedy samples '''
    nlls, correct, total = [], 0, 0
    with torch.no_grad():
        for sample, scene in dset:
            nll, c, t = sample_loss(model, sample, scene, vocab)
            nlls.append(nll.item())
            correct += c
            total += t
    meannll = sum(nlls) / len(nlls)
    print("sample generations:", flush=True)
    gen = GenerationConfig(strategy='greedy', max_new_tokens=max_new_tokens)
    for sample, scene in [dset[i] for i in range(min(n_show, len(dset)))]:
        emb = model.encode_scene(scene.point_cloud, key=scene.scene_id)
        hyp = model.respond(emb, sample.prompts, sample.instruction_tokens(vocab), gen)
        print("  {} -> {}".format(sample.instruction, decode_tokens(hyp.ids, vocab)), flush=True)
    return {'nll': meannll, 'ppl': math.exp(meannll), 'token_acc': correct / max(1, total)}


def save_loss_log(records, output):
    ''' loss_log.csv plus loss_curve.png in output '''
    df = pd.DataFrame(records)
    csv_path = os.path.join(output, 'loss_log.csv')
    df.to_csv(csv_path, index=False)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(df['step'], df['nll'], label='train nll')
    ax.set_xlabel('step')
    ax.set_ylabel('nll')
    ax.legend()
    fig.savefig(os.path.join(output, 'loss_curve.png'))
    plt.close(fig)
    return csv_path


def checkpoint_path(output, step):
    return os.path.join(output, 'ckpt_step{:06d}.ll3d'.format(step))


def train(cfg, init_path, finetune_from=None):
    '''
    Returns {'records': per-step log, 'val': validation log, 'checkpoint': final checkpoint path}.
    '''
    print(cfg, flush=True)
    set_seed(cfg.seed)
    model, cfg, vocab, _ = load_assistant(init_path, cfg)
    optimizer = AdamW(model.trainable_parameters(), weight_decay=cfg.train.weight_decay)
    start = 0
    if finetune_from is not None:
        print("continuing from {}".format(finetune_from), flush=True)
        ckpt = load_checkpoint(finetune_from)
        check_config_dims(ckpt.config, config_to_dict(cfg))
        apply_checkpoint(model, ckpt)
        if ckpt.has_optimizer:
            optimizer.load_moments({n: (torch.from_numpy(m), torch.from_numpy(v)) for n, (m, v) in ckpt.moments.items()},
                                   ckpt.optimizer_t)
        start = ckpt.step
    frozen_digest = parameter_digest(model.frozen_parameters())

    train_dset = InstructDataset(cfg.data.root, 'train', cfg.data.tasks, cfg.seed)
    print("{} training samples: {}".format(len(train_dset), train_dset.count_by_task()), flush=True)
    try:
        val_dset = InstructDataset(cfg.data.root, 'val', cfg.data.tasks, cfg.seed)
    except DataError as e:
        print("warning: no validation split ({}), skipping validation".format(e), flush=True)
        val_dset = None
    generator = torch.Generator().manual_seed(cfg.seed)
    trainloader = DataLoader(train_dset, batch_size=cfg.train.batch_size, shuffle=True,
                             collate_fn=collate_samples, generator=generator)

    print("# of trainable params : {}".format(count_parameters(model)), flush=True)
    os.makedirs(cfg.output, exist_ok=True)
    total = cfg.train.total_steps
    records, val_log = [], []

    print("start training", flush=True)
    begin = time.time()
    before = time.time()
    step = start
    while step < start + total:
        for batch in trainloader:
            if step >= start + total:
                break
            lr = cosine_lr(step - start, total, cfg.train.lr_max, cfg.train.lr_min)
            nll, correct, n_tokens = batch_loss(model, batch, vocab)
            zero_grad(optimizer.parameters())
            backward(nll, optimizer.parameters())
            optimizer.step(lr)
            step += 1
            records.append({'step': step, 'lr': lr, 'nll': nll.item(), 'token_acc': correct / max(1, n_tokens)})
            if cfg.train.check_frozen:
                assert_frozen_unchanged(frozen_digest, model)

            if step % cfg.train.log_every == 0:
                print("{} | step {:06d}/{:06d} | nll loss: {:.4f} | token acc: {:.3f} | lr {:.2e} | {:02.04f}s per loop".format(
                    sec2str(time.time() - begin), step, start + total, nll.item(), records[-1]['token_acc'], lr,
                    (time.time() - before) / cfg.train.log_every), flush=True)
                before = time.time()
            if val_dset is not None and step % cfg.train.eval_every == 0:
                print("begin validation at step {} ...".format(step), flush=True)
                metrics = validate(model, val_dset, vocab)
                metrics['step'] = step
                val_log.append(metrics)
                print("{} | validation nll: {:.4f} | perplexity: {:.3f} | token acc: {:.3f}".format(
                    sec2str(time.time() - begin), metrics['nll'], metrics['ppl'], metrics['token_acc']), flush=True)
            if step % cfg.train.save_every == 0 and step < start + total:
                assert_frozen_unchanged(frozen_digest, model)
                save_checkpoint(checkpoint_path(cfg.output, step), make_checkpoint(model, config_to_dict(cfg), optimizer, step))
                print("saved checkpoint to {}".format(checkpoint_path(cfg.output, step)), flush=True)

    assert_frozen_unchanged(frozen_digest, model)
    final = checkpoint_path(cfg.output, step)
    save_checkpoint(final, make_checkpoint(model, config_to_dict(cfg), optimizer, step))
    print("saved checkpoint to {}".format(final), flush=True)
    if records:
        save_loss_log(records, cfg.output)
    if val_log:
        pd.DataFrame(val_log).to_csv(os.path.join(cfg.output, 'val_log.csv'), index=False)
    print("{} | end training".format(sec2str(time.time() - begin)), flush=True)
    return {'records': records, 'val': val_log, 'checkpoint': final}
