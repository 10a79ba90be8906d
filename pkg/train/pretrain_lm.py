'''
`pretrain-lm`: warms up the scene encoder, trains the language model on the generated
corpus with an all-zero prefix, freezes both and saves the assistant as the checkpoint
instruction tuning starts from.
'''
import sys, os
sys.path.append(os.pardir)
import math
import time

import numpy as np
import torch
from tqdm import tqdm

from utils.utils import sec2str, count_parameters, freeze, unfreeze
from utils.numerics import AdamW, zero_grad, backward, cosine_lr
from utils.checkpoint import make_checkpoint, save_checkpoint
from utils.makemodel import generate_assistant, load_vocab
from options import config_to_dict
from langmodels.transformer import sequence_loss, zero_prefix
from pointmodels.scene_encoder import warmup_scene_encoder
from dataset.instruct3d import load_scenes, load_corpus


def corpus_sequences(corpus, vocab):
    ''' next-token sequences over the whole text, instruction included '''
    return [sample.sequence(vocab).with_mask(True) for sample in corpus]


def corpus_nll(lm, prefix, seqs):
    with torch.no_grad():
        return float(np.mean([sequence_loss(lm, prefix, seq)[0].item() for seq in seqs]))


def pretrain_lm(lm, seqs, cfg, n_prefix):
    '''
    Next-token training until the held-out perplexity drops below cfg.lm.target_ppl
    or cfg.lm.pretrain_steps is reached. Returns statistics of the run.
    '''
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(seqs))
    n_held = max(1, len(seqs) // 10)
    held = [seqs[i] for i in order[:n_held]]
    train = [seqs[i] for i in order[n_held:]] or held

    unfreeze(lm, skip=('position_enc',))
    optimizer = AdamW([(n, p) for n, p in lm.named_parameters() if p.requires_grad],
                      weight_decay=cfg.train.weight_decay)
    prefix = zero_prefix(lm, n_prefix)
    steps, lr = cfg.lm.pretrain_steps, cfg.lm.pretrain_lr
    check_every = max(1, steps // 10)
    batch_size = cfg.train.batch_size

    stats = {'init_ppl': math.exp(corpus_nll(lm, prefix, held)), 'losses': [], 'converged': False}
    print("held-out perplexity at init: {:.3f}".format(stats['init_ppl']), flush=True)
    begin = time.time()
    step = 0
    for step in tqdm(range(steps), desc="lm pretraining"):
        batch = [train[int(j) % len(train)] for j in range(step * batch_size, (step + 1) * batch_size)]
        loss = torch.stack([sequence_loss(lm, prefix, seq)[0] for seq in batch]).mean()
        zero_grad(optimizer.parameters())
        backward(loss, optimizer.parameters())
        optimizer.step(cosine_lr(step, steps, lr, lr * 0.01))
        stats['losses'].append(loss.item())

        if step % cfg.train.log_every == (cfg.train.log_every - 1):
            print("{} | lm step {:06d}/{:06d} | nll loss: {:.4f}".format(
                sec2str(time.time() - begin), step + 1, steps, loss.item()), flush=True)
        if step % check_every == (check_every - 1):
            ppl = math.exp(corpus_nll(lm, prefix, held))
            print("{} | held-out perplexity: {:.3f}".format(sec2str(time.time() - begin), ppl), flush=True)
            if ppl < cfg.lm.target_ppl:
                break

    stats['final_ppl'] = math.exp(corpus_nll(lm, prefix, held))
    stats['steps'] = step + 1 if steps > 0 else 0
    stats['converged'] = stats['final_ppl'] < cfg.lm.target_ppl
    if not stats['converged']:
        print("warning: language model stopped at held-out perplexity {:.3f} above the target {:.3f}".format(
            stats['final_ppl'], cfg.lm.target_ppl), flush=True)
    freeze(lm)
    return stats


def cmd_pretrain_lm(cfg, out):
    begin = time.time()
    vocab = load_vocab(cfg)
    model = generate_assistant(cfg, len(vocab))

    # scene encoder warm-up on the training clouds
    scenes = load_scenes(cfg.data.root, 'train')
    clouds = [scene.point_cloud for scene in scenes.values()]
    unfreeze(model.scene_encoder, skip=('pos_emb',))
    print("# of params in scene encoder : {}".format(count_parameters(model.scene_encoder)), flush=True)
    warmup_scene_encoder(model.scene_encoder, clouds, steps=cfg.encoder.warmup_steps,
                         log_every=cfg.train.log_every)

    corpus = load_corpus(cfg.data.root)
    seqs = corpus_sequences(corpus, vocab)
    print("# of params in language model : {}".format(
        sum(p.numel() for n, p in model.lm.named_parameters() if not n.startswith('position_enc'))), flush=True)
    stats = pretrain_lm(model.lm, seqs, cfg, cfg.mmt.n_queries)

    directory = os.path.dirname(out)
    if directory:
        os.makedirs(directory, exist_ok=True)
    save_checkpoint(out, make_checkpoint(model, config_to_dict(cfg), step=0))
    print("{} | saved pretrained checkpoint to {}".format(sec2str(time.time() - begin), out), flush=True)
    return stats
