'''
`ablate-fusion`: trains the early and the direct fusion variants from the same
pretrained checkpoint and compares their training and validation losses.
'''
import sys, os
sys.path.append(os.pardir)
import copy

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import pandas as pd

from langmodels.interactor import FUSIONS
from eval.report import metric_row, write_report
from train.train import train


def ablate_fusion(cfg, init_path):
    output = cfg.output
    runs = {}
    for fusion in FUSIONS:
        run_cfg = copy.deepcopy(cfg)
        run_cfg.fusion = fusion
        run_cfg.output = os.path.join(output, fusion)
        print("---- fusion: {} ----".format(fusion), flush=True)
        runs[fusion] = train(run_cfg, init_path)

    rows = []
    fig, ax = plt.subplots(figsize=(6, 4))
    for fusion, result in runs.items():
        df = pd.DataFrame(result['records'])
        if len(df):
            ax.plot(df['step'], df['nll'], label=fusion)
            rows.append(metric_row('{}/final_train_nll'.format(fusion), df['nll'].iloc[-1], len(df)))
            rows.append(metric_row('{}/final_token_acc'.format(fusion), df['token_acc'].iloc[-1], len(df)))
        if result['val']:
            last = result['val'][-1]
            rows.append(metric_row('{}/val_nll'.format(fusion), last['nll'], last['step']))
            rows.append(metric_row('{}/val_token_acc'.format(fusion), last['token_acc'], last['step']))
    ax.set_xlabel('step')
    ax.set_ylabel('train nll')
    ax.legend()
    os.makedirs(output, exist_ok=True)
    fig.savefig(os.path.join(output, 'fusion_ablation.png'))
    plt.close(fig)

    write_report(rows, os.path.join(output, 'fusion_ablation'),
                 {'checkpoints': {f: r['checkpoint'] for f, r in runs.items()}})
    return rows
