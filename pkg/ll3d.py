'''
Command-line entry point.

    python ll3d.py datagen --out data
    python ll3d.py pretrain-lm --data data --out runs/pretrained.ll3d
    python ll3d.py train --init runs/pretrained.ll3d --data data --output runs/tuned
    python ll3d.py eval --checkpoint runs/tuned/ckpt_step005000.ll3d --task densecap
    python ll3d.py generate --checkpoint ... --scene data/val/scene500000.json --instruction "what is this object?" --click 1,2,0.5
    python ll3d.py checkpoint inspect runs/tuned/ckpt_step005000.ll3d

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric error.
'''
import sys
import json
import hashlib

import numpy as np

from utils.errors import LL3DError, DataError
from utils.checkpoint import load_checkpoint
from options import parse_args, load_config, apply_overrides, generation_config
from dataset.preparedataset import datagen
from train.pretrain_lm import cmd_pretrain_lm
from train.train import train
from eval.eval import cmd_eval
from eval.generate import cmd_generate
from eval.ablation import ablate_fusion


def inspect_checkpoint(path):
    ckpt = load_checkpoint(path)
    print("format version : {}".format(ckpt.version))
    print("training step  : {}".format(ckpt.step))
    print("optimizer      : {}".format("t={} ({} moments)".format(ckpt.optimizer_t, len(ckpt.moments))
                                       if ckpt.has_optimizer else "none"))
    print("config :")
    print(json.dumps(ckpt.config, indent=2, sort_keys=True))
    print("parameters :")
    total = 0
    for blob in ckpt.parameters:
        digest = hashlib.sha256(np.asarray(blob.values, dtype='<f8').tobytes()).hexdigest()[:16]
        total += blob.values.size
        print("  {:60s} {:20s} {:8s} {}".format(
            blob.name, str(tuple(blob.values.shape)), "frozen" if blob.frozen else "train", digest))
    print("# of values : {}".format(total), flush=True)
    return ckpt


def run(args):
    if args.command == 'checkpoint':
        inspect_checkpoint(args.path)
        return

    cfg = apply_overrides(load_config(args.config), args)
    print(args, flush=True)

    if args.command == 'datagen':
        datagen(cfg)
    elif args.command == 'pretrain-lm':
        cmd_pretrain_lm(cfg, args.out)
    elif args.command == 'train':
        train(cfg, args.init, finetune_from=args.finetune_from)
    elif args.command == 'eval':
        cmd_eval(args.checkpoint, args.task, data_root=args.data, split=args.split, click=args.click,
                 localize=args.localize, proposals=args.proposals, report=args.report,
                 gen=generation_config(cfg, args))
    elif args.command == 'generate':
        cmd_generate(args.checkpoint, args.scene, args.instruction, args.click, args.box,
                     gen=generation_config(cfg, args))
    elif args.command == 'ablate-fusion':
        ablate_fusion(cfg, args.init)


def main(argv=None):
    try:
        run(parse_args(argv))
    except LL3DError as e:
        print("error: {}".format(e), file=sys.stderr, flush=True)
        return e.exit_code
    except OSError as e:
        print("error: {}".format(e), file=sys.stderr, flush=True)
        return DataError.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
