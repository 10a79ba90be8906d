import argparse
import dataclasses
import json
from dataclasses import dataclass, field

from utils.errors import UsageError
from langmodels.decoding import GenerationConfig


# configurations of dataset (paths, synthetic scenes)
@dataclass
class DataConfig:
    root: str = 'data'
    n_scenes: int = 32
    n_val_scenes: int = 8
    n_points: int = 1024
    min_instances: int = 3
    max_instances: int = 8
    tasks: list = field(default_factory=lambda: ['densecap', 'qa', 'scene_description', 'dialogue', 'planning', 'detect'])
    n_jobs: int = 1


# configurations of the frozen scene encoder
@dataclass
class EncoderConfig:
    in_features: int = 4
    n_tokens: int = 64
    n_out_tokens: int = 32
    k_nn: int = 16
    d_enc: int = 32
    d_inner: int = 64
    n_head: int = 4
    radii: list = field(default_factory=lambda: [0.16, 0.64, 1.44])
    warmup_steps: int = 200


# configurations of prompt encoder + multi-modal transformer
@dataclass
class InteractorConfig:
    n_queries: int = 32
    n_layers: int = 6
    n_head: int = 4
    d_mmt: int = 64
    d_inner: int = 128
    d_pe: int = 32
    max_positions: int = 256


# configurations of the frozen language model
@dataclass
class LanguageModelConfig:
    n_layers: int = 2
    n_head: int = 4
    d_lm: int = 64
    d_inner: int = 128
    max_positions: int = 320
    pretrain_steps: int = 2000
    pretrain_lr: float = 1e-3
    target_ppl: float = 2.0


# training config
@dataclass
class TrainConfig:
    lr_max: float = 1e-4
    lr_min: float = 1e-6
    weight_decay: float = 0.1
    batch_size: int = 16
    total_steps: int = 5000
    eval_every: int = 500
    save_every: int = 1000
    log_every: int = 10
    check_frozen: bool = False


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    mmt: InteractorConfig = field(default_factory=InteractorConfig)
    lm: LanguageModelConfig = field(default_factory=LanguageModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    seed: int = 0
    fusion: str = 'early'
    output: str = 'runs/default'


def config_to_dict(cfg):
    return dataclasses.asdict(cfg)


def _build(cls, doc, where):
    if not isinstance(doc, dict):
        raise UsageError("config section {!r} must be an object".format(where or 'root'))
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in doc.items():
        dotted = "{}.{}".format(where, key) if where else key
        if key not in fields:
            raise UsageError("unknown config key {!r}".format(dotted))
        sub = fields[key].type
        if dataclasses.is_dataclass(sub):
            kwargs[key] = _build(sub, value, dotted)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(doc):
    return _build(RunConfig, doc, "")


def load_config(path=None):
    ''' RunConfig from a JSON file whose keys mirror the dataclasses, defaults when path is None '''
    if path is None:
        return RunConfig()
    try:
        with open(path, 'r') as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise UsageError("config file {} does not exist".format(path))
    except json.JSONDecodeError as e:
        raise UsageError("config file {} is not valid JSON: {}".format(path, e))
    return config_from_dict(doc)


def apply_overrides(cfg, args):
    ''' command-line flags take precedence over the config file '''
    if getattr(args, 'seed', None) is not None:
        cfg.seed = args.seed
    if getattr(args, 'data', None) is not None:
        cfg.data.root = args.data
    if getattr(args, 'output', None) is not None:
        cfg.output = args.output
    if getattr(args, 'steps', None) is not None:
        cfg.train.total_steps = args.steps
    if getattr(args, 'fusion', None) is not None:
        cfg.fusion = args.fusion
    if getattr(args, 'tasks', None):
        cfg.data.tasks = list(args.tasks)
    if getattr(args, 'n_jobs', None) is not None:
        cfg.data.n_jobs = args.n_jobs
    if getattr(args, 'n_scenes', None) is not None:
        cfg.data.n_scenes = args.n_scenes
    if getattr(args, 'pretrain_steps', None) is not None:
        cfg.lm.pretrain_steps = args.pretrain_steps
    if getattr(args, 'warmup_steps', None) is not None:
        cfg.encoder.warmup_steps = args.warmup_steps
    return cfg


def _add_common(parser):
    parser.add_argument('--config', type=str, default=None, help='JSON run configuration')
    parser.add_argument('--seed', type=int, default=None)


def _add_generation(parser):
    parser.add_argument('--strategy', type=str, default=None, help='(greedy | beam | sample)')
    parser.add_argument('--beam_size', type=int, default=None)
    parser.add_argument('--top_k', type=int, default=None)
    parser.add_argument('--top_p', type=float, default=None)
    parser.add_argument('--max_new_tokens', type=int, default=None)
    parser.add_argument('--ngram_block', type=int, default=None)


class ArgumentParser(argparse.ArgumentParser):
    ''' reports malformed flags as UsageError instead of exiting '''

    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = ArgumentParser(prog='ll3d', description='3D visual-interactive instruction tuning at desk scale')
    sub = parser.add_subparsers(dest='command')
    sub.required = True

    # datagen
    p = sub.add_parser('datagen', help='generate synthetic scenes, vocabulary and LM corpus')
    _add_common(p)
    p.add_argument('--out', dest='data', type=str, default=None, help='dataset directory')
    p.add_argument('--n_scenes', type=int, default=None)
    p.add_argument('--n_jobs', type=int, default=None, help='Number of parallel jobs')

    # pretrain-lm
    p = sub.add_parser('pretrain-lm', help='pretrain and freeze the language model and the scene encoder')
    _add_common(p)
    p.add_argument('--data', type=str, default=None)
    p.add_argument('--out', type=str, required=True, help='checkpoint path to write')
    p.add_argument('--pretrain_steps', type=int, default=None)
    p.add_argument('--warmup_steps', type=int, default=None)

    # train
    p = sub.add_parser('train', help='instruction-tune the prompt encoder, interactor and projector')
    _add_common(p)
    p.add_argument('--init', type=str, required=True, help='pretrained checkpoint (frozen LM and scene encoder)')
    p.add_argument('--data', type=str, default=None)
    p.add_argument('--output', type=str, default=None, help='run directory for checkpoints and logs')
    p.add_argument('--steps', type=int, default=None)
    p.add_argument('--fusion', type=str, default=None, help='(early | direct)')
    p.add_argument('--finetune_from', '--finetune-from', dest='finetune_from', type=str, default=None)
    p.add_argument('--tasks', nargs='+', type=str, default=None)

    # eval
    p = sub.add_parser('eval', help='evaluate a checkpoint on one task')
    _add_common(p)
    p.add_argument('--checkpoint', type=str, required=True)
    p.add_argument('--data', type=str, default=None)
    p.add_argument('--split', type=str, default='val')
    p.add_argument('--task', type=str, required=True,
                   help='(densecap | qa | scene_description | dialogue | planning | detect)')
    p.add_argument('--click', type=str, default='none', help='(none | related) test-time clicks for qa')
    p.add_argument('--localize', action='store_true', help='densecap: read boxes from the generated text')
    p.add_argument('--proposals', type=str, default=None, help='densecap: JSON file of proposal boxes')
    p.add_argument('--report', type=str, default=None, help='report path prefix (.json / .csv)')
    _add_generation(p)

    # generate
    p = sub.add_parser('generate', help='answer one instruction on one scene')
    _add_common(p)
    p.add_argument('--checkpoint', type=str, required=True)
    p.add_argument('--scene', type=str, required=True)
    p.add_argument('--instruction', type=str, required=True)
    p.add_argument('--click', action='append', default=[], help='x,y,z (repeatable)')
    p.add_argument('--box', action='append', default=[], help='cx,cy,cz,w,h,l (repeatable)')
    _add_generation(p)

    # checkpoint inspect
    p = sub.add_parser('checkpoint', help='checkpoint utilities')
    csub = p.add_subparsers(dest='checkpoint_command')
    csub.required = True
    q = csub.add_parser('inspect', help='print header, config and parameters')
    q.add_argument('path', type=str)

    # ablate-fusion
    p = sub.add_parser('ablate-fusion', help='train early and direct fusion and compare')
    _add_common(p)
    p.add_argument('--init', type=str, required=True)
    p.add_argument('--data', type=str, default=None)
    p.add_argument('--output', type=str, default=None)
    p.add_argument('--steps', type=int, default=None)

    return parser


def generation_config(cfg, args):
    ''' GenerationConfig of cfg with the command-line decoding flags applied '''
    values = dataclasses.asdict(cfg.generation)
    for key in ('strategy', 'beam_size', 'top_k', 'top_p', 'max_new_tokens', 'ngram_block', 'seed'):
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    return GenerationConfig(**values)


def parse_args(argv=None):
    return build_parser().parse_args(argv)
