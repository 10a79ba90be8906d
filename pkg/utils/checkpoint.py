'''
Binary checkpoint format, little-endian throughout:

    magic   b"LL3D"
    u32     format version
    u32     config length, then the RunConfig echo as UTF-8 JSON (sorted keys)
    u32     parameter count, then per parameter:
                u16 name length, name (UTF-8), u8 frozen flag, u8 ndim, u32 dims[ndim], f8 values
    u8      optimizer present, then when present:
                u64 optimizer step t, u32 moment count, per moment:
                u16 name length, name, f8 m values, f8 v values (shape of the named parameter)
    u64     training step

A file is parsed completely before anything is applied to a model.
'''
import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np
import torch

from utils.errors import CheckpointError, FrozenMutationError
from utils.utils import parameter_digest

MAGIC = b"LL3D"
VERSION = 1


@dataclass
class ParameterBlob:
    name: str
    frozen: bool
    values: np.ndarray


@dataclass
class Checkpoint:
    config: dict
    parameters: list
    optimizer_t: int = 0
    moments: dict = field(default_factory=dict)
    has_optimizer: bool = False
    step: int = 0
    version: int = VERSION

    def parameter(self, name):
        for blob in self.parameters:
            if blob.name == name:
                return blob
        raise CheckpointError("checkpoint has no parameter {}".format(name))


def _name_bytes(name):
    data = name.encode('utf-8')
    return struct.pack('<H', len(data)) + data


def to_bytes(ckpt):
    out = [MAGIC, struct.pack('<I', ckpt.version)]
    config = json.dumps(ckpt.config, sort_keys=True).encode('utf-8')
    out += [struct.pack('<I', len(config)), config]
    out.append(struct.pack('<I', len(ckpt.parameters)))
    shapes = {}
    for blob in ckpt.parameters:
        values = np.asarray(blob.values, dtype='<f8')
        shapes[blob.name] = values.shape
        out += [_name_bytes(blob.name), struct.pack('<BB', int(blob.frozen), values.ndim)]
        out.append(struct.pack('<{}I'.format(values.ndim), *values.shape))
        out.append(values.tobytes())
    out.append(struct.pack('<B', int(ckpt.has_optimizer)))
    if ckpt.has_optimizer:
        out.append(struct.pack('<QI', ckpt.optimizer_t, len(ckpt.moments)))
        for name in sorted(ckpt.moments):
            m, v = ckpt.moments[name]
            out += [_name_bytes(name), np.asarray(m, dtype='<f8').tobytes(), np.asarray(v, dtype='<f8').tobytes()]
    out.append(struct.pack('<Q', ckpt.step))
    return b"".join(out)


class _Reader:

    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint: needed {} bytes at offset {}, file has {}".format(n, self.pos, len(self.data)))
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def name(self):
        n, = self.unpack('<H')
        try:
            return self.take(n).decode('utf-8')
        except UnicodeDecodeError:
            raise CheckpointError("corrupt parameter name at offset {}".format(self.pos))

    def reals(self, shape):
        count = int(np.prod(shape)) if len(shape) else 1
        return np.frombuffer(self.take(8 * count), dtype='<f8').reshape(shape).copy()


def from_bytes(data):
    reader = _Reader(data)
    if reader.take(4) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    version, = reader.unpack('<I')
    if version != VERSION:
        raise CheckpointError("unsupported checkpoint version {} (expected {})".format(version, VERSION))
    n, = reader.unpack('<I')
    try:
        config = json.loads(reader.take(n).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise CheckpointError("corrupt config echo")

    n_params, = reader.unpack('<I')
    parameters, shapes = [], {}
    for _ in range(n_params):
        name = reader.name()
        frozen, ndim = reader.unpack('<BB')
        shape = reader.unpack('<{}I'.format(ndim)) if ndim else ()
        shapes[name] = tuple(shape)
        parameters.append(ParameterBlob(name, bool(frozen), reader.reals(tuple(shape))))

    has_optimizer, = reader.unpack('<B')
    t, moments = 0, {}
    if has_optimizer:
        t, n_moments = reader.unpack('<QI')
        for _ in range(n_moments):
            name = reader.name()
            if name not in shapes:
                raise CheckpointError("optimizer moment for unknown parameter {}".format(name))
            moments[name] = (reader.reals(shapes[name]), reader.reals(shapes[name]))
    step, = reader.unpack('<Q')
    if reader.pos != len(data):
        raise CheckpointError("{} trailing bytes after checkpoint".format(len(data) - reader.pos))
    return Checkpoint(config, parameters, t, moments, bool(has_optimizer), step, version)


def save_checkpoint(path, ckpt):
    with open(path, 'wb') as f:
        f.write(to_bytes(ckpt))


def load_checkpoint(path):
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except FileNotFoundError:
        raise CheckpointError("checkpoint {} does not exist".format(path))
    return from_bytes(data)


def make_checkpoint(model, config, optimizer=None, step=0):
    ''' snapshot of every parameter of model, frozen = not requires_grad '''
    parameters = [ParameterBlob(name, not p.requires_grad, p.detach().cpu().numpy().astype('<f8'))
                  for name, p in model.named_parameters()]
    ckpt = Checkpoint(config, parameters, step=step)
    if optimizer is not None:
        ckpt.has_optimizer = True
        ckpt.optimizer_t = optimizer.t
        ckpt.moments = {name: (m.numpy().astype('<f8'), v.numpy().astype('<f8'))
                        for name, (m, v) in optimizer.moments().items()}
    return ckpt


def apply_checkpoint(model, ckpt, strict=True):
    '''
    Copies parameter values and frozen flags into model.
    All names and shapes are checked before the first copy.
    '''
    named = dict(model.named_parameters())
    blobs = {blob.name: blob for blob in ckpt.parameters}
    for name, param in named.items():
        if name not in blobs:
            if strict:
                raise CheckpointError("checkpoint is missing parameter {}".format(name))
            continue
        if tuple(blobs[name].values.shape) != tuple(param.shape):
            raise CheckpointError("parameter {} has shape {} in the checkpoint, the model expects {}".format(
                name, tuple(blobs[name].values.shape), tuple(param.shape)))
    if strict:
        extra = sorted(set(blobs) - set(named))
        if extra:
            raise CheckpointError("checkpoint has unknown parameter {}".format(extra[0]))
    with torch.no_grad():
        for name, param in named.items():
            if name in blobs:
                param.copy_(torch.from_numpy(blobs[name].values))
                param.requires_grad_(not blobs[name].frozen)
    return model


def check_config_dims(saved, current, sections=('encoder', 'mmt', 'lm')):
    ''' raises naming the first dotted config field whose dimension differs '''
    for section in sections:
        for key, value in current.get(section, {}).items():
            saved_value = saved.get(section, {}).get(key, value)
            if key.startswith(('d_', 'n_', 'k_', 'in_', 'max_')) and saved_value != value:
                raise CheckpointError("{}.{} is {} in the checkpoint but {} in the config".format(
                    section, key, saved_value, value))


def checkpoint_digest(ckpt, frozen_only=False):
    return {blob.name: hashlib.sha256(np.asarray(blob.values, dtype='<f8').tobytes()).hexdigest()
            for blob in ckpt.parameters if blob.frozen or not frozen_only}


def assert_frozen_unchanged(reference, model):
    ''' reference : {name: digest} of frozen parameters; raises on any change '''
    current = parameter_digest((n, p) for n, p in model.named_parameters() if n in reference)
    for name, digest in reference.items():
        if current.get(name) != digest:
            raise FrozenMutationError("frozen parameter {} changed during training".format(name))
