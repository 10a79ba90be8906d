'''
Dense tensor math used by every learned component.

All math runs on torch float64 tensors; reverse-mode differentiation is torch.autograd.
Gradient policy: gradients must be reset (zero_grad) before every backward call,
a second backward without reset raises ContractError. Double backward is unsupported.
'''
import math

import torch
import torch.nn.functional as F

from utils.errors import DimensionError, ContractError, NonFiniteError

DTYPE = torch.float64
torch.set_default_dtype(DTYPE)


def _check_2d(name, x):
    if x.dim() != 2:
        raise DimensionError("{} must be 2-D, got shape {}".format(name, tuple(x.shape)))


def matmul(a, b):
    _check_2d("a", a)
    _check_2d("b", b)
    if a.size(1) != b.size(0):
        raise DimensionError("matmul inner dimensions disagree: {} vs {}".format(tuple(a.shape), tuple(b.shape)))
    return a @ b


# x : (... x c), normalized over the last axis
def softmax_rows(x):
    return torch.softmax(x, dim=-1)


def layer_norm(x, gain, bias, eps=1e-5):
    c = x.size(-1)
    if gain.shape != (c,) or bias.shape != (c,):
        raise DimensionError("layer_norm affine shape {} / {} does not match {} columns".format(tuple(gain.shape), tuple(bias.shape), c))
    return F.layer_norm(x, (c,), gain, bias, eps)


def gelu(x):
    return F.gelu(x)


# q : (... x Tq x d), k : (... x Tk x d), v : (... x Tk x dv)
# mask : (Tq x Tk) bool, True marks an allowed key
def scaled_dot_attention(q, k, v, mask=None):
    if q.size(-1) != k.size(-1) or k.size(-2) != v.size(-2):
        raise DimensionError("attention shapes disagree: q {} k {} v {}".format(tuple(q.shape), tuple(k.shape), tuple(v.shape)))
    scores = q @ k.transpose(-2, -1) / math.sqrt(q.size(-1))
    if mask is not None:
        if mask.shape != scores.shape[-2:]:
            raise DimensionError("attention mask shape {} does not match scores {}".format(tuple(mask.shape), tuple(scores.shape[-2:])))
        if not bool(mask.any(dim=-1).all()):
            raise ContractError("attention query row with zero allowed keys")
        scores = scores.masked_fill(~mask, -math.inf)
    return softmax_rows(scores) @ v


# logits : (T x V), targets : (T), loss_mask : (T) bool
def masked_cross_entropy(logits, targets, loss_mask):
    _check_2d("logits", logits)
    targets = torch.as_tensor(targets, dtype=torch.long)
    loss_mask = torch.as_tensor(loss_mask, dtype=torch.bool)
    if targets.shape != (logits.size(0),) or loss_mask.shape != targets.shape:
        raise DimensionError("targets/loss_mask must have length {}".format(logits.size(0)))
    if not bool(loss_mask.any()):
        raise ContractError("masked_cross_entropy with every position masked")
    if bool(((targets < 0) | (targets >= logits.size(1))).any()):
        raise DimensionError("target id outside [0, {})".format(logits.size(1)))
    log_probs = torch.log_softmax(logits, dim=-1)
    nll = -log_probs.gather(1, targets.unsqueeze(1)).squeeze(1)
    return nll[loss_mask].mean()


def zero_grad(parameters):
    for param in parameters:
        param.grad = None


def backward(loss, parameters, retain_graph=False):
    '''
    Populates .grad of every tensor in parameters.
    parameters must have been reset by zero_grad first.
    '''
    if loss.numel() != 1:
        raise DimensionError("backward needs a scalar loss, got shape {}".format(tuple(loss.shape)))
    parameters = list(parameters)
    for param in parameters:
        if param.grad is not None:
            raise ContractError("gradients were not reset before backward")
    loss.backward(retain_graph=retain_graph)


class AdamW:
    '''
    Decoupled weight decay Adam over named parameters.

    The update kernel is torch.optim.AdamW; this wrapper checks every gradient
    for finiteness by name and exposes the moments for checkpointing.
    '''
    def __init__(self, named_parameters, lr=1e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.1):
        self.named = list(named_parameters)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.optimizer = torch.optim.AdamW(
            [p for _, p in self.named], lr=lr, betas=betas, eps=eps,
            weight_decay=weight_decay, foreach=False)

    def parameters(self):
        return [p for _, p in self.named]

    def zero_grad(self):
        zero_grad(self.parameters())

    def step(self, lr):
        if not lr > 0:
            raise ContractError("learning rate must be positive, got {}".format(lr))
        for name, param in self.named:
            if param.grad is not None and not bool(torch.isfinite(param.grad).all()):
                raise NonFiniteError("non-finite gradient in parameter {}".format(name))
        for group in self.optimizer.param_groups:
            group['lr'] = lr
        self.optimizer.step()
        self.t += 1

    # returns {name: (m, v)} for every parameter with optimizer state
    def moments(self):
        out = {}
        for name, param in self.named:
            state = self.optimizer.state.get(param)
            if state:
                out[name] = (state['exp_avg'].detach().clone(), state['exp_avg_sq'].detach().clone())
        return out

    def load_moments(self, moments, t):
        for name, param in self.named:
            if name not in moments:
                continue
            m, v = moments[name]
            if m.shape != param.shape or v.shape != param.shape:
                raise DimensionError("optimizer moment shape mismatch for {}".format(name))
            self.optimizer.state[param] = {
                'step': torch.tensor(float(t)),
                'exp_avg': m.clone().to(param.dtype),
                'exp_avg_sq': v.clone().to(param.dtype)}
        self.t = t


def adamw_step(optimizer, lr):
    optimizer.step(lr)
    return optimizer


def cosine_lr(step, total, lr_max, lr_min):
    if step < 0:
        raise ContractError("negative step {}".format(step))
    if total <= 0 or step >= total:
        return lr_min
    return lr_min + 0.5 * (lr_max - lr_min) * (1 + math.cos(math.pi * step / total))


def finite_difference_check(f, x, eps=1e-5):
    '''
    Max over coordinates of |analytic - central difference| / max(1e-8, |analytic| + |numeric|).
    f maps a tensor shaped like x to a scalar tensor.
    '''
    if not 1e-7 <= eps <= 1e-3:
        raise ContractError("finite difference eps {} outside [1e-7, 1e-3]".format(eps))
    xg = x.detach().clone().to(DTYPE).requires_grad_(True)
    analytic, = torch.autograd.grad(f(xg), xg)
    analytic = analytic.detach().reshape(-1)

    base = x.detach().clone().to(DTYPE).reshape(-1)
    numeric = torch.zeros_like(base)
    with torch.no_grad():
        for i in range(base.numel()):
            plus = base.clone()
            plus[i] += eps
            minus = base.clone()
            minus[i] -= eps
            fp = f(plus.reshape(x.shape)).item()
            fm = f(minus.reshape(x.shape)).item()
            numeric[i] = (fp - fm) / (2 * eps)

    denom = torch.clamp(analytic.abs() + numeric.abs(), min=1e-8)
    return ((analytic - numeric).abs() / denom).max().item()
