'''
Decoding strategies over a step function.

A step function maps the list of token ids generated so far to the log-probabilities
of the next token (a length-V tensor). Ties are broken by lower token id everywhere.
'''
import math
from dataclasses import dataclass

import torch

from utils.errors import UsageError
from langmodels.vocab import EOS

STRATEGIES = ('greedy', 'beam', 'sample')


@dataclass
class GenerationConfig:
    strategy: str = 'beam'
    beam_size: int = 4
    top_k: int = 50
    top_p: float = 0.95
    ngram_block: int = 4
    block_in_beam: bool = False
    block_in_sample: bool = True
    max_new_tokens: int = 128
    seed: int = 0
    end_id: int = EOS

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise UsageError("unknown decoding strategy {!r}, expected one of {}".format(self.strategy, STRATEGIES))
        if self.beam_size < 1 or self.top_k < 1 or self.ngram_block < 1 or self.max_new_tokens < 1:
            raise UsageError("beam_size, top_k, ngram_block and max_new_tokens must all be >= 1")
        if not 0 < self.top_p <= 1:
            raise UsageError("top_p must lie in (0, 1], got {}".format(self.top_p))


@dataclass
class Hypothesis:
    ids: list
    logprob: float


def ngram_block_filter(history, n):
    ''' tokens that would complete an n-gram already present in history '''
    if n < 1:
        raise UsageError("n-gram size must be >= 1, got {}".format(n))
    history = list(history)
    if n == 1:
        return set(history)
    if len(history) < n - 1:
        return set()
    suffix = history[len(history) - (n - 1):]
    banned = set()
    for i in range(len(history) - n + 1):
        if history[i:i + n - 1] == suffix:
            banned.add(history[i + n - 1])
    return banned


def _masked(logprobs, banned):
    logprobs = logprobs.detach().clone()
    if banned:
        logprobs[list(banned)] = -math.inf
    return logprobs


def greedy_search(step_fn, gen):
    ids, score = [], 0.0
    for _ in range(gen.max_new_tokens):
        logprobs = step_fn(ids)
        banned = ngram_block_filter(ids, gen.ngram_block) if gen.block_in_beam else set()
        masked = _masked(logprobs, banned)
        if bool(torch.isinf(masked).all()):
            ids.append(gen.end_id)
            break
        # argmax returns the first maximal index
        tok = int(masked.argmax())
        ids.append(tok)
        score += float(logprobs[tok])
        if tok == gen.end_id:
            break
    return Hypothesis(ids, score)


def beam_search(step_fn, gen):
    '''
    Maximizes the summed log-probability without length normalization.
    Each step keeps the best beam_size expansions ordered by (-score, ids); expansions
    ending in the end token are set aside as finished. The greedy hypothesis is scored
    as well and returned when it beats every beam.
    '''
    beams = [((), 0.0)]
    finished = []
    for _ in range(gen.max_new_tokens):
        candidates = []
        for ids, score in beams:
            logprobs = step_fn(list(ids))
            banned = ngram_block_filter(ids, gen.ngram_block) if gen.block_in_beam else set()
            for tok, lp in enumerate(logprobs.tolist()):
                if tok in banned or lp == -math.inf:
                    continue
                candidates.append((ids + (tok,), score + lp))
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[1], c[0]))
        beams = []
        for ids, score in candidates[:gen.beam_size]:
            if ids[-1] == gen.end_id:
                finished.append((ids, score))
            else:
                beams.append((ids, score))
        if not beams:
            break
        # log-probabilities never increase, a finished hypothesis above every beam is final
        if finished and max(s for _, s in finished) >= beams[0][1]:
            break

    pool = finished + beams
    ids, score = min(pool, key=lambda c: (-c[1], c[0]))
    best = Hypothesis(list(ids), score)

    greedy = greedy_search(step_fn, gen)
    if greedy.logprob > best.logprob:
        return greedy
    return best


def nucleus(logprobs, top_k, top_p):
    '''
    Indices kept by top-k then top-p truncation, in descending probability order.
    Banned entries (-inf) are never kept.
    '''
    values, order = torch.sort(logprobs, descending=True, stable=True)
    keep = int(torch.isfinite(values).sum())
    values, order = values[:min(top_k, keep)], order[:min(top_k, keep)]
    if values.numel() == 0:
        return order
    probs = torch.softmax(values, dim=0)
    cum = torch.cumsum(probs, dim=0)
    # smallest prefix with mass >= p
    reached = torch.nonzero(cum >= top_p - 1e-12)
    cutoff = int(reached[0]) + 1 if reached.numel() else values.numel()
    return order[:cutoff]


def sample_top_k_top_p(step_fn, gen):
    generator = torch.Generator().manual_seed(gen.seed)
    ids, score = [], 0.0
    for _ in range(gen.max_new_tokens):
        logprobs = step_fn(ids)
        banned = ngram_block_filter(ids, gen.ngram_block) if gen.block_in_sample else set()
        allowed = nucleus(_masked(logprobs, banned), gen.top_k, gen.top_p)
        if allowed.numel() == 0:
            ids.append(gen.end_id)
            break
        probs = torch.softmax(logprobs[allowed], dim=0)
        tok = int(allowed[torch.multinomial(probs, 1, generator=generator)])
        ids.append(tok)
        score += float(logprobs[tok])
        if tok == gen.end_id:
            break
    return Hypothesis(ids, score)


def generate(step_fn, gen):
    if gen.strategy == 'greedy':
        return greedy_search(step_fn, gen)
    elif gen.strategy == 'beam':
        return beam_search(step_fn, gen)
    return sample_top_k_top_p(step_fn, gen)
