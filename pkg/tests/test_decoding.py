import math

import numpy as np
import pytest
import torch

from langmodels.decoding import (GenerationConfig, Hypothesis, ngram_block_filter, nucleus, greedy_search,
                                 beam_search, sample_top_k_top_p, generate)
from utils.errors import UsageError

A, B, END = 0, 1, 2


def markov(table):
    ''' step function from {last token: probabilities}, None keys the first step '''
    def step(history):
        last = history[-1] if history else None
        return torch.log(torch.tensor(table[last]))
    return step


# greedy takes a, a (0.5 * 0.34); the best sequence is b, end (0.4 * 0.9)
TRAP = markov({None: [0.5, 0.4, 0.1], A: [0.34, 0.33, 0.33], B: [0.05, 0.05, 0.9]})


def test_generation_config_validation():
    with pytest.raises(UsageError):
        GenerationConfig(strategy='nucleus')
    with pytest.raises(UsageError):
        GenerationConfig(top_p=0.0)
    with pytest.raises(UsageError):
        GenerationConfig(beam_size=0)


def test_ngram_block_filter():
    assert ngram_block_filter([1, 2, 3, 1, 2], 3) == {3}
    assert ngram_block_filter([1, 2, 3], 1) == {1, 2, 3}
    assert ngram_block_filter([1], 3) == set()
    assert ngram_block_filter([1, 2, 3, 4], 2) == set()


def test_greedy_is_myopic():
    hyp = greedy_search(TRAP, GenerationConfig(strategy='greedy', max_new_tokens=2, end_id=END))
    assert hyp.ids == [A, A]
    assert hyp.logprob == pytest.approx(math.log(0.5 * 0.34))


def test_beam_finds_better_sequence():
    hyp = beam_search(TRAP, GenerationConfig(strategy='beam', beam_size=2, max_new_tokens=2, end_id=END))
    assert hyp.ids == [B, END]
    assert hyp.logprob == pytest.approx(math.log(0.4 * 0.9))


def test_beam_never_worse_than_greedy():
    step = markov({None: [0.6, 0.3, 0.1], A: [0.1, 0.1, 0.8], B: [0.3, 0.3, 0.4]})
    gen = GenerationConfig(strategy='beam', beam_size=1, max_new_tokens=3, end_id=END)
    assert beam_search(step, gen).logprob >= greedy_search(step, gen).logprob - 1e-12


def test_greedy_stops_at_end():
    step = markov({None: [0.1, 0.1, 0.8]})
    hyp = generate(step, GenerationConfig(strategy='greedy', max_new_tokens=5, end_id=END))
    assert hyp.ids == [END]


def test_greedy_ties_take_lower_id():
    step = markov({None: [0.4, 0.4, 0.2], A: [0.1, 0.1, 0.8]})
    hyp = greedy_search(step, GenerationConfig(strategy='greedy', max_new_tokens=3, end_id=END))
    assert hyp.ids == [A, END]


def test_nucleus():
    lp = torch.log(torch.tensor([0.5, 0.3, 0.2]))
    assert nucleus(lp, 3, 0.7).tolist() == [0, 1]
    assert nucleus(lp, 1, 1.0).tolist() == [0]
    assert nucleus(lp, 3, 1.0).tolist() == [0, 1, 2]
    banned = lp.clone()
    banned[0] = -math.inf
    assert nucleus(banned, 3, 1.0).tolist() == [1, 2]


def test_sampling_is_seeded():
    step = markov({None: [0.4, 0.3, 0.3], A: [0.4, 0.3, 0.3], B: [0.4, 0.3, 0.3]})
    gen = GenerationConfig(strategy='sample', top_k=3, top_p=1.0, max_new_tokens=6, seed=7,
                           block_in_sample=False, end_id=END)
    assert sample_top_k_top_p(step, gen).ids == sample_top_k_top_p(step, gen).ids


def test_top_k_one_sampling_is_greedy():
    step = markov({None: [0.5, 0.3, 0.2], A: [0.2, 0.5, 0.3], B: [0.1, 0.1, 0.8]})
    sample = GenerationConfig(strategy='sample', top_k=1, max_new_tokens=4, block_in_sample=False, end_id=END)
    greedy = GenerationConfig(strategy='greedy', max_new_tokens=4, end_id=END)
    assert generate(step, sample).ids == generate(step, greedy).ids == [A, B, END]


def test_unigram_blocking_in_sampling():
    step = markov({None: [0.9, 0.05, 0.05], A: [0.9, 0.05, 0.05], B: [0.9, 0.05, 0.05]})
    gen = GenerationConfig(strategy='sample', top_k=3, top_p=1.0, ngram_block=1, max_new_tokens=4, end_id=END)
    hyp = sample_top_k_top_p(step, gen)
    body = [t for t in hyp.ids if t != END]
    assert len(body) == len(set(body))


def test_max_new_tokens_bounds_length():
    step = markov({None: [0.6, 0.4, 0.0], A: [0.6, 0.4, 0.0], B: [0.6, 0.4, 0.0]})
    for strategy in ('greedy', 'beam', 'sample'):
        hyp = generate(step, GenerationConfig(strategy=strategy, beam_size=2, max_new_tokens=3,
                                              block_in_sample=False, end_id=END))
        assert isinstance(hyp, Hypothesis)
        assert len(hyp.ids) <= 3


def random_tree(rng, vocab_size, depth, end):
    ''' step function with an independent random distribution for every prefix '''
    table = {}
    frontier = [()]
    for _ in range(depth):
        grown = []
        for prefix in frontier:
            table[prefix] = torch.log(torch.tensor(rng.dirichlet(np.ones(vocab_size))))
            grown.extend(prefix + (t,) for t in range(vocab_size) if t != end)
        frontier = grown
    return lambda history: table[tuple(history)]


def exhaustive_best(step, vocab_size, depth, end, prefix=(), score=0.0):
    if len(prefix) == depth or (prefix and prefix[-1] == end):
        return score, prefix
    logprobs = step(list(prefix))
    return max(exhaustive_best(step, vocab_size, depth, end, prefix + (t,), score + float(logprobs[t]))
               for t in range(vocab_size))


def test_exhaustive_beam_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        vocab_size, depth = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        step = random_tree(rng, vocab_size, depth, END % vocab_size)
        gen = GenerationConfig(strategy='beam', beam_size=vocab_size ** depth, max_new_tokens=depth,
                               end_id=END % vocab_size)
        score, ids = exhaustive_best(step, vocab_size, depth, END % vocab_size)
        hyp = beam_search(step, gen)
        assert hyp.ids == list(ids)
        assert hyp.logprob == pytest.approx(score, abs=1e-9)


def test_sampling_frequencies_follow_truncated_distribution():
    probs = torch.tensor([0.35, 0.25, 0.2, 0.1, 0.06, 0.04])
    logprobs = torch.log(probs)
    n = 10000
    gen = GenerationConfig(strategy='sample', top_k=4, top_p=0.75, max_new_tokens=n, seed=3,
                           block_in_sample=False, end_id=5)
    hyp = sample_top_k_top_p(lambda history: logprobs, gen)
    assert len(hyp.ids) == n

    kept = nucleus(logprobs, 4, 0.75).tolist()
    assert kept == [0, 1, 2]
    expected = probs[kept] / probs[kept].sum()
    counts = np.bincount(hyp.ids, minlength=6)
    assert counts[3:].sum() == 0
    for tok, p in zip(kept, expected.tolist()):
        sigma = math.sqrt(n * p * (1 - p))
        assert abs(counts[tok] - n * p) <= 3 * sigma


def test_sampled_tokens_stay_inside_nucleus():
    g = torch.Generator().manual_seed(0)
    vocab_size = 7
    table = torch.randn(vocab_size + 1, vocab_size, generator=g) * 2
    seen = []

    def step(history):
        logprobs = torch.log_softmax(table[history[-1] if history else vocab_size], dim=0)
        seen.append((list(history), logprobs))
        return logprobs

    for seed in range(100):
        seen.clear()
        gen = GenerationConfig(strategy='sample', top_k=4, top_p=0.8, ngram_block=2, max_new_tokens=20,
                               seed=seed, end_id=END)
        hyp = sample_top_k_top_p(step, gen)
        for (history, logprobs), tok in zip(seen, hyp.ids):
            masked = logprobs.clone()
            banned = ngram_block_filter(history, 2)
            if banned:
                masked[list(banned)] = -math.inf
            allowed = nucleus(masked, 4, 0.8).tolist()
            assert tok in allowed or (not allowed and tok == END)


def test_sampling_never_repeats_a_blocked_ngram():
    vocab_size = 8
    end = vocab_size - 1

    def step(history):
        logits = torch.zeros(vocab_size)
        last = history[-1] if history else 0
        logits[(last + 1) % end] = 6.0
        logits[end] = -8.0
        return torch.log_softmax(logits, dim=0)

    for seed in range(100):
        gen = GenerationConfig(strategy='sample', top_k=vocab_size, top_p=1.0, ngram_block=4,
                               max_new_tokens=64, seed=seed, end_id=end)
        ids = sample_top_k_top_p(step, gen).ids
        grams = [tuple(ids[i:i + 4]) for i in range(len(ids) - 3)]
        assert len(grams) == len(set(grams))
