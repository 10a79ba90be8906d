'''
Caption metrics: BLEU-4, ROUGE-L and CiDEr-D.

Captions are lowercased and split into words and single punctuation marks before scoring.
'''
import math
from collections import Counter, defaultdict

import numpy as np
import regex

WORD_RE = regex.compile(r"\w+|[^\w\s]")
BLEU_EPS = 1e-9


def tokenize_caption(text):
    return WORD_RE.findall(text.lower())


def ngrams(words, n):
    return [tuple(words[i:i + n]) for i in range(len(words) - n + 1)]


def bleu4(candidate, references, max_n=4):
    '''
    Geometric mean of clipped n-gram precisions (n = 1..4) times the brevity penalty.
    Zero clipped counts are smoothed to 1e-9; an order without candidate n-grams
    counts as a zero clipped count over a denominator of 1.
    '''
    cand = tokenize_caption(candidate)
    refs = [tokenize_caption(r) for r in references]
    refs = [r for r in refs if r]
    if not cand or not refs:
        return 0.0

    log_precision = 0.0
    for n in range(1, max_n + 1):
        counts = Counter(ngrams(cand, n))
        max_ref = Counter()
        for ref in refs:
            for gram, count in Counter(ngrams(ref, n)).items():
                max_ref[gram] = max(max_ref[gram], count)
        clipped = sum(min(count, max_ref[gram]) for gram, count in counts.items())
        total = sum(counts.values())
        if total == 0:
            clipped, total = 0, 1
        log_precision += math.log(max(clipped, BLEU_EPS) / total) / max_n

    # closest reference length, the shorter one on ties
    c = len(cand)
    r = min((abs(len(ref) - c), len(ref)) for ref in refs)[1]
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return bp * math.exp(log_precision)


def lcs_length(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i][j] = table[i - 1][j - 1] + 1
            else:
                table[i][j] = max(table[i - 1][j], table[i][j - 1])
    return table[len(a)][len(b)]


def rouge_l(candidate, references, beta=1.2):
    ''' LCS F-measure ((1 + beta^2) P R) / (R + beta^2 P), max over references '''
    cand = tokenize_caption(candidate)
    if not cand:
        return 0.0
    best = 0.0
    for reference in references:
        ref = tokenize_caption(reference)
        if not ref:
            continue
        lcs = lcs_length(cand, ref)
        if lcs == 0:
            continue
        p, r = lcs / len(cand), lcs / len(ref)
        best = max(best, ((1 + beta ** 2) * p * r) / (r + beta ** 2 * p))
    return best


class CiderD:
    """
    CiDEr-D over a corpus: TF-IDF weighted n-gram vectors (n = 1..4), clipped cosine
    similarity, gaussian length penalty, scaled by 10.
    Document frequencies come from the reference sets of the corpus.
    """

    def __init__(self, n=4, sigma=6.0):
        self._n = n
        self._sigma = sigma

    def _cook(self, text):
        words = tokenize_caption(text)
        counts = Counter()
        for k in range(1, self._n + 1):
            counts.update(ngrams(words, k))
        return counts, len(words)

    def _vec(self, counts, df, ref_len):
        vec = [defaultdict(float) for _ in range(self._n)]
        norm = [0.0] * self._n
        for gram, tf in counts.items():
            k = len(gram) - 1
            vec[k][gram] = float(tf) * (ref_len - np.log(max(1.0, df[gram])))
            norm[k] += vec[k][gram] ** 2
        return vec, [np.sqrt(v) for v in norm]

    def _sim(self, hyp, ref):
        (vec_hyp, norm_hyp, len_hyp), (vec_ref, norm_ref, len_ref) = hyp, ref
        delta = float(len_hyp - len_ref)
        val = np.zeros(self._n)
        for k in range(self._n):
            for gram in vec_hyp[k]:
                val[k] += min(vec_hyp[k][gram], vec_ref[k][gram]) * vec_ref[k][gram]
            if norm_hyp[k] != 0 and norm_ref[k] != 0:
                val[k] /= norm_hyp[k] * norm_ref[k]
            val[k] *= np.e ** (-(delta ** 2) / (2 * self._sigma ** 2))
        return val

    def compute_score(self, gts, res):
        '''
        gts : {id: [reference captions]}, the whole corpus
        res : {id: [candidate caption]} for a subset of the ids in gts
        returns (mean score, {id: score})
        '''
        cooked = {key: [self._cook(r) for r in refs] for key, refs in gts.items()}
        df = Counter()
        for refs in cooked.values():
            df.update(set(gram for counts, _ in refs for gram in counts))
        ref_len = np.log(float(len(cooked))) if cooked else 0.0

        scores = {}
        for key, hypo in res.items():
            assert len(hypo) == 1
            counts, length = self._cook(hypo[0])
            vec, norm = self._vec(counts, df, ref_len)
            total = np.zeros(self._n)
            for ref_counts, ref_length in cooked[key]:
                ref_vec, ref_norm = self._vec(ref_counts, df, ref_len)
                total += self._sim((vec, norm, length), (ref_vec, ref_norm, ref_length))
            score = np.mean(total) / max(1, len(cooked[key])) * 10.0
            scores[key] = float(score)
        mean = float(np.mean(list(scores.values()))) if scores else 0.0
        return mean, scores

    def method(self):
        return "CIDEr-D"


def cider_d(candidates, references):
    ''' per-item CiDEr-D of candidates[i] against references[i], the list being the corpus '''
    gts = {i: list(refs) for i, refs in enumerate(references)}
    res = {i: [c] for i, c in enumerate(candidates)}
    _, scores = CiderD().compute_score(gts, res)
    return [scores[i] for i in range(len(candidates))]


def exact_match(candidate, references):
    cand = tokenize_caption(candidate)
    return float(any(cand == tokenize_caption(r) for r in references))
