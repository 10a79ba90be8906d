import sys, os
sys.path.append(os.pardir)
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import regex
import torch
import torchtext.vocab

from utils.utils import sec2str
from utils.errors import DataError

# reserved tokens come first, ids are fixed by this order
RESERVED = ["<pad>", "<bos>", "<eos>", "<unk>", "### human:", "### assistant:",
            "<loc>", "</loc>", "<obj>", "</obj>", ",", "<nl>"]
PAD, BOS, EOS, UNK, HUMAN, ASSISTANT = range(6)
NEWLINE = "<nl>"
INTEGER_TOKENS = [str(i) for i in range(256)]

TOKEN_RE = regex.compile(r"### human:|### assistant:|</?loc>|</?obj>|\n|\w+|[^\w\s]")

NO_SPACE_AFTER = {"<loc>", "<obj>", NEWLINE}
NO_SPACE_BEFORE = {"</loc>", "</obj>", NEWLINE}


def tokenize(text):
    ''' lowercased word / punctuation / identifier tokens, newline kept as "<nl>" '''
    return [NEWLINE if tok == "\n" else tok for tok in TOKEN_RE.findall(text.lower())]


@dataclass
class TokenSequence:
    ids: list = field(default_factory=list)
    loss_mask: list = field(default_factory=list)

    def __post_init__(self):
        self.ids = [int(i) for i in self.ids]
        self.loss_mask = [bool(m) for m in self.loss_mask]
        if len(self.ids) != len(self.loss_mask):
            raise DataError("token ids and loss_mask lengths differ: {} vs {}".format(len(self.ids), len(self.loss_mask)))

    def __len__(self):
        return len(self.ids)

    def __add__(self, other):
        return TokenSequence(self.ids + other.ids, self.loss_mask + other.loss_mask)

    def with_mask(self, value):
        return TokenSequence(list(self.ids), [value] * len(self.ids))

    def tensor(self):
        return torch.tensor(self.ids, dtype=torch.long)


class Vocabulary:
    ''' token string <-> id bijection, ordered as reserved, integers 0..255, corpus words '''

    def __init__(self, itos):
        itos = list(itos)
        if itos[:len(RESERVED)] != RESERVED:
            raise DataError("vocabulary does not start with the reserved tokens")
        if itos[len(RESERVED):len(RESERVED) + 256] != INTEGER_TOKENS:
            raise DataError("vocabulary is missing the integer tokens 0..255")
        seen = set()
        for tok in itos:
            if tok in seen:
                raise DataError("duplicate vocabulary entry: {!r}".format(tok))
            seen.add(tok)
        self.vocab = torchtext.vocab.vocab(OrderedDict((tok, 1) for tok in itos))
        self.vocab.set_default_index(UNK)
        self.itos = self.vocab.get_itos()
        self.stoi = self.vocab.get_stoi()

    def __len__(self):
        return len(self.vocab)

    def __contains__(self, token):
        return token in self.vocab

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    def id(self, token):
        return self.vocab[token]

    def lookup(self, tokens):
        return self.vocab.lookup_indices(list(tokens))

    def save(self, path):
        with open(path, 'w', encoding='utf-8') as f:
            for tok in self.itos:
                f.write(tok + "\n")

    @classmethod
    def load(cls, path):
        with open(path, 'r', encoding='utf-8') as f:
            itos = [line.rstrip("\n") for line in f]
        return cls(itos)


# builds vocabulary from a list of strings
# ids after the reserved and integer tokens are ordered by (frequency desc, lexicographic)
def build_vocab(corpus, min_freq=1, verbose=False):
    before = time.time()
    built = torchtext.vocab.build_vocab_from_iterator(
        (tokenize(text) for text in corpus), min_freq=min_freq,
        specials=RESERVED + INTEGER_TOKENS, special_first=True)
    vocab = Vocabulary(built.get_itos())
    if verbose:
        print("{} | # of words in vocab: {}".format(sec2str(time.time() - before), len(vocab)), flush=True)
    return vocab


def encode_text(text, vocab, loss=False):
    ids = vocab.lookup(tokenize(text))
    return TokenSequence(ids, [loss] * len(ids))


def _is_punct(tok):
    return len(tok) == 1 and not tok.isalnum() and tok not in ('"', "_")


def detokenize(tokens):
    '''
    joins tokens with single spaces, except before punctuation and closing spatial
    delimiters, and after opening spatial delimiters; double quotes alternate
    between opening and closing
    '''
    out = []
    prev = None
    quote_open = False
    for tok in tokens:
        text = "\n" if tok == NEWLINE else tok
        space = prev is not None
        if tok == '"':
            if quote_open:
                space = False
            quote_open = not quote_open
        elif tok in NO_SPACE_BEFORE or _is_punct(tok):
            space = False
        if prev in NO_SPACE_AFTER or prev == "open-quote":
            space = False
        if space:
            out.append(" ")
        out.append(text)
        prev = "open-quote" if tok == '"' and quote_open else tok
    return "".join(out)


# ids : list or torch.LongTensor, special ids are dropped
def decode_tokens(ids, vocab):
    if isinstance(ids, torch.Tensor):
        ids = ids.tolist()
    tokens = [vocab.itos[i] for i in ids if i not in (PAD, BOS, EOS)]
    return detokenize(tokens)


# for debugging
if __name__ == '__main__':

    vocab = build_vocab(["the red chair is next to the table.", "what color is the chair?"], verbose=True)
    seq = encode_text('### human: given the 3D scene, answer the question: "what color is the chair?" ### assistant:', vocab)
    print(seq.ids)
    print(decode_tokens(seq.ids, vocab))
