import sys, os
sys.path.append(os.pardir)

import torch
import torch.nn as nn

from utils.utils import get_sinusoid_encoding_table, get_causal_mask, weight_init
from utils.numerics import scaled_dot_attention, layer_norm, gelu, masked_cross_entropy
from utils.errors import DimensionError
from langmodels.vocab import BOS


class MultiHeadAttention(nn.Module):
    ''' Multi-Head Attention module, post-norm residual '''

    def __init__(self, n_head, d_model, d_kv=None):
        super().__init__()
        if d_model % n_head != 0:
            raise DimensionError("d_model {} is not divisible by {} heads".format(d_model, n_head))
        d_kv = d_model if d_kv is None else d_kv

        self.n_head = n_head
        self.d_k = d_model // n_head

        # heads are created independently from original q, k, v using linear layers
        # keys and values may come from a space of another width (d_kv)
        self.w_qs = nn.Linear(d_model, d_model)
        self.w_ks = nn.Linear(d_kv, d_model)
        self.w_vs = nn.Linear(d_kv, d_model)
        self.fc = nn.Linear(d_model, d_model)
        self.layer_norm = nn.LayerNorm(d_model)

    # q : (len_q x d_model)
    # k, v : (len_k x d_kv)
    # mask : (len_q x len_k), True marks an allowed pair
    def forward(self, q, k, v, mask=None):
        n_head, d_k = self.n_head, self.d_k
        len_q, len_k = q.size(0), k.size(0)

        residual = q

        # q, k, v : (n_head x seq x d_k)
        q = self.w_qs(q).view(len_q, n_head, d_k).transpose(0, 1)
        k = self.w_ks(k).view(len_k, n_head, d_k).transpose(0, 1)
        v = self.w_vs(v).view(len_k, n_head, d_k).transpose(0, 1)

        # output : (len_q x n_head*d_k)
        output = scaled_dot_attention(q, k, v, mask=mask)
        output = output.transpose(0, 1).reshape(len_q, n_head * d_k)

        output = self.fc(output)
        return layer_norm(output + residual, self.layer_norm.weight, self.layer_norm.bias)


class PositionwiseFeedForward(nn.Module):
    ''' A two-feed-forward-layer module '''

    def __init__(self, d_in, d_hid):
        super().__init__()
        self.w_1 = nn.Linear(d_in, d_hid)
        self.w_2 = nn.Linear(d_hid, d_in)
        self.layer_norm = nn.LayerNorm(d_in)

    # x : (seq x d_model)
    def forward(self, x):
        residual = x
        output = self.w_2(gelu(self.w_1(x)))
        return layer_norm(output + residual, self.layer_norm.weight, self.layer_norm.bias)


class EncoderLayer(nn.Module):
    ''' self attention under a given mask, then feed forward '''

    def __init__(self, d_model, d_inner, n_head):
        super().__init__()
        self.slf_attn = MultiHeadAttention(n_head, d_model)
        self.pos_ffn = PositionwiseFeedForward(d_model, d_inner)

    # enc_input : (seq x d_model)
    # slf_attn_mask : (seq x seq)
    def forward(self, enc_input, slf_attn_mask=None):
        enc_output = self.slf_attn(enc_input, enc_input, enc_input, mask=slf_attn_mask)
        return self.pos_ffn(enc_output)


class CausalLM(nn.Module):
    '''
    Decoder-only language model consuming [prefix; token embeddings].
    The output projection shares its weight with the word embedding.
    '''

    def __init__(self, vocab_size, max_positions, d_model=64, d_inner=128, n_layers=2, n_head=4):
        super().__init__()
        self.vocab_size = vocab_size
        self.max_positions = max_positions
        self.d_model = d_model

        self.word_emb = nn.Embedding(vocab_size, d_model)
        self.position_enc = nn.Embedding.from_pretrained(
            get_sinusoid_encoding_table(max_positions, d_model),
            freeze=True)

        self.layer_stack = nn.ModuleList([
            EncoderLayer(d_model, d_inner, n_head)
            for _ in range(n_layers)])

        self.apply(weight_init)
        nn.init.normal_(self.word_emb.weight, mean=0, std=1.0)

        # Share the weight matrix between word embedding & the final logit dense layer
        self.x_logit_scale = d_model ** -0.5

    def embed(self, ids):
        return self.word_emb(torch.as_tensor(ids, dtype=torch.long).reshape(-1))

    # prefix : (n_prefix x d_model)
    # ids : (seq_len)
    # returns logits : (seq_len x vocab_size), row i predicts token i+1
    def forward(self, prefix, ids):
        ids = torch.as_tensor(ids, dtype=torch.long).reshape(-1)
        if prefix.dim() != 2 or prefix.size(1) != self.d_model:
            raise DimensionError("prefix must be (n x {}), got {}".format(self.d_model, tuple(prefix.shape)))
        n_prefix, seq_len = prefix.size(0), ids.size(0)
        total = n_prefix + seq_len
        if total > self.max_positions:
            raise DimensionError("sequence of {} positions exceeds max_positions {}".format(total, self.max_positions))

        dec_input = torch.cat([prefix, self.word_emb(ids)], dim=0)
        dec_output = dec_input + self.position_enc(torch.arange(total))
        slf_attn_mask = get_causal_mask(total)
        for dec_layer in self.layer_stack:
            dec_output = dec_layer(dec_output, slf_attn_mask=slf_attn_mask)

        return dec_output[n_prefix:] @ self.word_emb.weight.t() * self.x_logit_scale


def lm_forward(lm, prefix, ids):
    return lm(prefix, ids)


def zero_prefix(lm, n_prefix):
    return torch.zeros(n_prefix, lm.d_model)


# seq : TokenSequence starting with <bos>
# returns (nll, logits) where logits row i is scored against token i+1
def sequence_loss(lm, prefix, seq):
    logits = lm(prefix, seq.ids[:-1])
    nll = masked_cross_entropy(logits, seq.ids[1:], seq.loss_mask[1:])
    return nll, logits


def token_accuracy(logits, targets, loss_mask):
    ''' (correct, total) argmax predictions over unmasked positions '''
    targets = torch.as_tensor(targets, dtype=torch.long)
    loss_mask = torch.as_tensor(loss_mask, dtype=torch.bool)
    correct = (logits.argmax(dim=-1) == targets) & loss_mask
    return int(correct.sum()), int(loss_mask.sum())


if __name__ == '__main__':
    lm = CausalLM(vocab_size=300, max_positions=64)
    logits = lm(zero_prefix(lm, 4), [BOS, 5, 6, 7])
    print(logits.size())
