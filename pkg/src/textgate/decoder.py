"""Attentional GRU decoder over an encoded feature sequence.

Per step: score every feature column against the previous hidden
state, soft-select a context vector, feed [previous-prediction
embedding, context] through a GRU, and project the new state to the 37
output categories. The previous-prediction embedding may be scaled by
an adaptive gate; clamping the gate to 1 reproduces the ungated
decoder bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import vocab
from .encoder import GRUDirection


class AttentionParams:
    def __init__(self, bank, prefix, feat_dim, hidden_dim, units):
        self.units = units
        self.w_s = bank.weight(f"{prefix}/w_s", (hidden_dim, units))
        self.w_f = bank.weight(f"{prefix}/w_f", (feat_dim, units))
        self.b = bank.bias(f"{prefix}/b", (units,))
        self.v = bank.weight(f"{prefix}/v", (units,), fan_in=units)

    def project_features(self, features):
        """Precompute W_f h_j for every column of (B, N, feat_dim)."""
        b, n, d = features.data.shape
        flat = ad.matmul(ad.reshape(features, (b * n, d)), self.w_f)
        return ad.reshape(flat, (b, n, self.units))


def attention_scores(attn, s_prev, features, features_proj=None):
    """Alignment energies e_j = v . tanh(W_s s_prev + W_f h_j + b)."""
    b, n, _ = features.data.shape
    if n == 0:
        raise ValueError("cannot attend over an empty feature sequence")
    if features_proj is None:
        features_proj = attn.project_features(features)
    sp = ad.add(ad.matmul(s_prev, attn.w_s), attn.b)
    m = ad.tanh(ad.add(features_proj, ad.reshape(sp, (b, 1, attn.units))))
    return ad.tsum(ad.mul(m, attn.v), axis=2)


def attention_context(energies, features):
    """Softmax the energies and weight-sum the features: (alpha, context)."""
    b, n, d = features.data.shape
    alpha = ad.softmax(energies, axis=-1)
    weighted = ad.mul(ad.reshape(alpha, (b, n, 1)), features)
    return alpha, ad.tsum(weighted, axis=1)


class Decoder:
    def __init__(self, bank, cfg):
        feat, hidden = cfg.feat_dim, cfg.hidden_dim
        self.prev_mode = cfg.prev_mode
        self.max_steps = cfg.max_steps
        self.hidden_dim = hidden
        self.feat_dim = feat
        self.attn = AttentionParams(bank, "dec.attn", feat, hidden, cfg.attn_units)
        if self.prev_mode == "none":
            gru_in = feat
            self.embedding = None
        else:
            gru_in = cfg.embed_dim + feat
            self.embedding = bank.weight("dec.embed", (vocab.SIZE, cfg.embed_dim),
                                         fan_in=cfg.embed_dim)
        self.gru = GRUDirection(bank, "dec.gru", gru_in, hidden)
        self.w_o = bank.weight("dec.out/w", (hidden, vocab.SIZE))
        self.b_o = bank.bias("dec.out/b", (vocab.SIZE,))


@dataclass
class DecoderState:
    s: ad.Tensor          # (B, hidden) recurrent state
    context: ad.Tensor    # (B, feat) context that produced this state
    t: int = 0
    alpha: ad.Tensor = None


def init_state(dec, batch, dtype):
    zeros = lambda d: ad.constant(np.zeros((batch, d)), dtype=dtype)
    return DecoderState(s=zeros(dec.hidden_dim), context=zeros(dec.feat_dim))


def decode_step(dec, state, features, tokens, gate=None, clamp_gate=False,
                features_proj=None):
    """Advance one step. ``tokens`` holds the previous prediction per row.

    Returns (next_state, probs, gate_score); gate_score is None when no
    gate applies. The context for the new step is computed before the
    recurrence so the gate can compare it against the previous context.
    """
    if state.t >= dec.max_steps:
        raise ValueError(f"decoding past the step budget ({dec.max_steps})")
    energies = attention_scores(dec.attn, state.s, features, features_proj)
    alpha, context = attention_context(energies, features)

    score = None
    if dec.prev_mode == "none":
        x = context
    else:
        tokens = np.asarray(tokens)
        if tokens.ndim != 1 or tokens.max() >= vocab.SIZE or tokens.min() < 0:
            raise ValueError("previous tokens must be indices below 37")
        emb = ad.embed(dec.embedding, tokens)
        if gate is not None and not clamp_gate:
            score = gate.score(context, state.context)
            emb = ad.mul(score, emb)
        x = ad.concat([emb, context], axis=1)

    s_next = dec.gru.cell(x, state.s)
    logits = ad.add(ad.matmul(s_next, dec.w_o), dec.b_o)
    probs = ad.softmax(logits, axis=-1)
    next_state = DecoderState(s=s_next, context=context, t=state.t + 1, alpha=alpha)
    return next_state, probs, score


def greedy_decode(dec, features, gate=None, clamp_gate=False, max_steps=None,
                  prev_rng=None):
    """Feed each argmax back as the next previous token until EOS or the
    step budget. Returns (decoded strings, per-step alphas, per-step
    probs, per-step gate scores); nothing is recorded on any tape.

    ``prev_rng`` drives the 'random' previous-prediction mode and must
    be given for that mode.
    """
    batch = features.data.shape[0]
    limit = max_steps or dec.max_steps
    if limit < 1:
        raise ValueError("need at least one decoding step")
    if dec.prev_mode == "random" and prev_rng is None:
        raise ValueError("random prev_mode needs an rng")
    proj = dec.attn.project_features(features)
    state = init_state(dec, batch, features.dtype)
    tokens = np.full(batch, vocab.EOS, dtype=np.int64)
    done = np.zeros(batch, dtype=bool)
    out_tokens, alphas, probs_seq, scores = [], [], [], []
    for _ in range(limit):
        feed = tokens
        if dec.prev_mode == "random":
            feed = prev_rng.integers(0, vocab.SIZE, size=batch)
        state, probs, score = decode_step(dec, state, features, feed, gate=gate,
                                          clamp_gate=clamp_gate, features_proj=proj)
        picked = probs.data.argmax(axis=-1)
        out_tokens.append(np.where(done, vocab.EOS, picked))
        alphas.append(state.alpha.data)
        probs_seq.append(probs.data)
        if score is not None:
            scores.append(score.data[:, 0])
        done |= picked == vocab.EOS
        tokens = picked
        if done.all():
            break
    stacked = np.stack(out_tokens, axis=1)
    words = [vocab.decode_tokens(stacked[i]) for i in range(batch)]
    return words, alphas, probs_seq, scores


def attn_loss(step_probs, targets):
    """Teacher-forced sequence loss for one sample: -sum log P(target_t).

    ``step_probs`` is a (T, 37) tensor of per-step softmax outputs
    (stack the step outputs), ``targets`` the T target indices with EOS
    last. Stays differentiable when given a tape-recorded tensor.
    """
    targets = np.asarray(targets)
    if step_probs.data.ndim != 2 or step_probs.data.shape[0] != len(targets):
        raise ValueError(f"got {step_probs.data.shape[0]} step distributions "
                         f"for {len(targets)} targets")
    return ad.scale(ad.tsum(ad.log(ad.pick(step_probs, targets))), -1.0)
