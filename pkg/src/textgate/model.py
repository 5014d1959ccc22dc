"""Full recognizer: encoder + attentional decoder + optional gate.

Holds the parameter bank and implements the two passes the harness
needs: a teacher-forced pass computing the combined training loss over
a padded batch, and greedy decoding for evaluation.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import vocab
from .decoder import Decoder, decode_step, greedy_decode, init_state
from .encoder import Encoder
from .gate import make_gate
from .params import ParamBank


@dataclass
class ForcedResult:
    total: ad.Tensor
    attn: ad.Tensor
    gate: ad.Tensor            # None without gate supervision
    gate_scores: np.ndarray    # (B, L) raw scores, 0 where unsupervised/absent
    alphas: list               # per-step (B, N) attention weights


class Recognizer:
    def __init__(self, cfg, init_seed=0, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.bank = ParamBank(init_seed, dtype=self.dtype)
        self.encoder = Encoder(self.bank, cfg)
        self.decoder = Decoder(self.bank, cfg)
        self.gate = make_gate(cfg.gate, self.bank, cfg.feat_dim, cfg.gate_units)
        self.clamp_gate = cfg.gate_clamp_one

    @property
    def params(self):
        return self.bank.tensors

    def load_params(self, arrays):
        for name, t in self.params.items():
            if name not in arrays:
                raise KeyError(f"checkpoint missing parameter '{name}'")
            src = np.asarray(arrays[name])
            if src.shape != t.data.shape:
                raise ValueError(f"parameter '{name}' shape mismatch: checkpoint "
                                 f"{src.shape}, model {t.data.shape}")
            t.data[...] = src.astype(self.dtype)

    def encode(self, images):
        leaf = ad.Tensor(np.ascontiguousarray(images, dtype=self.dtype))
        return self.encoder.forward(leaf)

    def forced_loss(self, batch, prev_rng=None):
        """Teacher-forced combined loss over a padded Batch.

        Per sample the recognition loss sums -log P(target) over the
        word and its EOS step; the gate loss averages the squared score
        error over the word's non-EOS steps. Both are then averaged
        over the batch. Masks keep padded steps out of either term.
        """
        cfg = self.cfg
        images = batch.images
        n, steps = batch.targets.shape
        features = self.encode(images)
        proj = self.decoder.attn.project_features(features)
        state = init_state(self.decoder, n, self.dtype)

        if self.decoder.prev_mode == "random" and prev_rng is None:
            raise ValueError("random prev_mode needs an rng for training too")

        want_gate = (self.gate is not None and not self.clamp_gate
                     and cfg.gate_loss_weight > 0 and batch.gate_mask.any())
        inv_len = 1.0 / np.maximum(batch.lengths.astype(np.float64), 1.0)
        gate_w = (batch.gate_mask * inv_len[:, None]).astype(self.dtype)

        self_feed = cfg.train_feed == "prediction"
        prev_pred = None
        nll_terms, gate_terms, alphas = [], [], []
        score_cols = []
        for t in range(steps):
            tokens = batch.tokens_in[:, t]
            if self_feed and prev_pred is not None:
                tokens = prev_pred
            if self.decoder.prev_mode == "random":
                tokens = prev_rng.integers(0, vocab.SIZE, size=n)
            state, probs, score = decode_step(
                self.decoder, state, features, tokens,
                gate=self.gate, clamp_gate=self.clamp_gate, features_proj=proj)
            if self_feed:
                prev_pred = probs.data.argmax(axis=-1)
            alphas.append(state.alpha)
            p_target = ad.pick(probs, batch.targets[:, t])
            masked = ad.mul(ad.log(p_target), ad.constant(batch.attn_mask[:, t],
                                                          dtype=self.dtype))
            nll_terms.append(ad.tsum(masked))
            if score is not None and t < steps - 1:
                score_cols.append(score)
                if want_gate:
                    diff = ad.sub(ad.reshape(score, (n,)),
                                  ad.constant(batch.gate_targets[:, t], dtype=self.dtype))
                    sq = ad.mul(ad.mul(diff, diff),
                                ad.constant(gate_w[:, t], dtype=self.dtype))
                    gate_terms.append(ad.tsum(sq))

        total_nll = nll_terms[0]
        for term in nll_terms[1:]:
            total_nll = ad.add(total_nll, term)
        attn = ad.scale(total_nll, -1.0 / n)

        gate_loss = None
        total = attn
        if gate_terms:
            acc = gate_terms[0]
            for term in gate_terms[1:]:
                acc = ad.add(acc, term)
            gate_loss = ad.scale(acc, 1.0 / n)
            total = ad.add(attn, ad.scale(gate_loss, cfg.gate_loss_weight))

        if score_cols:
            gate_scores = np.concatenate([s.data for s in score_cols], axis=1)
        else:
            gate_scores = np.zeros((n, max(steps - 1, 0)), dtype=self.dtype)
        return ForcedResult(total=total, attn=attn, gate=gate_loss,
                            gate_scores=gate_scores, alphas=alphas)

    def recognize(self, images, prev_rng=None, max_steps=None):
        """Greedy-decode a batch of images into strings (plus attention
        weights, step distributions and gate scores)."""
        features = self.encode(images)
        return greedy_decode(self.decoder, features, gate=self.gate,
                             clamp_gate=self.clamp_gate, max_steps=max_steps,
                             prev_rng=prev_rng)

    def forced_gate_scores(self, batch):
        """Gate scores under teacher forcing, for calibration checks.

        Returns (scores, mask): (B, L) arrays; mask marks real steps.
        """
        res = self.forced_loss(batch, prev_rng=np.random.default_rng(0))
        return res.gate_scores, batch.gate_mask
