"""Scikit-learn style estimator wrapping the recognizer.

fit(X, y) trains on (images, transcriptions); predict(X) returns the
decoded strings. Hyperparameters follow sklearn conventions (stored
verbatim in __init__, validated in fit), so the estimator composes
with clone, get_params / set_params and pipeline machinery.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator

from . import autodiff as ad
from . import data as dt
from . import supervision as sv
from .config import ExperimentConfig
from .metrics import sequence_accuracy
from .model import Recognizer
from .optim import Adadelta


class TextGateRecognizer(BaseEstimator):
    """Attentional encoder-decoder word recognizer with an adaptive
    embedding gate.

    Parameters mirror the experiment configuration: ``gate`` selects
    the gate instantiation ('none', 'add', 'dot', 'concat'),
    ``supervision`` how gate targets are labeled ('weak',
    'word-frequency', 'root'), ``prev_mode`` how the previous
    prediction feeds the decoder ('normal', 'none', 'random').
    """

    def __init__(self, gate="add", supervision="root", prev_mode="normal",
                 gate_loss_weight=1.0, iterations=1500, batch_size=64,
                 learning_rate=1.0, seed=0, feat_dim=64, hidden_dim=64,
                 embed_dim=32, attn_units=64, gate_units=64, max_steps=25,
                 log_every=100, warm_start=False, verbose=False):
        self.gate = gate
        self.supervision = supervision
        self.prev_mode = prev_mode
        self.gate_loss_weight = gate_loss_weight
        self.iterations = iterations
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.feat_dim = feat_dim
        self.hidden_dim = hidden_dim
        self.embed_dim = embed_dim
        self.attn_units = attn_units
        self.gate_units = gate_units
        self.max_steps = max_steps
        self.log_every = log_every
        self.warm_start = warm_start
        self.verbose = verbose

    def _config(self):
        return ExperimentConfig(
            gate=self.gate, supervision=self.supervision, prev_mode=self.prev_mode,
            gate_loss_weight=self.gate_loss_weight, iterations=self.iterations,
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            seed=self.seed, feat_dim=self.feat_dim, hidden_dim=self.hidden_dim,
            embed_dim=self.embed_dim, attn_units=self.attn_units,
            gate_units=self.gate_units, max_steps=self.max_steps,
            rnn_hidden=self.feat_dim // 2, log_every=self.log_every,
        ).validate()

    def fit(self, X, y):
        """Train on images ``X`` (n, 32, 100) and their transcriptions ``y``.

        Batches are sampled with replacement from the provided pairs;
        everything is deterministic given ``seed``. With
        ``warm_start=True`` a second fit continues from the current
        parameters instead of reinitializing.
        """
        from .validation import check_images, check_matching_lengths, check_words

        cfg = self._config()
        X = check_images(X)
        check_matching_lengths(X, y)
        words = check_words(y, max_len=cfg.max_steps - 1)

        labeler = sv.make_labeler(cfg.supervision)
        resume = self.warm_start and hasattr(self, "model_")
        if resume:
            model = self.model_
            optimizer = self.optimizer_
            rng = self._sampling_rng_
            prev_rng = self._prev_rng_
        else:
            model = Recognizer(cfg, init_seed=dt.content_seed(cfg.seed, "init"))
            optimizer = Adadelta(model.params, rho=cfg.rho, eps=cfg.epsilon)
            rng = np.random.default_rng(dt.content_seed(cfg.seed, "fit-sampling"))
            prev_rng = None
            if cfg.prev_mode == "random":
                prev_rng = np.random.default_rng(dt.content_seed(cfg.seed, "prev-random"))

        losses = list(self.loss_curve_) if resume else []
        for step in range(1, cfg.iterations + 1):
            pick = rng.integers(0, len(words), size=min(cfg.batch_size, len(words)))
            batch = dt.make_batch([words[i] for i in pick], labeler,
                                  dt.RenderSpec(""), np.zeros(len(pick)),
                                  images=X[pick])
            with ad.Tape() as tape:
                result = model.forced_loss(batch, prev_rng=prev_rng)
            loss = result.total.item()
            if not math.isfinite(loss):
                raise RuntimeError(f"training loss became non-finite at step {step}")
            tape.backward(result.total)
            optimizer.step(cfg.learning_rate_at(step))
            optimizer.zero_grad()
            if step % cfg.log_every == 0 or step == 1:
                losses.append(loss)
                if self.verbose:
                    print(f"step {step}/{cfg.iterations} loss {loss:.4f}")

        self.model_ = model
        self.optimizer_ = optimizer
        self.config_ = cfg
        self.loss_curve_ = losses
        self.n_iter_ = (self.n_iter_ if resume else 0) + cfg.iterations
        self._sampling_rng_ = rng
        self._prev_rng_ = prev_rng
        return self

    def predict(self, X):
        """Decode images to strings (object array)."""
        self._check_fitted()
        from .validation import check_images

        X = check_images(X)
        preds = []
        prev_rng = None
        if self.config_.prev_mode == "random":
            prev_rng = np.random.default_rng(dt.content_seed(self.config_.seed,
                                                             "predict-prev"))
        for lo in range(0, len(X), self.config_.batch_size):
            words, _, _, _ = self.model_.recognize(X[lo:lo + self.config_.batch_size],
                                                   prev_rng=prev_rng)
            preds.extend(words)
        return np.array(preds, dtype=object)

    def predict_gate_scores(self, X, y):
        """Teacher-forced gate scores for (image, transcription) pairs.

        Returns a list of per-word float arrays; empty arrays when the
        model has no gate.
        """
        self._check_fitted()
        from .validation import check_images, check_matching_lengths, check_words

        X = check_images(X)
        check_matching_lengths(X, y)
        words = check_words(y, max_len=self.config_.max_steps - 1)
        out = []
        for lo in range(0, len(X), self.config_.batch_size):
            chunk_words = words[lo:lo + self.config_.batch_size]
            batch = dt.make_batch(chunk_words, None, dt.RenderSpec(""),
                                  np.zeros(len(chunk_words)), images=X[lo:lo + len(chunk_words)])
            if self.model_.gate is None:
                out.extend([np.zeros(0)] * len(chunk_words))
                continue
            scores, _ = self.model_.forced_gate_scores(batch)
            for i, w in enumerate(chunk_words):
                out.append(scores[i, :len(w)].copy())
        return out

    def score(self, X, y):
        """Sequence accuracy: fraction of exact caseless matches."""
        from .validation import check_words

        preds = self.predict(X)
        return sequence_accuracy(list(preds), check_words(y))

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit(X, y) first")
