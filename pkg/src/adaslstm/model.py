"""Full classifier: token features, sequential encoder, depth-adaptive core, head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import adaptive, classifier, embedding, slstm
from . import tensor as ts
from .adaptive import DepthAssignment, DepthClassifierParams
from .classifier import HeadParams
from .config import ModelConfig
from .data import TokenBatch
from .embedding import CharCNNParams, DepthEmbedding, Vocab
from .sequential import SequentialModule
from .slstm import SLSTMParams, SLSTMState
from .tensor import Tensor


@dataclass
class ForwardResult:
    loss: Tensor | None
    probs: np.ndarray        # [B, n_labels]
    predictions: np.ndarray  # [B]
    assignment: DepthAssignment | None
    state: SLSTMState

    @property
    def word_transitions(self) -> int:
        return self.state.word_transitions

    @property
    def global_transitions(self) -> int:
        return self.state.global_transitions


class AdaptiveClassifier:
    """Sentence classifier with per-word recurrent depth.

    Pipeline: word vectors joined with character CNN features, embedding
    dropout, a sequential encoder over the token sequence, hidden dropout,
    per-word depth assignment, token refinement with a depth embedding, then
    the graph-recurrent core and a pooled softmax head.  With adaptive depth
    off the core runs every word for the full layer count and the sequential
    encoder and depth machinery are skipped entirely.
    """

    def __init__(self, config: ModelConfig, vocab: Vocab, labels: list[str],
                 seed: int = 13, word_table: Tensor | None = None):
        config.validate()
        self.config = config
        self.vocab = vocab
        self.labels = list(labels)
        self.seed = seed
        rng = np.random.default_rng(seed)
        dtype = config.np_dtype

        if word_table is None:
            table = ts.uniform_init(rng, (len(vocab), config.word_dim), 0.05, dtype)
            table[embedding.PAD_ID] = 0.0
            self.word_table = Tensor(table, requires_grad=True)
        else:
            if word_table.shape != (len(vocab), config.word_dim):
                raise ValueError(
                    f"word table shape {word_table.shape} does not match "
                    f"vocab {len(vocab)} x dim {config.word_dim}")
            self.word_table = word_table
        self.char_params = CharCNNParams.init(rng, config.char_embed_dim,
                                              config.char_dim, dtype)
        if config.adaptive_depth:
            self.sequential = SequentialModule(config.sequential, config.token_dim,
                                               config.hidden_size, config.max_positions,
                                               rng, dtype)
            self.depth_params = DepthClassifierParams.init(
                rng, config.hidden_size, config.depth_embed_dim, config.max_layers, dtype)
            self.depth_embed = DepthEmbedding(self.depth_params.w2, config.max_layers)
        else:
            self.sequential = None
            self.depth_params = None
            self.depth_embed = None
        self.slstm_params = SLSTMParams.init(rng, config.hidden_size,
                                             config.refined_dim, dtype)
        self.head_params = HeadParams.init(rng, config.hidden_size, len(labels), dtype)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def named_parameters(self) -> dict[str, Tensor]:
        params = {"embed.words": self.word_table}
        params.update(self.char_params.named())
        if self.sequential is not None:
            params.update(self.sequential.named())
        if self.depth_params is not None:
            params.update(self.depth_params.named())
        params.update(self.slstm_params.named())
        params.update(self.head_params.named())
        return params

    def trainable_parameters(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.named_parameters().items() if v.requires_grad}

    def forward(self, batch: TokenBatch, training: bool = False,
                rng: np.random.Generator | None = None,
                assignment: DepthAssignment | None = None,
                compact_threshold: float = adaptive.COMPACT_THRESHOLD) -> ForwardResult:
        """Run the classifier; gradients are recorded only under an open tape.

        ``rng`` drives dropout and depth sampling; it is required when
        training, and when the selection strategy needs noise.  A precomputed
        ``assignment`` bypasses the depth classifier (benchmark hook).
        """
        cfg = self.config
        if training and rng is None:
            raise ValueError("training forward needs an rng for dropout")
        mask = batch.mask
        char_feats = embedding.char_cnn(batch.char_ids, batch.char_lens, self.char_params)
        tokens = embedding.assemble_tokens(self.word_table, batch.word_ids, char_feats)
        tokens = ts.dropout(tokens, cfg.embed_dropout, rng, training)

        if cfg.adaptive_depth:
            seq = self.sequential(tokens, batch.lengths)
            seq = ts.dropout(seq, cfg.hidden_dropout, rng, training)
            if assignment is None:
                if cfg.selection == "gumbel" and rng is None:
                    raise ValueError("gumbel selection needs an rng")
                assignment = adaptive.compute_assignment(
                    seq, self.depth_params, cfg.selection, mask, tau=cfg.tau, rng=rng)
            refined = embedding.refine_tokens(tokens, self.depth_embed.rows(assignment.depths))
            h0 = adaptive.init_h0(assignment, self.depth_params)
            state = adaptive.adaptive_stack(refined, self.slstm_params, assignment, mask,
                                            h0=h0, compact_threshold=compact_threshold)
        else:
            state = slstm.full_stack(tokens, self.slstm_params, cfg.max_layers, mask)

        feature = classifier.pool_head(state)
        feature = ts.dropout(feature, cfg.hidden_dropout, rng, training)
        probs, predictions = classifier.predict(feature, self.head_params)
        loss = None
        if batch.labels is not None:
            loss = classifier.cross_entropy(probs, batch.labels, cfg.label_smoothing)
        return ForwardResult(loss=loss, probs=probs.data, predictions=predictions,
                             assignment=assignment, state=state)
