from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..data_io import Corpus
from ..fusion import ModelConfig
from ..numerics import AdamState, TrainingError, clip_grad_norm
from ..schema_graph import SchemaDef
from .inference import evaluate
from .model import CSFNDST, build_vocab, canonical_ablation, make_targets

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr: float = 1e-4
    epochs: int = 30
    seed: int = 1
    grad_clip: float = 5.0
    ablation: str = "schema"
    strict_paper: bool = False
    patience: int | None = 5  # None: run every epoch, still restoring the best one
    dtype: str = "float32"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")
        self.ablation = canonical_ablation(self.ablation)


@dataclass
class TrainResult:
    model: CSFNDST
    history: list = field(default_factory=list)
    best_epoch: int = 0
    best_valid: float = float("nan")


def turn_examples(dialogues, model: CSFNDST):
    """Teacher-forced examples: gold previous state in, gold targets out."""
    out = []
    for dial in dialogues:
        prev = {}
        for turn in dial.turns:
            state = turn.state_dict()
            enc = model.prepare(turn.system, turn.user, prev)
            out.append((enc, make_targets(prev, state, model.graph, model.vocab)))
            prev = state
    return out


def build_model(corpus: Corpus, schema: SchemaDef, model_cfg: ModelConfig, cfg: TrainConfig) -> CSFNDST:
    if not corpus.train:
        raise ValueError("training split is empty")
    if cfg.strict_paper:
        model_cfg.dropout = 0.0
    vocab = build_vocab(corpus.train, schema)
    return CSFNDST(model_cfg, vocab, schema, seed=cfg.seed, dtype=np.dtype(cfg.dtype), ablation=cfg.ablation)


def batch_loss(model: CSFNDST, batch) -> tuple[float, float]:
    """Forward + backward over one batch; gradients are averaged over its turns."""
    scale = 1.0 / len(batch)
    lg_sum = lv_sum = 0.0
    for enc, targets in batch:
        l_gate, l_value = model.losses(enc, targets)
        total = (l_gate + l_value) * scale
        total.backward()
        lg_sum += float(l_gate.data)
        lv_sum += float(l_value.data)
    return lg_sum * scale, lv_sum * scale


def _non_finite(params) -> list:
    return [p.name for p in params
            if not np.all(np.isfinite(p.data)) or (p.grad is not None and not np.all(np.isfinite(p.grad)))]


def train(corpus: Corpus, schema: SchemaDef, model_cfg: ModelConfig, cfg: TrainConfig,
          log_path=None, model: CSFNDST | None = None) -> TrainResult:
    """Train with teacher forcing and ADAM; early-stop on validation joint accuracy.

    The parameters of the best validation epoch are restored before returning.
    Every optimizer step is logged as a JSON line to ``log_path`` if given.
    """
    model = model or build_model(corpus, schema, model_cfg, cfg)
    params = model.parameters()
    opt = AdamState(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    examples = turn_examples(corpus.train, model)
    result = TrainResult(model)
    best_snap, bad_epochs, step = None, 0, 0
    fh = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            model.train()
            t0 = time.perf_counter()
            order = rng.permutation(len(examples))
            ep_gate = ep_value = 0.0
            for b, start in enumerate(range(0, len(order), cfg.batch_size)):
                batch = [examples[i] for i in order[start : start + cfg.batch_size]]
                model.zero_grads()
                lg, lv = batch_loss(model, batch)
                if not (math.isfinite(lg) and math.isfinite(lv)):
                    raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}: gate={lg}, value={lv}; "
                                        f"non-finite parameters or gradients: {_non_finite(params) or 'none'}")
                if cfg.grad_clip:
                    clip_grad_norm(params, cfg.grad_clip)
                opt.step(params)
                step += 1
                ep_gate += lg * len(batch)
                ep_value += lv * len(batch)
                if fh:
                    fh.write(json.dumps({"epoch": epoch, "step": step, "L_gate": lg, "L_value": lv,
                                         "L_total": lg + lv, "lr": cfg.lr}) + "\n")
            n = len(examples)
            # wall-clock time stays out of the history so checkpoints are reproducible
            entry = {"epoch": epoch, "L_gate": ep_gate / n, "L_value": ep_value / n}
            if corpus.valid:
                report, _ = evaluate(corpus.valid, model)
                entry["valid_joint_accuracy"] = report.joint_accuracy
                if best_snap is None or report.joint_accuracy > result.best_valid:
                    result.best_valid, result.best_epoch = report.joint_accuracy, epoch
                    best_snap, bad_epochs = model.snapshot(), 0
                else:
                    bad_epochs += 1
            else:
                best_snap, result.best_epoch = model.snapshot(), epoch
            result.history.append(entry)
            log.info("epoch %d (%.1fs): %s", epoch, time.perf_counter() - t0, entry)
            if cfg.patience is not None and bad_epochs >= cfg.patience:
                log.info("early stop after %d epochs without improvement", bad_epochs)
                break
    finally:
        if fh:
            fh.close()
    if best_snap is not None:
        model.restore(best_snap)
    model.eval()
    return result


def grid_search(corpus: Corpus, schema: SchemaDef, model_cfg: ModelConfig, cfg: TrainConfig,
                layers=(4, 5, 6, 7, 8)):
    """Train one model per layer count; pick the best validation joint accuracy."""
    results = {}
    for n in layers:
        mc = ModelConfig(**{**model_cfg.__dict__, "n_layers": n})
        results[n] = train(corpus, schema, mc, cfg)
    best = max(results, key=lambda n: (results[n].best_valid, -n))
    return best, results
