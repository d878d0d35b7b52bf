"""Training loop, optimizer, and evaluation.

Everything is driven by one seeded generator: parameter init and batch
sampling both draw from it in a fixed order, and the optimizer visits
parameters in insertion order, so two runs with the same seed, data,
and config produce bitwise-identical checkpoints and metrics logs.

Pseudo-labels are computed once before the first step (they depend only
on pixels), and evaluation never touches them: the inference path is
encoder, optional mask/glyph heads, decoder, nothing else.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .alignment import THETA_THRESHOLD, theta_metric
from .checkpoint import config_from_meta, load_checkpoint, save_checkpoint
from .config import TrainConfig
from .counters import COUNTERS
from .data import read_dataset
from .decoder import VOCAB, encode, greedy_decode
from .errors import ConfigError, ContractError, DegenerateImage, NumericError
from .glan import glyph_head_forward
from .model import _make_fuse_fn, init_params, total_loss
from .tensor import backward, no_grad, rng, tape
from .textseg import kmeans_mask, pyramid_forward

EVAL_BATCH = 32
METRICS_COLUMNS = ("step", "loss_total", "loss_rec", "loss_ins",
                   "loss_seq", "loss_seg", "acc", "theta")


class Adam:
    """Standard Adam with bias correction; float64 state throughout."""

    def __init__(self, params: dict, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else 0.0
            self.m[k] = self.b1 * self.m[k] + (1.0 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1.0 - self.b2) * g * g
            p.data -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_gradients(params: dict, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm.

    Returns the pre-clip norm.  max_norm <= 0 measures without scaling.
    """
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = total ** 0.5
    if max_norm > 0.0 and norm > max_norm:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


def prepare_pseudo_labels(samples, cfg: TrainConfig):
    """k-means foreground per sample; degenerate images get flagged out."""
    n = len(samples)
    s_pl = np.full((n, 1, cfg.height, cfg.width), 0.5)
    valid = np.ones(n)
    for i, s in enumerate(samples):
        try:
            s_pl[i, 0] = kmeans_mask(s.image, k=cfg.kmeans_k)
        except DegenerateImage:
            valid[i] = 0.0
    return s_pl, valid


def _beta_rows(alpha: np.ndarray, width: int) -> np.ndarray:
    """Value-level stretch of attention rows to image width."""
    return alpha @ T._interp_matrix(alpha.shape[-1], width)


def mean_theta(alpha: np.ndarray, boxes_list, width: int) -> float:
    """Average box IoU over every scored character of every sample."""
    scores = []
    beta = _beta_rows(alpha, width)
    for i, boxes in enumerate(boxes_list):
        for t, box in enumerate(boxes[:beta.shape[1]]):
            scores.append(theta_metric(beta[i, t], box, width, THETA_THRESHOLD))
    return float(np.mean(scores)) if scores else 0.0


def infer_batch(images: np.ndarray, params: dict, cfg: TrainConfig):
    """Greedy inference; returns (predictions, alpha).

    Touches only the encoder, decoder, and (for fusion models) the mask
    and glyph heads.  Never builds pseudo-labels or alignment terms.
    """
    with no_grad():
        enc = encode(images, params)
        fuse_fn = None
        if cfg.enable_acfm:
            _, o0 = pyramid_forward(enc.p0, enc.p1, enc.p2, params)
            s_gam, feats = glyph_head_forward(o0, params)
            fuse_fn = _make_fuse_fn(feats, s_gam, params, cfg)
        preds, _, alpha = greedy_decode(enc, params, cfg.t_steps, fuse_fn=fuse_fn)
    return preds, alpha


def _quick_metrics(samples, idxs, params, cfg: TrainConfig):
    accs, alphas, boxes = [], [], []
    for lo in range(0, len(idxs), EVAL_BATCH):
        chunk = idxs[lo:lo + EVAL_BATCH]
        images = np.stack([samples[i].image for i in chunk])[:, None]
        preds, alpha = infer_batch(images, params, cfg)
        accs += [p == samples[i].label.lower() for p, i in zip(preds, chunk)]
        alphas.append(alpha)
        boxes += [samples[i].char_boxes for i in chunk]
    alpha = np.concatenate(alphas)
    return float(np.mean(accs)), mean_theta(alpha, boxes, cfg.width)


@dataclass
class TrainResult:
    checkpoint_path: str
    metrics_path: str
    final_acc: float
    final_theta: float


def train(data_dir: str, out_dir: str, cfg: TrainConfig) -> TrainResult:
    """Run the full loop and write model.ckpt plus metrics.tsv."""
    cfg.validate()
    samples = read_dataset(data_dir)
    h, w = samples[0].image.shape
    if (h, w) != (cfg.height, cfg.width):
        raise ConfigError(f"dataset images are {(h, w)}, config wants "
                          f"{(cfg.height, cfg.width)}")
    longest = max(len(s.label) for s in samples)
    if longest > cfg.t_steps - 1:
        raise ConfigError(f"dataset has {longest}-symbol labels, "
                          f"budget allows {cfg.t_steps - 1}")

    gen = rng(cfg.seed)
    params = init_params(cfg, gen)
    opt = Adam(params, lr=cfg.lr)
    s_pl = valid = None
    if cfg.enable_js:
        s_pl, valid = prepare_pseudo_labels(samples, cfg)

    os.makedirs(out_dir, exist_ok=True)
    metrics_path = os.path.join(out_dir, "metrics.tsv")
    ckpt_path = os.path.join(out_dir, "model.ckpt")
    eval_idx = list(range(min(128, len(samples))))
    lines = [f"# siga training log\n",
             f"# data = {os.path.basename(os.path.normpath(data_dir))}, "
             f"samples = {len(samples)}\n",
             f"# seed = {cfg.seed}, lr = {cfg.lr}, batch_size = {cfg.batch_size}, "
             f"steps = {cfg.steps}, eval_interval = {cfg.eval_interval}\n",
             f"# enable_js = {cfg.enable_js}, enable_acfm = {cfg.enable_acfm}, "
             f"align_cor = {cfg.align_cor}, align_dif = {cfg.align_dif}\n",
             "\t".join(METRICS_COLUMNS) + "\n"]

    last_parts: dict = {}
    acc = theta = 0.0
    for step in range(1, cfg.steps + 1):
        idx = gen.integers(0, len(samples), size=cfg.batch_size)
        batch = {"images": np.stack([samples[i].image for i in idx])[:, None],
                 "labels": [samples[i].label for i in idx]}
        if cfg.enable_js:
            batch["s_pl"] = s_pl[idx]
            batch["valid"] = valid[idx]
        loss, parts, _ = total_loss(batch, params, cfg)
        if not np.isfinite(parts["loss_total"]):
            raise NumericError(f"loss diverged at step {step}; "
                               f"last finite breakdown: {last_parts}")
        last_parts = parts
        opt.zero_grad()
        backward(loss)
        clip_gradients(params, cfg.grad_clip)
        opt.step()
        tape().clear()
        if step % cfg.eval_interval == 0 or step == cfg.steps:
            acc, theta = _quick_metrics(samples, eval_idx, params, cfg)
            lines.append(f"{step}\t{parts['loss_total']:.6f}\t{parts['loss_rec']:.6f}\t"
                         f"{parts['loss_ins']:.6f}\t{parts['loss_seq']:.6f}\t"
                         f"{parts['loss_seg']:.6f}\t{acc:.6f}\t{theta:.6f}\n")

    with open(metrics_path, "w", encoding="utf-8") as f:
        f.writelines(lines)
    save_checkpoint(ckpt_path, params, cfg, VOCAB)
    return TrainResult(ckpt_path, metrics_path, acc, theta)


@dataclass
class EvalReport:
    count: int
    exact: int
    accuracy: float
    mean_theta: float
    per_length: dict
    counters: dict

    def lines(self) -> list:
        out = [f"samples = {self.count}",
               f"exact = {self.exact}",
               f"accuracy = {self.accuracy:.6f}",
               f"mean_theta = {self.mean_theta:.6f}"]
        for ln in sorted(self.per_length):
            n, k = self.per_length[ln]
            out.append(f"len_{ln}_accuracy = {k / n:.6f}")
        for k, v in self.counters.items():
            out.append(f"counter_{k} = {v}")
        return out


def evaluate(data_dir: str, ckpt_path: str) -> EvalReport:
    """Score a checkpoint on a dataset; pure inference.

    The pseudo-label, k-means, and alignment code paths must stay cold;
    their execution counters are snapshotted around the run and reported
    (and enforced) as deltas.
    """
    params, meta = load_checkpoint(ckpt_path)
    if meta["vocab"] != VOCAB:
        raise ConfigError(f"checkpoint vocabulary {meta['vocab']} differs from {VOCAB}")
    cfg = config_from_meta(meta)
    samples = read_dataset(data_dir)
    h, w = samples[0].image.shape
    if (h, w) != (cfg.height, cfg.width):
        raise ConfigError(f"dataset images are {(h, w)}, checkpoint wants "
                          f"{(cfg.height, cfg.width)}")

    before = COUNTERS.snapshot()
    exact = 0
    per_length: dict = {}
    theta_scores = []
    for lo in range(0, len(samples), EVAL_BATCH):
        chunk = samples[lo:lo + EVAL_BATCH]
        images = np.stack([s.image for s in chunk])[:, None]
        preds, alpha = infer_batch(images, params, cfg)
        beta = _beta_rows(alpha, cfg.width)
        for j, (s, p) in enumerate(zip(chunk, preds)):
            hit = p == s.label.lower()
            exact += hit
            n, k = per_length.get(len(s.label), (0, 0))
            per_length[len(s.label)] = (n + 1, k + hit)
            for t, box in enumerate(s.char_boxes[:beta.shape[1]]):
                theta_scores.append(theta_metric(beta[j, t], box, cfg.width))
    after = COUNTERS.snapshot()
    deltas = {k: after[k] - before[k]
              for k in ("kmeans_calls", "gpc_builds", "alignment_losses")}
    if any(deltas.values()):
        raise ContractError(f"evaluation touched training-only paths: {deltas}")
    return EvalReport(count=len(samples), exact=exact,
                      accuracy=exact / len(samples),
                      mean_theta=float(np.mean(theta_scores)) if theta_scores else 0.0,
                      per_length=per_length, counters=deltas)
