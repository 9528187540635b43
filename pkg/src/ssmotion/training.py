"""Supervised teacher training and the mean-teacher SSL loop.

The SSL loop alternates, once per epoch: teacher inference on weakly augmented
unlabeled samples, pseudo-label refinement, strong augmentation (temporal
sampling and BEVMix), a student step on the summed supervised + unsupervised
loss, and an EMA teacher update after every student step. The teacher is the
model used for evaluation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import network
from .augment import MixPair, bevmix, flip_map, random_flip, temporal_sample
from .grid import BevSequence, MotionField
from .msrm import RefineConfig, labels_to_field, refine
from .network import ParamVector, PredictorConfig

log = logging.getLogger(__name__)


def save_params(path, params: ParamVector, net_cfg: PredictorConfig) -> None:
    from .container import write_container
    write_container(
        path,
        arrays={"values": params.values.astype(np.float32)},
        units={"values": "none"},
        meta={
            "kind": "params",
            "layout": [[name, list(shape)] for name, shape in params.layout],
            "net": {"in_channels": net_cfg.in_channels,
                    "hidden": list(net_cfg.hidden),
                    "kernels": list(net_cfg.kernels),
                    "out_channels": net_cfg.out_channels},
        })


def load_params(path) -> tuple[ParamVector, PredictorConfig]:
    from .container import read_container
    arrays, header = read_container(path)
    meta = header["meta"]
    layout = tuple((name, tuple(shape)) for name, shape in meta["layout"])
    net = meta["net"]
    cfg = PredictorConfig(in_channels=int(net["in_channels"]),
                          hidden=tuple(net["hidden"]),
                          kernels=tuple(net["kernels"]),
                          out_channels=int(net["out_channels"]))
    return ParamVector(arrays["values"].astype(np.float64), layout), cfg


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def for_params(cls, params: ParamVector) -> "AdamState":
        return cls(np.zeros(len(params)), np.zeros(len(params)))


def adam_step(params: ParamVector, grad: ParamVector, state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> ParamVector:
    """One adaptive-moment update; returns new parameters, mutates the state."""
    state.step += 1
    g = grad.values
    state.m = beta1 * state.m + (1 - beta1) * g
    state.v = beta2 * state.v + (1 - beta2) * g * g
    mhat = state.m / (1 - beta1 ** state.step)
    vhat = state.v / (1 - beta2 ** state.step)
    return ParamVector(params.values - lr * mhat / (np.sqrt(vhat) + eps), params.layout)


def ema_update(teacher: ParamVector, student: ParamVector, alpha: float) -> ParamVector:
    """Elementwise convex combination alpha*teacher + (1-alpha)*student."""
    if teacher.layout != student.layout:
        raise ValueError("teacher and student parameter layouts differ")
    return ParamVector(alpha * teacher.values + (1.0 - alpha) * student.values,
                       teacher.layout)


@dataclass
class SslConfig:
    alpha: float = 0.999
    labeled_fraction: float = 0.05
    batch_size: int = 1
    lr: float = 1e-3
    teacher_epochs: int = 60
    ssl_epochs: int = 15
    hidden: tuple[int, ...] = (16, 16)
    refine: RefineConfig = field(default_factory=RefineConfig)
    weak_flip: bool = True
    use_temporal_sampling: bool = True
    ts_probability: float = 0.5
    use_bevmix: bool = True
    mix_probability: float = 0.5
    loss_delta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


def predictor_config(seq: BevSequence, cfg: SslConfig) -> PredictorConfig:
    t, c = len(seq), seq.spec.layers
    return PredictorConfig(in_channels=t * c, hidden=cfg.hidden)


def supervised_batch(seq: BevSequence, gt: MotionField):
    """(features, index set, targets) of one labeled sample."""
    idx = np.argwhere(gt.validity)
    target = gt.displacement[idx[:, 0], idx[:, 1]]
    return network.sequence_features(seq), idx, target


def loss_and_grad(params: ParamVector, net_cfg: PredictorConfig, batches,
                  delta: float = 1.0):
    """Total smooth-L1 loss and gradient over (features, idx, target) batches."""
    total = 0.0
    grad = params.zeros_like()
    for feats, idx, target in batches:
        out, cache = network.forward(params, feats, net_cfg)
        loss, dgrid, empty = network.smooth_l1(out, target, idx, delta)
        total += loss
        if not empty:
            grad.values += network.backward(params, cache, dgrid, net_cfg).values
    return total, grad


def _weak_flip(seq: BevSequence, motion: MotionField, rng, enabled: bool):
    if not enabled:
        return seq, motion, "none"
    axis = str(rng.choice(["none", "x", "y"]))
    out_seq, out_mot = random_flip(seq, motion, axis)
    return out_seq, out_mot, axis


def train_teacher(labeled, cfg: SslConfig, params: ParamVector | None = None,
                  epochs: int | None = None, on_epoch=None):
    """Supervised training over labeled scenes; returns (params, history).

    History rows carry the per-epoch mean loss. Diverging (non-finite) loss
    aborts with a diagnostic.
    """
    if not labeled:
        raise ValueError("labeled set is empty")
    net_cfg = predictor_config(labeled[0].seq, cfg)
    params = params or network.init_params(net_cfg, cfg.seed)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(cfg.seed)
    history = []
    for epoch in range(epochs if epochs is not None else cfg.teacher_epochs):
        losses = []
        for i in rng.permutation(len(labeled)):
            scene = labeled[i]
            seq, gt, _ = _weak_flip(scene.seq, scene.gt, rng, cfg.weak_flip)
            loss, grad = loss_and_grad(params, net_cfg, [supervised_batch(seq, gt)],
                                       cfg.loss_delta)
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}: loss={loss}")
            params = adam_step(params, grad, state, cfg.lr)
            losses.append(loss)
        history.append({"epoch": epoch, "sup_loss": float(np.mean(losses))})
        if on_epoch is not None:
            on_epoch(epoch, params, history[-1])
    return params, history


def _epoch_pseudo_labels(teacher: ParamVector, net_cfg: PredictorConfig,
                         unlabeled, cfg: SslConfig, rng):
    """Weakly augment, run teacher inference, and refine each unlabeled scene."""
    out = []
    kept_cells = 0
    scored_cells = 0
    for scene in unlabeled:
        axis = str(rng.choice(["none", "x", "y"])) if cfg.weak_flip else "none"
        zero = MotionField(np.zeros((*scene.gt.validity.shape, 2)),
                           scene.seq.current.pillar_mask)
        seq, _ = random_flip(scene.seq, zero, axis)
        future = flip_map(scene.future, axis)
        pseudo = network.predict(teacher, seq, net_cfg)
        try:
            cells, refined = refine(pseudo, seq.current, future, cfg.refine)
        except ValueError:
            continue
        if len(refined) == 0:
            continue
        kept_cells += len(refined)
        scored_cells += len(cells)
        shape = scene.gt.validity.shape
        out.append((seq, labels_to_field(cells, refined, shape)))
    kept_fraction = kept_cells / scored_cells if scored_cells else 0.0
    return out, kept_fraction


def _strong_augment(seq: BevSequence, labels: MotionField, pool, cfg: SslConfig, rng):
    if cfg.use_bevmix and len(pool) > 1 and rng.random() < cfg.mix_probability:
        j = int(rng.integers(len(pool)))
        bg_seq, bg_labels = pool[j]
        if bg_seq is not seq:
            seq, labels = bevmix(MixPair((seq, labels), (bg_seq, bg_labels)),
                                 seed=int(rng.integers(2 ** 31)))
    if cfg.use_temporal_sampling and len(seq) % 2 == 1 and rng.random() < cfg.ts_probability:
        seq, labels = temporal_sample(seq, labels)
    return seq, labels


def train_ssl(labeled, unlabeled, cfg: SslConfig,
              teacher: ParamVector | None = None, on_epoch=None):
    """Mean-teacher semi-supervised training; returns (teacher, history).

    The student starts from the teacher's weights and is updated by Adam on
    the summed loss; the teacher trails it by EMA after every step. Pseudo
    labels are re-generated from the current teacher once per epoch.
    """
    if not labeled:
        raise ValueError("labeled set is empty")
    net_cfg = predictor_config(labeled[0].seq, cfg)
    if teacher is None:
        teacher, _ = train_teacher(labeled, cfg)
    student = teacher.copy()
    state = AdamState.for_params(student)
    rng = np.random.default_rng(cfg.seed + 1)
    history = []
    for epoch in range(cfg.ssl_epochs):
        pool, kept_fraction = _epoch_pseudo_labels(teacher, net_cfg, unlabeled, cfg, rng)
        if not pool and unlabeled:
            log.warning("epoch %d: no refined pseudo labels survived; "
                        "training on the supervised loss only", epoch)
        sup_losses, unsup_losses = [], []
        n_steps = len(pool) if pool else len(labeled)
        labeled_order = rng.permutation(len(labeled))
        pool_order = rng.permutation(len(pool)) if pool else []
        for step in range(n_steps):
            batches = []
            scene = labeled[labeled_order[step % len(labeled)]]
            seq_l, gt_l, _ = _weak_flip(scene.seq, scene.gt, rng, cfg.weak_flip)
            batches.append(supervised_batch(seq_l, gt_l))
            if pool:
                seq_u, lab_u = pool[pool_order[step]]
                seq_u, lab_u = _strong_augment(seq_u, lab_u, pool, cfg, rng)
                batches.append(supervised_batch(seq_u, lab_u))
            sup_loss, grad = loss_and_grad(student, net_cfg, batches[:1], cfg.loss_delta)
            if pool:
                unsup_loss, grad_u = loss_and_grad(student, net_cfg, batches[1:],
                                                   cfg.loss_delta)
                grad.values += grad_u.values
            else:
                unsup_loss = 0.0
            total = sup_loss + unsup_loss
            if not np.isfinite(total):
                raise RuntimeError(f"SSL training diverged at epoch {epoch}: loss={total}")
            student = adam_step(student, grad, state, cfg.lr)
            teacher = ema_update(teacher, student, cfg.alpha)
            sup_losses.append(sup_loss)
            unsup_losses.append(unsup_loss)
        history.append({
            "epoch": epoch,
            "sup_loss": float(np.mean(sup_losses)),
            "unsup_loss": float(np.mean(unsup_losses)),
            "kept_fraction": float(kept_fraction),
        })
        if on_epoch is not None:
            on_epoch(epoch, teacher, history[-1])
    return teacher, history
