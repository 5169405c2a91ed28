"""Alternating two-optimizer training.

Per batch of requirements: first one supervised step per requirement on the
head parameters (``opt1``), then one unsupervised step per requirement on
the representation parameters (``opt2``, clipped) after replaying that
requirement's co-invocation events through the graph.
"""
from dataclasses import asdict, dataclass, field, fields, replace
import logging
import math
import time

import numpy as np

from . import dynrep
from .data import RAND_INIT_STD
from .dynrep import BatchTrace, DyRepParams
from .errors import InputError, TrainingError
from .evaluation import aggregate_reports, evaluate
from .graph import generate_events, init_from_history
from .numerics import ACTIVATIONS, Adam
from .recommend import RecParams, sample_negatives, supervised_grads
from .rng import substream

log = logging.getLogger(__name__)

__all__ = ["TrainConfig", "TrainReport", "generate_events", "train", "run_seeds", "build_model"]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 50
    clip: float = 100.0
    lr_rec: float = 1e-3
    lr_dyn: float = 1e-3
    neg_factor: int = 6
    nonevent_factor: int = 5
    time_scale: float = 30.0
    activation: str = "tanh"
    patience: int = 3
    val_fraction: float = 0.1
    seed: int = 0
    rand_init: bool = False
    static_z: bool = False
    no_transform: bool = False
    nonevent_form: str = "survival"
    d_s: int = 128  # only used when services have no init vectors
    reset_z: bool = False  # also restore Z at each epoch start

    def __post_init__(self):
        if self.batch_size < 1:
            raise InputError("batch_size must be >= 1")
        if self.neg_factor < 1 or self.nonevent_factor < 1:
            raise InputError("sampling factors must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise InputError("val_fraction must be in [0, 1)")
        if self.epochs < 0 or self.patience < 1:
            raise InputError("epochs must be >= 0 and patience >= 1")
        if self.activation not in ACTIVATIONS:
            raise InputError(f"activation must be one of {ACTIVATIONS}")
        if self.nonevent_form not in dynrep.NONEVENT_FORMS:
            raise InputError(f"nonevent_form must be one of {dynrep.NONEVENT_FORMS}")
        if not self.clip > 0 or not self.time_scale > 0:
            raise InputError("clip and time_scale must be positive")

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    seed: int
    epoch_L1: list = field(default_factory=list)
    epoch_L2: list = field(default_factory=list)
    batch_L1: list = field(default_factory=list)  # per epoch, per batch means
    batch_L2: list = field(default_factory=list)
    val_f1: list = field(default_factory=list)
    best_epoch: int = -1
    seconds: float = 0.0

    @property
    def epochs_completed(self):
        return len(self.epoch_L1)

    def to_dict(self):
        return asdict(self)


def build_model(corpus, split, config):
    """Initial graph state and parameters for one seed."""
    rng = substream(config.seed, "init")
    ids = corpus.service_ids
    Z0 = None if config.rand_init else corpus.init_matrix()
    if Z0 is None:
        if not config.rand_init:
            raise InputError("services lack init vectors; enable rand_init")
        d_s = corpus.d_s if corpus.init_matrix() is not None else config.d_s
        Z0 = rng.normal(0.0, RAND_INIT_STD, size=(len(ids), d_s))
    state = init_from_history(split.init_history, ids, Z0)
    rec = RecParams.init(corpus.d_r, Z0.shape[1], rng, transform=not config.no_transform)
    dy = DyRepParams.init(Z0.shape[1], rng, config.activation, config.time_scale)
    return state, rec, dy


def _check_finite(loss, grads, batch, what):
    if not math.isfinite(loss):
        raise TrainingError(f"batch {batch}: non-finite {what} loss")
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"batch {batch}: non-finite gradient for {k}")


def _unsupervised_step(state, dy, smp, config, rng_non):
    events = generate_events(smp.services, smp.timestamp)
    if not events:
        return None
    trace = BatchTrace()
    for ev in events:
        dynrep.process_event(state, dy, ev, trace)
    nonevents = dynrep.sample_nonevents(state, events, rng_non, config.nonevent_factor)
    dynrep.record_nonevents(state, trace, nonevents)
    return dynrep.unsupervised_grads(dy, trace, config.nonevent_form)


def train(samples, config, state, rec, dy, on_step=None):
    """Fit ``rec`` and ``dy`` in place on time-ordered ``samples``.

    The last ``val_fraction`` of ``samples`` is held out for early stopping on
    F1@5. Every epoch restarts the graph topology from its state on entry
    while Z and the parameters carry over. On return ``state``, ``rec`` and
    ``dy`` hold the best epoch's values, and ``state`` has also absorbed the
    validation requirements' events.
    """
    ts = [s.timestamp for s in samples]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise InputError("training samples must be sorted by timestamp")
    t0 = time.perf_counter()
    report = TrainReport(seed=config.seed)
    n_val = int(len(samples) * config.val_fraction)
    fit, val = samples[:len(samples) - n_val], samples[len(samples) - n_val:]
    rng_neg = substream(config.seed, "negatives")
    rng_non = substream(config.seed, "nonevents")
    opt1 = Adam(rec.tensors(), lr=config.lr_rec)
    opt2 = Adam(dy.tensors(), lr=config.lr_dyn, clip=config.clip)
    topology = state.topology_checkpoint()
    universe = range(state.n_services)
    best = None
    best_f1 = -np.inf
    stale = 0

    for epoch in range(config.epochs):
        state.restore_topology(topology, with_z=config.reset_z)
        b_l1, b_l2, all_l1, all_l2 = [], [], [], []
        for b, start in enumerate(range(0, len(fit), config.batch_size)):
            batch = fit[start:start + config.batch_size]
            Z = state.Z
            l1 = []
            for smp in batch:
                neg = sample_negatives(smp.services, universe, rng_neg, config.neg_factor)
                loss, grads = supervised_grads(rec, smp.v_r, Z, smp.services, neg)
                _check_finite(loss, grads, b, "supervised")
                opt1.step(rec.tensors(), grads)
                if on_step:
                    on_step("opt1", epoch, b, opt1)
                l1.append(loss)
            l2 = []
            if not config.static_z:
                for smp in batch:
                    out = _unsupervised_step(state, dy, smp, config, rng_non)
                    if out is None:
                        continue
                    loss, grads = out
                    _check_finite(loss.total, grads, b, "unsupervised")
                    opt2.step(dy.tensors(), grads)
                    if on_step:
                        on_step("opt2", epoch, b, opt2)
                    l2.append(loss.total)
            b_l1.append(float(np.mean(l1)))
            b_l2.append(float(np.mean(l2)) if l2 else 0.0)
            all_l1 += l1
            all_l2 += l2
        report.batch_L1.append(b_l1)
        report.batch_L2.append(b_l2)
        report.epoch_L1.append(float(np.mean(all_l1)) if all_l1 else 0.0)
        report.epoch_L2.append(float(np.mean(all_l2)) if all_l2 else 0.0)

        after = state.copy()
        if val:
            f1 = evaluate(val, after, rec, dy, (5,), "prequential", static_z=config.static_z).f1(5)
        else:
            f1 = float(epoch)  # no hold-out: the latest epoch wins
        report.val_f1.append(float(f1))
        log.info("epoch %d: L1=%.4f L2=%.4f valF1@5=%.4f", epoch, report.epoch_L1[-1],
                 report.epoch_L2[-1], f1)
        if f1 > best_f1:
            best_f1, stale = f1, 0
            best = (rec.copy(), dy.copy(), after)
            report.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break

    if best is not None:
        rec.load_tensors(best[0].tensors())
        dy.load_tensors(best[1].tensors())
        state.assign(best[2])
    report.seconds = time.perf_counter() - t0
    return report


@dataclass
class SeedSummary:
    mean: object
    std: object
    reports: list
    train_reports: list


def run_seeds(corpus, split, config, k=5, n_list=(5,), mode="prequential"):
    """Train and test ``k`` times with seeds ``config.seed .. config.seed + k - 1``."""
    if k < 1:
        raise InputError("k must be >= 1")
    reports, trains = [], []
    for s in range(config.seed, config.seed + k):
        cfg = replace(config, seed=s)
        state, rec, dy = build_model(corpus, split, cfg)
        trains.append(train(split.train, cfg, state, rec, dy))
        reports.append(evaluate(split.test, state, rec, dy, n_list, mode, static_z=cfg.static_z))
    mean, std = aggregate_reports(reports)
    return SeedSummary(mean, std, reports, trains)
