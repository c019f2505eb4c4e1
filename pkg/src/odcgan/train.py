"""Alternating discriminator/generator optimisation with Adam."""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path

import torch

from . import checkpoint as ckpt
from .config import RunConfig
from .data import Batch, SplitTensors, iterate_batches, num_batches
from .losses import discriminator_loss, generator_loss
from .model import build_discriminator, build_generator

log = logging.getLogger(__name__)

LOG_COLUMNS = ("step", "epoch", "g_total", "g_adv", "g_l1", "d_total", "d_real", "d_fake", "ms")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, which: str, ids, values: dict):
        self.ids = list(ids)
        super().__init__(f"non-finite {which} loss {values} on batch {self.ids}")


@dataclass
class StepStats:
    step: int
    epoch: int
    g_total: float
    g_adv: float
    g_l1: float
    d_total: float
    d_real: float
    d_fake: float
    ms: float

    def row(self, timing: bool = True) -> list[str]:
        vals = [str(self.step), str(self.epoch)]
        vals += [repr(getattr(self, k)) for k in LOG_COLUMNS[2:-1]]
        vals.append(f"{self.ms:.3f}" if timing else "")
        return vals

    def losses(self) -> tuple[float, ...]:
        return tuple(getattr(self, k) for k in LOG_COLUMNS[2:-1])


def _finite(values: dict) -> bool:
    return all(math.isfinite(v) for v in values.values())


class Trainer:
    """Holds both networks, their Adam optimisers and the step/epoch counters."""

    def __init__(self, cfg: RunConfig):
        cfg.validate()
        self.cfg = cfg
        t = cfg.train
        torch.use_deterministic_algorithms(True)
        self.gen, _ = build_generator(cfg.generator, seed=t.seed)
        self.disc, _ = build_discriminator(cfg.discriminator, seed=t.seed + 1)
        betas = (t.adam_beta1, t.adam_beta2)
        self.opt_g = torch.optim.Adam(self.gen.parameters(), lr=t.learning_rate, betas=betas)
        self.opt_d = torch.optim.Adam(self.disc.parameters(), lr=t.learning_rate, betas=betas)
        self.epoch = 0
        self.step = 0
        # dropout draws from the global generator; seed it once per run
        torch.manual_seed(t.seed)

    # each half-step only ever touches its own network
    def discriminator_update(self, x, y, fake):
        self.disc.train()
        self.opt_d.zero_grad(set_to_none=True)
        loss = discriminator_loss(self.disc(x, y), self.disc(x, fake.detach()), self.cfg.loss)
        return loss, self._apply(loss.total, self.opt_d)

    def generator_update(self, x, y, fake):
        self.disc.train()
        self.opt_g.zero_grad(set_to_none=True)
        frozen = [(p, p.requires_grad) for p in self.disc.parameters()]
        buffers = {k: v.clone() for k, v in self.disc.named_buffers()}
        for p, _ in frozen:
            p.requires_grad_(False)
        try:
            loss = generator_loss(self.disc(x, fake), fake, y, self.cfg.loss)
            values = self._apply(loss.total, self.opt_g)
        finally:
            for p, flag in frozen:
                p.requires_grad_(flag)
            with torch.no_grad():
                for k, v in self.disc.named_buffers():
                    v.copy_(buffers[k])
        return loss, values

    def _apply(self, total, opt):
        # the step is skipped on a non-finite loss so the caller can report it
        if not math.isfinite(total.item()):
            return False
        total.backward()
        opt.step()
        return True

    def training_step(self, batch: Batch) -> StepStats:
        t0 = time.perf_counter()
        ids, x, y = batch
        self.gen.train()
        fake = self.gen(x)
        d_loss, ok = self.discriminator_update(x, y, fake)
        d_vals = d_loss.as_floats()
        if not ok or not _finite(d_vals):
            raise NonFiniteLossError("discriminator", ids, d_vals)
        g_loss, ok = self.generator_update(x, y, fake)
        g_vals = g_loss.as_floats()
        if not ok or not _finite(g_vals):
            raise NonFiniteLossError("generator", ids, g_vals)
        self.step += 1
        return StepStats(
            step=self.step, epoch=self.epoch + 1,
            g_total=g_vals["total"], g_adv=g_vals["adv"], g_l1=g_vals["l1"],
            d_total=d_vals["total"], d_real=d_vals["real"], d_fake=d_vals["fake"],
            ms=(time.perf_counter() - t0) * 1000.0,
        )

    def run_epoch(self, split: SplitTensors) -> list[StepStats]:
        t = self.cfg.train
        stats = []
        for batch in iterate_batches(split, t.batch_size, shuffle=True, seed=t.seed, epoch=self.epoch):
            try:
                stats.append(self.training_step(batch))
            except NonFiniteLossError as exc:
                log.error("aborting at epoch %d step %d: %s", self.epoch + 1, self.step + 1, exc)
                raise
        self.epoch += 1
        return stats

    def state(self):
        tensors = ckpt.module_tensors(self.gen, "generator")
        tensors.update(ckpt.module_tensors(self.disc, "discriminator"))
        tensors.update(ckpt.optimizer_tensors(self.opt_g, self.gen, "adam_generator"))
        tensors.update(ckpt.optimizer_tensors(self.opt_d, self.disc, "adam_discriminator"))
        tensors["rng/torch"] = torch.get_rng_state()
        meta = {
            "format": 1,
            "epoch": self.epoch,
            "step": self.step,
            "fingerprint": self.cfg.fingerprint(),
            "config": self.cfg.to_dict(),
        }
        return tensors, meta

    def save(self, path) -> None:
        tensors, meta = self.state()
        ckpt.save_archive(path, tensors, meta)

    @classmethod
    def load(cls, path, cfg: RunConfig | None = None) -> "Trainer":
        """Rebuild a trainer from a checkpoint; ``cfg`` must match its fingerprint."""
        tensors, meta = ckpt.load_archive(path)
        stored = RunConfig.from_dict(meta["config"])
        if cfg is None:
            cfg = stored
        elif cfg.fingerprint() != meta["fingerprint"]:
            raise ckpt.CheckpointError(
                f"{path} was written with a different configuration "
                f"(fingerprint {meta['fingerprint']}, current {cfg.fingerprint()})"
            )
        tr = cls(cfg)
        ckpt.restore_module(tr.gen, "generator", tensors)
        ckpt.restore_module(tr.disc, "discriminator", tensors)
        ckpt.restore_optimizer(tr.opt_g, tr.gen, "adam_generator", tensors)
        ckpt.restore_optimizer(tr.opt_d, tr.disc, "adam_discriminator", tensors)
        torch.set_rng_state(tensors["rng/torch"])
        tr.epoch, tr.step = int(meta["epoch"]), int(meta["step"])
        return tr


def checkpoint_path(run_dir, epoch: int) -> Path:
    return Path(run_dir) / "checkpoints" / f"epoch_{epoch:04d}.ckpt"


def list_checkpoints(run_dir) -> list[Path]:
    return sorted((Path(run_dir) / "checkpoints").glob("epoch_*.ckpt"))


def latest_checkpoint(run_dir) -> Path:
    found = list_checkpoints(run_dir)
    if not found:
        raise FileNotFoundError(f"no checkpoints under {run_dir}")
    return found[-1]


def _probe_writable(directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    probe = directory / ".write-probe"
    try:
        with open(probe, "wb") as fh:
            fh.write(b"\0" * 4096)
            fh.flush()
            os.fsync(fh.fileno())
    finally:
        if probe.exists():
            probe.unlink()


def train(split: SplitTensors, cfg: RunConfig, run_dir, resume=None, stop_after: int | None = None):
    """Train for ``cfg.train.epochs`` epochs, writing checkpoints and ``train_log.csv``.

    ``resume`` continues from a checkpoint; ``stop_after`` ends the run early
    after that epoch number (used to simulate interruptions). Returns the
    trainer and the list of step statistics produced by this call.
    """
    run_dir = Path(run_dir)
    t = cfg.train
    if len(split) == 0:
        raise ValueError("training split is empty")
    _probe_writable(run_dir / "checkpoints")

    trainer = Trainer.load(resume, cfg) if resume else Trainer(cfg)
    log_path = run_dir / "train_log.csv"
    if resume is None or not log_path.exists():
        with open(log_path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(LOG_COLUMNS)
    else:
        _truncate_log(log_path, trainer.step)

    last = t.epochs if stop_after is None else min(stop_after, t.epochs)
    steps_per_epoch = num_batches(len(split), t.batch_size)
    log.info("training %d samples, %d steps/epoch, epochs %d..%d",
             len(split), steps_per_epoch, trainer.epoch + 1, last)
    history: list[StepStats] = []
    while trainer.epoch < last:
        stats = trainer.run_epoch(split)
        history.extend(stats)
        with open(log_path, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for s in stats:
                w.writerow(s.row(t.log_timing))
        e = trainer.epoch
        log.info("epoch %d: g_total %.4f d_total %.4f", e, stats[-1].g_total, stats[-1].d_total)
        if e % t.checkpoint_every == 0 or e == t.epochs:
            trainer.save(checkpoint_path(run_dir, e))
    return trainer, history


def _truncate_log(path: Path, step: int) -> None:
    """Drop log rows written after ``step`` so a resumed run appends cleanly."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    keep = [rows[0]] + [r for r in rows[1:] if int(r[0]) <= step]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh, lineterminator="\n").writerows(keep)


def read_log(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
