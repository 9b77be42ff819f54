"""Minibatch Adam training for TAE, MVAE and MIWAE, plus the (C, lambda) sweep."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .compute.adam import AdamState, adam_step
from .compute.autodiff import NonFiniteError, forward_backward
from .compute.rng import seeded_rng, split
from .models import Arch, init_model, save_checkpoint
from .objectives import (NonFiniteTermError, PenaltyConfig, miwae_elbo_terms, mvae_elbo_terms,
                         tae_objective, tae_objective_beta)

log = logging.getLogger(__name__)

LOG_COLUMNS = ["iter", "gamma", "objective", "E", "P", "K", "Hz", "Hx", "R", "Q", "penalty"]


@dataclass
class TrainConfig:
    model: str = "tae"
    iterations: int = 500_000
    batch_size: int = 20
    learning_rate: float = 2e-4
    lam: float = 2.0
    C: float = 10.0
    gamma0: float = 0.01
    gammaF: float = 1.0
    warmup_start: int = 50_000
    warmup_end: int = 100_000
    z_dim: int = 20
    zp_dim: int = 5
    seed: int = 0
    miwae_k: int = 20
    noise_mode: str = "fixed"
    sigma: float = 0.1
    log_every: int = 100
    checkpoint_every: int = 0
    detach_condition: bool = False

    def __post_init__(self):
        if self.model not in ("tae", "mvae", "miwae"):
            raise ValueError(f"unknown model kind {self.model!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.warmup_start < self.warmup_end:
            raise ValueError("warmup_start must precede warmup_end")
        if self.noise_mode not in ("fixed", "inferred"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if self.noise_mode == "inferred" and self.model != "tae":
            raise ValueError("inferred noise is only available for the TAE")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.miwae_k < 1:
            raise ValueError("miwae_k must be >= 1")


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)
    wall_clock: list = field(default_factory=list)
    # one entry per iteration, not per logged row
    objective: list = field(default_factory=list)
    condition: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for row in self.rows:
                w.writerow([_fmt(row.get(c)) for c in LOG_COLUMNS])

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def running_condition(self, window: int = 1000) -> float:
        tail = np.asarray(self.condition[-window:], dtype=float)
        return float(tail.mean()) if tail.size else float("nan")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, term: str, model, checkpoint: Optional[Path] = None):
        where = f"; last good parameters saved to {checkpoint}" if checkpoint else ""
        super().__init__(f"training diverged at iteration {iteration}: non-finite {term}{where}")
        self.iteration = iteration
        self.term = term
        self.model = model
        self.checkpoint = checkpoint


def warmup_gamma(k: int, cfg: TrainConfig) -> float:
    """gamma0 up to warmup_start, linear to gammaF at warmup_end, gammaF after."""
    if k <= cfg.warmup_start:
        return cfg.gamma0
    if k >= cfg.warmup_end:
        return cfg.gammaF
    # exact rational arithmetic, so every logged value is the correctly rounded schedule
    g0, gF = Fraction(cfg.gamma0), Fraction(cfg.gammaF)
    return float(g0 + (gF - g0) * Fraction(k - cfg.warmup_start, cfg.warmup_end - cfg.warmup_start))


def batch_indices(n: int, batch_size: int, rng: np.random.Generator):
    """Endless stream of minibatches; sampling without replacement within each
    shuffled epoch, a batch may straddle two epochs."""
    pending = np.empty(0, dtype=np.int64)
    while True:
        while pending.size < batch_size:
            pending = np.concatenate([pending, rng.permutation(n)])
        yield pending[:batch_size]
        pending = pending[batch_size:]


def default_arch(cfg: TrainConfig, d: int, **overrides) -> Arch:
    return Arch(d=d, z_dim=cfg.z_dim, zp_dim=cfg.zp_dim,
                noise_head=cfg.noise_mode == "inferred", **overrides)


def objective_fn(cfg: TrainConfig, model, gamma: float, pen: PenaltyConfig):
    """f(params, y, alpha, rng) -> (batch objective, per-term dict of batch means)."""
    if cfg.model == "tae":
        def f(P, y, a, rng):
            if cfg.noise_mode == "inferred":
                total, terms = tae_objective_beta(model, y, a, gamma, pen, rng, P, cfg.detach_condition)
            else:
                total, terms = tae_objective(model, y, a, cfg.sigma, gamma, pen, rng, P, cfg.detach_condition)
            m = terms.means()
            return total, {"E": m["obs_lik"], "P": m["prior_rec"], "K": m["prior_kl"], "Hz": m["h_z"],
                           "Hx": m["h_x"], "R": m["r_logq"], "Q": m["q_logq"], "penalty": m["penalty"]}
    elif cfg.model == "mvae":
        def f(P, y, a, rng):
            total, terms = mvae_elbo_terms(model, y, a, cfg.sigma, rng, P)
            return total, {"E": float(terms["E"].mean()), "K": float(terms["K"].mean())}
    else:
        def f(P, y, a, rng):
            total, terms = miwae_elbo_terms(model, y, a, cfg.sigma, cfg.miwae_k, rng, P)
            return total, {"E": float(terms["E"].mean())}
    return f


def _as_arrays(data):
    if hasattr(data, "y") and hasattr(data, "alpha"):
        return np.asarray(data.y, dtype=np.float64), np.asarray(data.alpha, dtype=np.float64)
    samples = list(data)
    if not samples:
        raise ValueError("training data is empty")
    return (np.stack([s.y for s in samples]).astype(np.float64),
            np.stack([s.alpha for s in samples]).astype(np.float64))


def train(cfg: TrainConfig, data, arch: Optional[Arch] = None, model=None,
          out_dir=None):
    """Run ``cfg.iterations`` Adam steps maximising the objective of ``cfg.model``.

    ``data`` is a CorruptedDataset or a list of CorruptedSample. Returns the
    trained model and its TrainLog. Raises TrainingDiverged when a term turns
    non-finite; the model is left at its last finite parameters.
    """
    y, alpha = _as_arrays(data)
    if y.shape[0] == 0:
        raise ValueError("training data is empty")
    if model is None:
        arch = arch or default_arch(cfg, y.shape[1])
        if arch.d != y.shape[1]:
            raise ValueError(f"architecture expects d={arch.d}, data has d={y.shape[1]}")
        model = init_model(arch, cfg.seed, cfg.model)
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    trace = TrainLog()
    if cfg.iterations == 0:
        return model, trace

    batch_rng, noise_rng = split(seeded_rng(cfg.seed + 1), 2)
    batches = batch_indices(y.shape[0], cfg.batch_size, batch_rng)
    state = AdamState.zeros_like(model.params, lr=cfg.learning_rate)
    pen = PenaltyConfig(cfg.lam, cfg.C)
    t0 = time.perf_counter()
    for k in range(cfg.iterations):
        idx = next(batches)
        gamma = warmup_gamma(k, cfg)
        f = objective_fn(cfg, model, gamma, pen)
        try:
            val, grads, terms = forward_backward(
                lambda P: f(P, y[idx], alpha[idx], noise_rng), model.params, has_aux=True)
        except NonFiniteTermError as err:
            raise _diverged(k, err.term, model, out_dir) from err
        except NonFiniteError as err:
            raise _diverged(k, err.op, model, out_dir) from err
        if not np.isfinite(val):
            raise _diverged(k, "objective", model, out_dir)
        for name, g in grads.items():
            # a finite sum rules out inf/nan entries without a full mask
            if not np.isfinite(g.sum()) and not np.all(np.isfinite(g)):
                raise _diverged(k, f"gradient of {name}", model, out_dir)
        adam_step(state, model.params, grads, maximize=True)

        trace.objective.append(val)
        if "R" in terms:
            trace.condition.append(terms["R"] - terms["Q"])
        if k % cfg.log_every == 0 or k == cfg.iterations - 1:
            row = {"iter": k, "gamma": gamma, "objective": val}
            row.update(terms)
            trace.rows.append(row)
            trace.wall_clock.append(time.perf_counter() - t0)
            log.debug("iter %d objective %.4f", k, val)
        if out_dir is not None and cfg.checkpoint_every and (k + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(model, out_dir / f"checkpoint_{k + 1:08d}.npz")
    return model, trace


def _diverged(k, term, model, out_dir):
    path = None
    if out_dir is not None:
        path = out_dir / "last_good.npz"
        save_checkpoint(model, path)
    log.error("divergence at iteration %d in %s", k, term)
    return TrainingDiverged(k, term, model, path)


# (C, lambda) sweep

SWEEP_COLUMNS = ["C", "lambda", "status", "refit_elbo", "final_objective", "condition", "error"]


def sweep(cfg: TrainConfig, Cs, lams, data, eval_pairs, refit_cfg, arch: Optional[Arch] = None,
          csv_path=None):
    """Train one TAE per (C, lambda) cell and score it with the refit ELBO on
    ``eval_pairs = (x_clean, y, alpha)``. Failed cells are recorded and skipped."""
    from .evaluation import refit_elbo

    Cs, lams = list(Cs), list(lams)
    if not Cs or not lams:
        raise ValueError("sweep grid is empty")
    rows = []
    for C in Cs:
        for lam in lams:
            cell = replace(cfg, C=float(C), lam=float(lam), model="tae")
            row = {"C": C, "lambda": lam}
            try:
                model, trace = train(cell, data, arch=arch)
                score = refit_elbo(model, *eval_pairs, refit_cfg, seeded_rng(cfg.seed + 7))
                row.update(status="ok", refit_elbo=score, final_objective=trace.objective[-1] if trace.objective else None,
                           condition=trace.running_condition())
            except (TrainingDiverged, FloatingPointError, ValueError) as err:
                log.warning("sweep cell C=%s lambda=%s failed: %s", C, lam, err)
                row.update(status="failed", error=str(err))
            rows.append(row)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for r in rows:
                w.writerow([r.get(c, "") if c in ("status", "error") else _fmt(r.get(c)) for c in SWEEP_COLUMNS])
    return rows


def config_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
