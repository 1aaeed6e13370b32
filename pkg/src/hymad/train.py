"""Mini-batch training and evaluation engine with checkpointing and ablations."""

from __future__ import annotations

import hashlib
import struct
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from hymad.errors import CompatibilityError, ConfigError, NumericError
from hymad import model as M
from hymad.datagen import Dataset
from hymad.functional import bce_with_logits, sigmoid
from hymad.metrics import MetricsReport, compute_report, write_curves_csv
from hymad.optim import AdamW
from hymad.tensor import Tensor, no_grad

CHECKPOINT_MAGIC = b"HYMD"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 1e-2
    batch_size: int = 128
    max_epochs: int = 200
    seed: int = 0
    weight_decay: float = 0.01
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    eval_every: int = 1
    fusion_mode: str | None = None       # overrides the model config when set
    early_stop_exact: float | None = None  # stop once val exact-match reaches this

    def validate(self):
        if self.lr < 0:
            raise ConfigError(f"train.lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ConfigError(f"train.max_epochs must be >= 1, got {self.max_epochs}")
        return self


@dataclass
class RunRecord:
    losses: list = field(default_factory=list)           # per-epoch mean loss
    val_reports: list = field(default_factory=list)      # (epoch, MetricsReport)
    digests: list = field(default_factory=list)          # per-epoch param digest
    wall_time: float = 0.0
    best_epoch: int = -1
    lr_used: float = 0.0


def params_digest(params: dict[str, Tensor]) -> str:
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(params[name].data.astype("<f8").tobytes())
    return h.hexdigest()


def save_checkpoint(path, cfg: M.ModelConfig, params: dict[str, Tensor]):
    digest = bytes.fromhex(cfg.digest())
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(digest)
        fh.write(struct.pack("<I", len(params)))
        for name in sorted(params):
            data = params[name].data
            enc = name.encode()
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(data.astype("<f8").tobytes())


def load_checkpoint(path, cfg: M.ModelConfig) -> dict[str, Tensor]:
    blob = Path(path).read_bytes()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CompatibilityError(f"{path} is not a checkpoint file")
    version, = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CompatibilityError(f"unsupported checkpoint version {version}")
    digest = blob[8:40].hex()
    if digest != cfg.digest():
        raise CompatibilityError(
            "checkpoint config digest does not match the supplied model config")
    count, = struct.unpack_from("<I", blob, 40)
    off = 44
    params = {}
    for _ in range(count):
        nlen, = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + nlen].decode()
        off += nlen
        ndim, = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(blob, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        params[name] = Tensor(data.copy(), requires_grad=True)
    return params


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield perm[i:i + batch_size]


def predict_scores(x: np.ndarray, cfg: M.ModelConfig, params: dict,
                   batch_size: int = 64) -> np.ndarray:
    """Sigmoid scores [N, n_labels] for a stack of waveforms, without a graph."""
    out = []
    with no_grad():
        for i in range(0, x.shape[0], batch_size):
            logits = M.forward_batch(x[i:i + batch_size], cfg, params)
            out.append(sigmoid(logits.data))
    return np.concatenate(out, axis=0)


def evaluate_arrays(x: np.ndarray, y: np.ndarray, cfg: M.ModelConfig,
                    params: dict, threshold: float | None = None) -> tuple:
    thr = cfg.threshold if threshold is None else threshold
    scores = predict_scores(x, cfg, params)
    pred = (scores > thr).astype(np.int64)
    # empty activity set maps to the explicit no-event label
    empty = pred.sum(axis=1) == 0
    pred[empty, 3] = 1 if cfg.n_labels == 4 else 0
    return compute_report(pred, y, scores), scores, pred


def evaluate(dataset: Dataset, split: str, params: dict, cfg: M.ModelConfig,
             threshold: float | None = None, out_dir=None) -> MetricsReport:
    x, y, _ = dataset.arrays(split)
    report, scores, _ = evaluate_arrays(x, y, cfg, params, threshold)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        thr = cfg.threshold if threshold is None else threshold
        (out / f"report_{split}.txt").write_text(
            report.format(f"split = {split}\nthreshold = {thr!r}"))
        write_curves_csv(out / f"roc_{split}.csv", scores, y, "roc")
        write_curves_csv(out / f"pr_{split}.csv", scores, y, "pr")
    return report


def train(dataset: Dataset, model_cfg: M.ModelConfig, train_cfg: TrainConfig,
          out_dir=None) -> tuple[dict, RunRecord]:
    """Seeded mini-batch loop; retains the best-validation parameters."""
    train_cfg.validate()
    cfg = model_cfg
    if train_cfg.fusion_mode is not None:
        cfg = replace(model_cfg, fusion_mode=train_cfg.fusion_mode)
    cfg.validate()

    x_train, y_train, _ = dataset.arrays("train")
    x_val, y_val, _ = dataset.arrays("val")
    params = M.init_params(cfg, train_cfg.seed)
    opt = AdamW(params.values(), lr=train_cfg.lr, betas=train_cfg.betas,
                eps=train_cfg.eps, weight_decay=train_cfg.weight_decay)
    rng = np.random.default_rng([train_cfg.seed, 0x7E])
    record = RunRecord(lr_used=train_cfg.lr)
    best = {k: v.data.copy() for k, v in params.items()}
    best_exact = -1.0
    t0 = time.time()

    for epoch in range(train_cfg.max_epochs):
        losses = []
        for idx in _batches(x_train.shape[0], train_cfg.batch_size, rng):
            logits = M.forward_batch(x_train[idx], cfg, params)
            loss = bce_with_logits(logits, y_train[idx].astype(np.float64))
            if not np.isfinite(loss.data):
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch ids {idx.tolist()}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(float(loss.data))
        record.losses.append(float(np.mean(losses)))
        record.digests.append(params_digest(params))

        if (epoch + 1) % train_cfg.eval_every == 0:
            report, _, _ = evaluate_arrays(x_val, y_val, cfg, params)
            record.val_reports.append((epoch, report))
            if report.strict_match > best_exact:
                best_exact = report.strict_match
                best = {k: v.data.copy() for k, v in params.items()}
                record.best_epoch = epoch
                if out_dir is not None:
                    Path(out_dir).mkdir(parents=True, exist_ok=True)
                    save_checkpoint(Path(out_dir) / "best.ckpt", cfg, params)
            if (train_cfg.early_stop_exact is not None
                    and report.strict_match >= train_cfg.early_stop_exact):
                break

    record.wall_time = time.time() - t0
    final = {k: Tensor(v, requires_grad=True) for k, v in best.items()}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "final.ckpt", cfg, final)
        lines = [f"lr = {record.lr_used!r}", f"best_epoch = {record.best_epoch}",
                 f"wall_time = {record.wall_time:.1f}", "[epochs]"]
        for e, (loss, dig) in enumerate(zip(record.losses, record.digests)):
            lines.append(f"{e}\t{loss!r}\t{dig}")
        (out / "run_record.txt").write_text("\n".join(lines) + "\n")
    return final, record


ABLATION_VARIANTS = ("freq_only", "single_scale", "concat", "full")


def run_ablations(dataset: Dataset, base_cfg: M.ModelConfig,
                  train_cfg: TrainConfig) -> dict[str, MetricsReport]:
    """Train the four fusion variants on the same data and seed.

    The caller chooses the branch count of `base_cfg`; `single_scale` forces
    a one-branch free-weight convolution frontend in its place.
    """
    results = {}
    for variant in ABLATION_VARIANTS:
        if variant == "full":
            cfg = replace(base_cfg, fusion_mode="cross_attention")
        elif variant == "concat":
            cfg = replace(base_cfg, fusion_mode="concat")
        elif variant == "freq_only":
            cfg = replace(base_cfg, fusion_mode="freq_only")
        else:
            cfg = replace(base_cfg, fusion_mode="cross_attention",
                          branches=1, frontend="plain")
        params, _ = train(dataset, cfg, train_cfg)
        results[variant] = evaluate(dataset, "test", params, cfg)
    return results


def format_ablation_table(results: dict[str, MetricsReport]) -> str:
    rows = [f"{'variant':<14}{'f1':>10}{'precision':>12}{'recall':>10}{'auroc':>10}"]
    for name in ABLATION_VARIANTS:
        r = results[name]
        rows.append(f"{name:<14}{r.f1:>10.4f}{r.precision:>12.4f}"
                    f"{r.recall:>10.4f}{r.auroc:>10.4f}")
    return "\n".join(rows) + "\n"
