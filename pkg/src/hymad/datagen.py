"""Synthetic geophone-like dataset with the split-before-superposition protocol.

Single-activity waveforms are generated parametrically (there are no field
recordings), partitioned into train/val/test, and only then mixed into
multi-activity segments by randomly delayed, randomly scaled superposition.
Every sample carries its sources and seed, so regeneration is byte-identical.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hymad.errors import ConfigError, LeakageError

SEGMENT_LEN = 8000
FS = 8000.0
CLASSES = ("human", "animal", "vehicle", "no_event")
PAIR_CLASSES = (("human", "animal"), ("human", "vehicle"), ("vehicle", "animal"))
SPLITS = ("train", "val", "test")
LABEL_INDEX = {c: i for i, c in enumerate(CLASSES)}
MANIFEST_VERSION = 1


def label_vector(active: list[str]) -> np.ndarray:
    """Multi-hot [human, animal, vehicle, no_event]; no_event iff nothing else."""
    bits = np.zeros(4, dtype=np.int64)
    for c in active:
        if c not in LABEL_INDEX:
            raise ConfigError(f"unknown class {c!r}")
        if c != "no_event":
            bits[LABEL_INDEX[c]] = 1
    if bits[:3].sum() == 0:
        bits[3] = 1
    return bits


@dataclass
class Waveform:
    samples: np.ndarray
    labels: np.ndarray
    source_ids: list[int]
    split: str
    seed: int
    sample_id: int = -1

    def __post_init__(self):
        if self.samples.shape != (SEGMENT_LEN,):
            raise ConfigError(
                f"waveform must have {SEGMENT_LEN} samples, got {self.samples.shape}")


def normalize(x: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance; degenerate (near-constant) input maps to zeros."""
    x = np.asarray(x, dtype=np.float64)
    mu = x.mean()
    sd = x.std()
    if sd < 1e-12:
        return np.zeros_like(x)
    return (x - mu) / sd


# -- parametric event models --------------------------------------------------

def _impulse_train(rng, rate_lo, rate_hi, decay, freq_lo, freq_hi,
                   amp_lo, amp_hi, jitter_s):
    t = np.arange(SEGMENT_LEN) / FS
    x = np.zeros(SEGMENT_LEN)
    rate = rng.uniform(rate_lo, rate_hi)
    start = rng.uniform(0.0, 1.0 / rate)
    times = start + np.arange(0, int(rate) + 2) / rate
    times = times + rng.uniform(-jitter_s, jitter_s, times.shape)
    for t0 in times:
        if t0 < 0 or t0 >= 1.0:
            continue
        amp = rng.uniform(amp_lo, amp_hi)
        f = rng.uniform(freq_lo, freq_hi)
        tail = t[t >= t0] - t0
        x[SEGMENT_LEN - tail.size:] += amp * np.exp(-tail / decay) * np.sin(
            2.0 * np.pi * f * tail)
    return x


def _band_noise(rng, f_lo, f_hi):
    white = rng.standard_normal(SEGMENT_LEN)
    spec = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(SEGMENT_LEN, 1.0 / FS)
    spec[(freqs < f_lo) | (freqs > f_hi)] = 0.0
    return np.fft.irfft(spec, SEGMENT_LEN)


def gen_event(cls: str, rng: np.random.Generator) -> np.ndarray:
    """One raw (un-normalized) single-activity segment."""
    if cls == "human":
        # periodic heavy footfalls: 1.5-2.5 Hz damped impulses, ~40 ms decay
        x = _impulse_train(rng, 1.5, 2.5, 0.040, 20.0, 50.0, 0.8, 1.2, 0.005)
        return x + 0.05 * rng.standard_normal(SEGMENT_LEN)
    if cls == "animal":
        # lighter, irregular impulse train at 3-6 Hz with jittered timing
        x = _impulse_train(rng, 3.0, 6.0, 0.020, 40.0, 90.0, 0.3, 0.8, 0.030)
        return x + 0.05 * rng.standard_normal(SEGMENT_LEN)
    if cls == "vehicle":
        # continuous 5-80 Hz rumble under slow amplitude modulation
        t = np.arange(SEGMENT_LEN) / FS
        fm = rng.uniform(0.3, 2.0)
        am = 1.0 + 0.5 * np.sin(2.0 * np.pi * fm * t + rng.uniform(0, 2 * np.pi))
        x = am * _band_noise(rng, 5.0, 80.0)
        return x + 0.02 * rng.standard_normal(SEGMENT_LEN)
    if cls == "no_event":
        return rng.standard_normal(SEGMENT_LEN)
    raise ConfigError(f"unknown class {cls!r}")


def gen_single(cls: str, root_seed: int, index: int, split: str = "train") -> Waveform:
    """Reproducible normalized single-activity waveform."""
    rng = np.random.default_rng([root_seed, LABEL_INDEX[cls], index])
    return Waveform(normalize(gen_event(cls, rng)), label_vector([cls]),
                    source_ids=[], split=split, seed=root_seed)


def superpose(primary: Waveform, secondary: Waveform, delay: int,
              a: float, b: float) -> Waveform:
    """a*primary + b*shift(secondary, delay), then normalized; labels union.

    Refuses to mix waveforms from different splits (leakage guard).
    """
    if primary.split != secondary.split:
        raise LeakageError(
            f"cannot mix splits {primary.split!r} and {secondary.split!r}")
    if not (0 <= delay <= SEGMENT_LEN // 2):
        raise ConfigError(f"delay must lie in [0, {SEGMENT_LEN // 2}], got {delay}")
    if a <= 0 or b <= 0:
        raise ConfigError("scales a, b must be positive")
    shifted = np.zeros(SEGMENT_LEN)
    shifted[delay:] = secondary.samples[:SEGMENT_LEN - delay]
    mixed = a * primary.samples + b * shifted
    active = [CLASSES[i] for i in range(3)
              if primary.labels[i] or secondary.labels[i]]
    return Waveform(normalize(mixed), label_vector(active),
                    source_ids=sorted(set(primary.source_ids) | set(secondary.source_ids)),
                    split=primary.split, seed=primary.seed)


def split_ids(ids_by_class: dict[str, list[int]], ratios=(0.8, 0.1, 0.1),
              seed: int = 0) -> dict[str, set[int]]:
    """Per-class stratified shuffle split into disjoint train/val/test ID sets."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"dataset.ratios must sum to 1, got {list(ratios)}")
    rng = np.random.default_rng([seed, 0xD1])
    out = {s: set() for s in SPLITS}
    for cls in sorted(ids_by_class):
        ids = list(ids_by_class[cls])
        rng.shuffle(ids)
        n = len(ids)
        n_val = int(round(ratios[1] * n))
        n_test = int(round(ratios[2] * n))
        n_train = n - n_val - n_test
        out["train"].update(ids[:n_train])
        out["val"].update(ids[n_train:n_train + n_val])
        out["test"].update(ids[n_train + n_val:])
    return out


@dataclass
class SampleRecord:
    sample_id: int
    combo: str                 # e.g. "human" or "human+vehicle"
    split: str
    labels: np.ndarray
    source_ids: list[int]
    delay: int = 0
    scale_a: float = 1.0
    scale_b: float = 1.0
    seed: int = 0


@dataclass
class DatasetConfig:
    n_per_class: int = 400
    ratios: tuple = (0.8, 0.1, 0.1)
    seed: int = 0
    delay_max: int = 4000
    scale_lo: float = 0.5
    scale_hi: float = 2.0

    def validate(self):
        if self.n_per_class < 1:
            raise ConfigError(
                f"dataset.n_per_class must be >= 1, got {self.n_per_class}")
        if len(self.ratios) != 3 or abs(sum(self.ratios) - 1.0) > 1e-9:
            raise ConfigError(f"dataset.ratios must sum to 1, got {list(self.ratios)}")
        if not (0.0 < self.scale_lo <= self.scale_hi):
            raise ConfigError("dataset.scale_lo/scale_hi must satisfy 0 < lo <= hi")
        if not (0 <= self.delay_max <= SEGMENT_LEN // 2):
            raise ConfigError(
                f"dataset.delay_max must lie in [0, {SEGMENT_LEN // 2}]")
        return self


@dataclass
class Dataset:
    config: DatasetConfig
    records: list[SampleRecord]
    waves: dict[int, np.ndarray] = field(repr=False, default_factory=dict)

    def split_records(self, split: str) -> list[SampleRecord]:
        return [r for r in self.records if r.split == split]

    def arrays(self, split: str) -> tuple[np.ndarray, np.ndarray, list[int]]:
        recs = self.split_records(split)
        x = np.stack([self.waves[r.sample_id] for r in recs])
        y = np.stack([r.labels for r in recs])
        return x, y, [r.sample_id for r in recs]


def build_dataset(cfg: DatasetConfig) -> Dataset:
    """Generate singles, split them, then build within-split pair mixtures."""
    cfg.validate()
    n = cfg.n_per_class
    singles: dict[int, Waveform] = {}
    ids_by_class: dict[str, list[int]] = {c: [] for c in CLASSES}
    next_id = 0
    for cls in CLASSES:
        for i in range(n):
            w = gen_single(cls, cfg.seed, i)
            w.sample_id = next_id
            w.source_ids = [next_id]
            singles[next_id] = w
            ids_by_class[cls].append(next_id)
            next_id += 1

    parts = split_ids(ids_by_class, cfg.ratios, cfg.seed)
    for split, idset in parts.items():
        if not idset:
            raise ConfigError(
                f"split {split!r} is empty; increase n_per_class "
                "or adjust ratios")
        for sid in idset:
            singles[sid].split = split

    records: list[SampleRecord] = []
    waves: dict[int, np.ndarray] = {}
    for sid, w in singles.items():
        combo = CLASSES[int(np.argmax(w.labels))]
        records.append(SampleRecord(sid, combo, w.split, w.labels, [sid],
                                    seed=cfg.seed))
        waves[sid] = w.samples

    for pair_idx, (c1, c2) in enumerate(PAIR_CLASSES):
        combo = f"{c1}+{c2}"
        for split in SPLITS:
            pool1 = [i for i in ids_by_class[c1] if singles[i].split == split]
            pool2 = [i for i in ids_by_class[c2] if singles[i].split == split]
            want = sum(1 for i in ids_by_class[c1] if singles[i].split == split)
            if want > 0 and (not pool1 or not pool2):
                raise ConfigError(
                    f"empty {split} source pool for combination {combo}")
            for j in range(want):
                rng = np.random.default_rng([cfg.seed, 0xA0 + pair_idx,
                                             SPLITS.index(split), j])
                p = singles[int(rng.choice(pool1))]
                s = singles[int(rng.choice(pool2))]
                delay = int(rng.integers(0, cfg.delay_max + 1))
                # log-uniform scales keep both sources substantially present
                a, b = np.exp(rng.uniform(np.log(cfg.scale_lo),
                                          np.log(cfg.scale_hi), 2))
                mixed = superpose(p, s, delay, float(a), float(b))
                mixed.sample_id = next_id
                records.append(SampleRecord(next_id, combo, split, mixed.labels,
                                            mixed.source_ids, delay,
                                            float(a), float(b), cfg.seed))
                waves[next_id] = mixed.samples
                next_id += 1

    return Dataset(cfg, records, waves)


# -- on-disk layout: manifest (text) + one binary shard per split -------------

def _record_line(r: SampleRecord) -> str:
    bits = "".join(str(int(b)) for b in r.labels)
    srcs = ",".join(str(s) for s in r.source_ids)
    return (f"{r.sample_id}\t{r.combo}\t{r.split}\t{bits}\t{srcs}\t"
            f"{r.delay}\t{r.scale_a!r}\t{r.scale_b!r}\t{r.seed}")


def _parse_record(line: str) -> SampleRecord:
    sid, combo, split, bits, srcs, delay, a, b, seed = line.split("\t")
    labels = np.array([int(c) for c in bits], dtype=np.int64)
    sources = [int(s) for s in srcs.split(",")] if srcs else []
    return SampleRecord(int(sid), combo, split, labels, sources,
                        int(delay), float(a), float(b), int(seed))


def _label_byte(labels: np.ndarray) -> int:
    return sum(int(labels[i]) << i for i in range(4))


def save_dataset(ds: Dataset, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shard_digests = {}
    for split in SPLITS:
        recs = ds.split_records(split)
        path = out / f"{split}.bin"
        with open(path, "wb") as fh:
            for r in recs:
                fh.write(struct.pack("<BQ", _label_byte(r.labels), r.sample_id))
                fh.write(ds.waves[r.sample_id].astype("<f8").tobytes())
        shard_digests[split] = hashlib.sha256(path.read_bytes()).hexdigest()

    cfg = ds.config
    lines = [f"hymad-dataset v{MANIFEST_VERSION}",
             f"seed = {cfg.seed}",
             f"n_per_class = {cfg.n_per_class}",
             f"ratios = {cfg.ratios[0]!r},{cfg.ratios[1]!r},{cfg.ratios[2]!r}",
             f"delay_max = {cfg.delay_max}",
             f"scale_lo = {cfg.scale_lo!r}",
             f"scale_hi = {cfg.scale_hi!r}"]
    lines += [f"shard_{s} = {shard_digests[s]}" for s in SPLITS]
    lines.append("[samples]")
    lines += [_record_line(r) for r in ds.records]
    (out / "manifest").write_text("\n".join(lines) + "\n")
    return out


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    text = (path / "manifest").read_text().splitlines()
    if not text or not text[0].startswith("hymad-dataset v"):
        raise ConfigError(f"not a dataset manifest: {path / 'manifest'}")
    header = {}
    body_at = text.index("[samples]")
    for line in text[1:body_at]:
        k, v = line.split(" = ", 1)
        header[k] = v
    ratios = tuple(float(v) for v in header["ratios"].split(","))
    cfg = DatasetConfig(int(header["n_per_class"]), ratios, int(header["seed"]),
                        int(header["delay_max"]), float(header["scale_lo"]),
                        float(header["scale_hi"]))
    records = [_parse_record(line) for line in text[body_at + 1:] if line]

    waves = {}
    rec_size = 1 + 8 + SEGMENT_LEN * 8
    for split in SPLITS:
        blob = (path / f"{split}.bin").read_bytes()
        if len(blob) % rec_size != 0:
            raise ConfigError(f"corrupt shard {split}.bin")
        for off in range(0, len(blob), rec_size):
            _, sid = struct.unpack_from("<BQ", blob, off)
            waves[sid] = np.frombuffer(blob, dtype="<f8", count=SEGMENT_LEN,
                                       offset=off + 9).copy()
    return Dataset(cfg, records, waves)


def manifest_digest(path: str | Path) -> str:
    return hashlib.sha256((Path(path) / "manifest").read_bytes()).hexdigest()


def verify_shards(path: str | Path) -> bool:
    """Check that shard files match the digests recorded in the manifest."""
    path = Path(path)
    text = (path / "manifest").read_text().splitlines()
    for line in text[1:text.index("[samples]")]:
        k, v = line.split(" = ", 1)
        if k.startswith("shard_"):
            split = k[len("shard_"):]
            actual = hashlib.sha256((path / f"{split}.bin").read_bytes()).hexdigest()
            if actual != v:
                return False
    return True
