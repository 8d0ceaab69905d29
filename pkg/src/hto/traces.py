"""Power traces, labeled datasets, the synthetic trace generator and CSV I/O.

All power values are in mW. Every operation here keeps samples nonnegative,
since negative instantaneous power has no physical meaning.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._io import atomic_write_text
from .errors import ConfigError, ParseError, ShapeError

MIN_LENGTH = 8
DEFAULT_SAMPLE_PERIOD_US = 0.01  # 100 MS/s capture


@dataclass(frozen=True)
class PowerTrace:
    samples: np.ndarray
    sample_period: float = DEFAULT_SAMPLE_PERIOD_US  # µs per sample

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64)
        if s.ndim != 1:
            raise ShapeError("trace must be one-dimensional")
        if not np.all(np.isfinite(s)):
            raise ConfigError("trace contains non-finite samples")
        if np.any(s < 0):
            raise ConfigError("trace contains negative power samples")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]


@dataclass(frozen=True)
class LabeledTrace:
    trace: PowerTrace
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ConfigError(f"label must be 0 or 1, got {self.label!r}")


class TraceDataset:
    """A labeled set of equal-length traces.

    Stored as a dense ``(n, d)`` matrix ``X`` plus a label vector ``y``;
    ``items`` materializes :class:`LabeledTrace` objects on demand.
    """

    def __init__(self, X, y, name="dataset", sample_period=DEFAULT_SAMPLE_PERIOD_US):
        X = np.array(X, dtype=np.float64)
        y = np.array(y, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ShapeError("dataset must be a nonempty (n, d) matrix")
        if y.shape != (X.shape[0],):
            raise ShapeError("label vector does not match trace count")
        if not np.all(np.isfinite(X)) or np.any(X < 0):
            raise ConfigError("dataset samples must be finite and nonnegative")
        if not np.all((y == 0) | (y == 1)):
            raise ConfigError("labels must be 0 or 1")
        X.setflags(write=False)
        y.setflags(write=False)
        self.X = X
        self.y = y
        self.name = name
        self.sample_period = float(sample_period)

    @classmethod
    def from_items(cls, items, name="dataset", sample_period=None):
        items = list(items)
        if not items:
            raise ShapeError("dataset must be nonempty")
        lengths = {len(it.trace) for it in items}
        if len(lengths) != 1:
            raise ShapeError(f"inconsistent trace lengths {sorted(lengths)}")
        if sample_period is None:
            sample_period = items[0].trace.sample_period
        X = np.stack([it.trace.samples for it in items])
        y = np.array([it.label for it in items])
        return cls(X, y, name=name, sample_period=sample_period)

    @property
    def d(self):
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    @property
    def items(self):
        return [
            LabeledTrace(PowerTrace(x, self.sample_period), int(label))
            for x, label in zip(self.X, self.y)
        ]

    def class_counts(self):
        return int(np.sum(self.y == 0)), int(np.sum(self.y == 1))

    def subset(self, index, name=None):
        index = np.asarray(index)
        return TraceDataset(self.X[index], self.y[index], name=name or self.name,
                            sample_period=self.sample_period)

    def of_class(self, label):
        return self.subset(np.flatnonzero(self.y == label))

    def require_both_classes(self):
        n0, n1 = self.class_counts()
        if n0 == 0 or n1 == 0:
            raise ConfigError("dataset must contain both benign and HT traces")

    def __eq__(self, other):
        if not isinstance(other, TraceDataset):
            return NotImplemented
        return (self.X.shape == other.X.shape
                and np.array_equal(self.X, other.X)
                and np.array_equal(self.y, other.y))

    def __repr__(self):
        n0, n1 = self.class_counts()
        return f"TraceDataset({self.name!r}, n0={n0}, n1={n1}, d={self.d})"


@dataclass(frozen=True)
class SynthConfig:
    d: int = 1000
    n_per_class: int = 500
    base_amplitude_mw: float = 10.0
    n_rounds: int = 10
    ht_bump_mw: float = 0.8
    ht_bump_width: int = 50
    noise_sigma_mw: float = 0.2
    seed: int = 7
    sample_period: float = DEFAULT_SAMPLE_PERIOD_US
    burst_duty: float = 0.5  # fraction of each round occupied by the burst

    def validate(self):
        if self.d < MIN_LENGTH:
            raise ConfigError(f"d must be >= {MIN_LENGTH}")
        if self.n_per_class < 1:
            raise ConfigError("n_per_class must be >= 1")
        if self.base_amplitude_mw <= 0 or self.sample_period <= 0:
            raise ConfigError("base amplitude and sample period must be > 0")
        if self.ht_bump_mw < 0 or self.noise_sigma_mw < 0:
            raise ConfigError("bump height and noise sigma must be >= 0")
        if not 1 <= self.ht_bump_width < self.d:
            raise ConfigError("ht_bump_width must be in [1, d)")
        if self.n_rounds < 1:
            raise ConfigError("n_rounds must be >= 1")
        if not 0 < self.burst_duty <= 1:
            raise ConfigError("burst_duty must be in (0, 1]")


def round_waveform(d, n_rounds, amplitude, duty=0.5):
    """Noise-free benign waveform: one raised-cosine burst per round."""
    period = d / n_rounds
    phase = (np.arange(d) % period) / period
    active = phase < duty
    wave = np.zeros(d)
    wave[active] = 0.5 * amplitude * (1.0 - np.cos(2 * np.pi * phase[active] / duty))
    return wave


def synth_dataset(config: SynthConfig, name="synthetic"):
    """Generate ``n_per_class`` benign traces followed by as many HT traces."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    n, d = config.n_per_class, config.d
    base = round_waveform(d, config.n_rounds, config.base_amplitude_mw, config.burst_duty)

    benign = base + rng.normal(0.0, config.noise_sigma_mw, size=(n, d))
    ht = base + rng.normal(0.0, config.noise_sigma_mw, size=(n, d))
    offsets = rng.integers(0, d - config.ht_bump_width + 1, size=n)
    for row, off in zip(ht, offsets):
        row[off:off + config.ht_bump_width] += config.ht_bump_mw

    X = np.maximum(np.concatenate([benign, ht]), 0.0)
    y = np.concatenate([np.zeros(n, dtype=np.int64), np.ones(n, dtype=np.int64)])
    return TraceDataset(X, y, name=name, sample_period=config.sample_period)


def split(dataset: TraceDataset, train_fraction, seed):
    """Stratified shuffled split into (train, test)."""
    if not 0 < train_fraction < 1:
        raise ConfigError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_idx, test_idx = [], []
    for label in (0, 1):
        idx = np.flatnonzero(dataset.y == label)
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        k = int(math.floor(idx.size * train_fraction + 0.5))
        train_idx.append(idx[:k])
        test_idx.append(idx[k:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    train_idx = train_idx[rng.permutation(train_idx.size)]
    if train_idx.size == 0 or test_idx.size == 0:
        raise ConfigError("split leaves an empty partition")
    return (dataset.subset(train_idx, name=f"{dataset.name}-train"),
            dataset.subset(test_idx, name=f"{dataset.name}-test"))


def add_measurement_noise(trace, sigma, seed):
    """Add i.i.d. Gaussian measurement noise and clamp at zero.

    Accepts a :class:`PowerTrace` (returns one) or a raw array (returns an array).
    """
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    samples = trace.samples if isinstance(trace, PowerTrace) else np.asarray(trace, dtype=np.float64)
    if sigma == 0:
        out = samples.copy()
    else:
        rng = np.random.default_rng(seed)
        out = np.maximum(samples + rng.normal(0.0, sigma, size=samples.shape), 0.0)
    if isinstance(trace, PowerTrace):
        return PowerTrace(out, trace.sample_period)
    return out


def save_csv(dataset: TraceDataset, path):
    path = Path(path)
    if not str(path) or str(path) == ".":
        raise OSError("empty output path")
    header = "label," + ",".join(f"s{i}" for i in range(dataset.d))
    lines = [header]
    for x, label in zip(dataset.X, dataset.y):
        lines.append(str(int(label)) + "," + ",".join(repr(float(v)) for v in x))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_csv(path, sample_period=DEFAULT_SAMPLE_PERIOD_US, name=None):
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("empty file", row=1)
    header = lines[0].strip().split(",")
    if header[0] != "label":
        raise ParseError("header must start with 'label'", row=1)
    d = None
    X, y = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.rstrip("\r")
        if not line.strip():
            continue
        cells = line.split(",")
        if d is None:
            d = len(cells) - 1
            if d < MIN_LENGTH:
                raise ParseError(f"trace length {d} < {MIN_LENGTH}", row=lineno)
        if len(cells) - 1 != d:
            raise ParseError(f"expected {d} samples, found {len(cells) - 1}", row=lineno)
        if cells[0].strip() not in ("0", "1"):
            raise ParseError(f"label must be 0 or 1, got {cells[0]!r}", row=lineno)
        try:
            values = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise ParseError(f"non-numeric cell ({exc})", row=lineno) from None
        if not all(math.isfinite(v) and v >= 0 for v in values):
            raise ParseError("samples must be finite and nonnegative", row=lineno)
        X.append(values)
        y.append(int(cells[0]))
    if not X:
        raise ParseError("no data rows", row=2)
    return TraceDataset(np.array(X), np.array(y), name=name or path.stem,
                        sample_period=sample_period)
