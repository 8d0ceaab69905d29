"""Patch value statistics and value-subspace (quantized) patches.

A full patch tends to pile up near 0 and near its budget, so a handful of
power levels reproduces most of its effect. The levels become circuit
cells, so fewer levels means a smaller HTO.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from . import attack
from .errors import ConfigError

STRATEGIES = ("grid", "three_level", "two_level", "top_k")


@dataclass(frozen=True)
class ValueSubspace:
    levels_mw: tuple
    degenerate: bool = False  # fewer levels than the strategy asked for

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels_mw)
        if not levels:
            raise ConfigError("value subspace must be nonempty")
        if any(not math.isfinite(v) or v < 0 for v in levels):
            raise ConfigError("subspace levels must be finite and >= 0")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("subspace levels must be strictly ascending")
        object.__setattr__(self, "levels_mw", levels)

    def __len__(self):
        return len(self.levels_mw)

    def validate_for(self, epsilon_mw):
        if self.levels_mw[-1] > epsilon_mw * (1 + 1e-12):
            raise ConfigError(f"level {self.levels_mw[-1]} exceeds budget {epsilon_mw}")

    @property
    def array(self):
        return np.array(self.levels_mw)


@dataclass(frozen=True)
class QuantizationStrategy:
    tag: str
    resolution_mw: float = None
    k: int = None
    bin_width_mw: float = None

    def __post_init__(self):
        if self.tag not in STRATEGIES:
            raise ConfigError(f"unknown quantization strategy {self.tag!r}")
        if self.tag == "grid" and not (self.resolution_mw and self.resolution_mw > 0):
            raise ConfigError("grid resolution must be > 0")
        if self.tag == "top_k":
            if self.k is None or self.k < 1:
                raise ConfigError("top_k needs k >= 1")
            if not (self.bin_width_mw and self.bin_width_mw > 0):
                raise ConfigError("top_k bin width must be > 0")

    @classmethod
    def grid(cls, resolution_mw):
        return cls("grid", resolution_mw=float(resolution_mw))

    @classmethod
    def three_level(cls):
        return cls("three_level")

    @classmethod
    def two_level(cls):
        return cls("two_level")

    @classmethod
    def top_k(cls, k, bin_width_mw):
        return cls("top_k", k=int(k), bin_width_mw=float(bin_width_mw))

    @classmethod
    def parse(cls, text):
        """CLI form: ``grid:0.1``, ``three_level``, ``two_level`` or ``top_k:3:0.1``."""
        parts = text.split(":")
        try:
            if parts[0] == "grid" and len(parts) == 2:
                return cls.grid(float(parts[1]))
            if parts[0] in ("three_level", "two_level") and len(parts) == 1:
                return cls(parts[0])
            if parts[0] == "top_k" and len(parts) == 3:
                return cls.top_k(int(parts[1]), float(parts[2]))
        except ValueError:
            pass
        raise ConfigError(f"cannot parse quantization strategy {text!r}")


def _values_and_eps(patch, epsilon_mw):
    if isinstance(patch, attack.AdversarialPatch):
        return patch.delta, patch.budget.epsilon_mw if epsilon_mw is None else epsilon_mw
    delta = np.asarray(patch, dtype=np.float64)
    if epsilon_mw is None:
        epsilon_mw = float(delta.max()) if delta.size else 0.0
    return delta, epsilon_mw


def histogram(patch, bin_width_mw, epsilon_mw=None):
    """Counts of patch values in bins of ``bin_width_mw`` covering [0, eps].

    Values outside the range land in the end bins, so counts always sum to d.
    """
    if bin_width_mw <= 0:
        raise ConfigError("bin width must be > 0")
    delta, eps = _values_and_eps(patch, epsilon_mw)
    n_bins = max(1, math.ceil(eps / bin_width_mw - 1e-9))
    idx = np.clip(np.floor(delta / bin_width_mw).astype(np.int64), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    return [((i + 0.5) * bin_width_mw, int(c)) for i, c in enumerate(counts)]


def grid_levels(resolution_mw, epsilon_mw):
    """Multiples n * resolution for n = 0 .. floor(eps / resolution)."""
    top = math.floor(epsilon_mw / resolution_mw + 1e-9)
    return tuple(n * resolution_mw for n in range(top + 1))


def build_subspace(patch, strategy, epsilon_mw=None):
    delta, eps = _values_and_eps(patch, epsilon_mw)
    if strategy.tag == "grid":
        return ValueSubspace(grid_levels(strategy.resolution_mw, eps))
    if strategy.tag == "two_level":
        return ValueSubspace((0.0, eps))
    if strategy.tag == "three_level":
        levels = sorted({0.0, float(np.mean(delta)), float(eps)})
        return ValueSubspace(tuple(levels), degenerate=len(levels) < 3)
    hist = histogram(delta, strategy.bin_width_mw, eps)
    # most populated first; ties go to the lower bin
    ranked = sorted((h for h in hist if h[1] > 0), key=lambda h: (-h[1], h[0]))
    centers = sorted({min(c, eps) for c, _ in ranked[:strategy.k]})
    return ValueSubspace(tuple(centers), degenerate=len(centers) < strategy.k)


def project(delta, subspace):
    """Map every element to its nearest level; exact midpoints go to the larger level."""
    levels = subspace.array if isinstance(subspace, ValueSubspace) else np.asarray(subspace, float)
    v = np.asarray(delta, dtype=np.float64)
    hi = np.clip(np.searchsorted(levels, v, side="left"), 0, len(levels) - 1)
    lo = np.clip(hi - 1, 0, len(levels) - 1)
    take_hi = (levels[hi] - v) <= (v - levels[lo])
    return np.where(take_hi, levels[hi], levels[lo])


def max_gap(subspace):
    levels = subspace.array
    return float(np.diff(levels).max()) if len(levels) > 1 else 0.0


def generate_quantized_patch(dataset, params, budget, subspace, shift_mode="sync"):
    """Sign-gradient patch whose values stay inside ``subspace``.

    Each iteration clips to [0, eps], adds the robustness noise and then
    projects. The step is raised to the widest level gap when the nominal
    step is smaller, otherwise projection would undo every update.
    """
    if shift_mode not in ("sync", "unsync"):
        raise ConfigError(f"unknown shift mode {shift_mode!r}")
    budget.validate()
    subspace.validate_for(budget.epsilon_mw)
    step = max(budget.step, max_gap(subspace))
    patch = attack.optimize_patch(dataset, params, budget, shifted=shift_mode == "unsync" and dataset.d > 1,
                                  project=lambda v: project(v, subspace), kind="quantized", alpha=step)
    return replace(patch, levels_mw=subspace.levels_mw)
