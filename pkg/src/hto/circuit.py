"""Hardware models for the HTO circuit: configuration vectors, emulation, resources.

A patch sample P is written as a count of resolution steps, n = round(P / res),
and n is split into decimal digits. Digit l drives a row of 9 identical
cells with quantum 10^l * res, thermometer coded: the first d_l cells are on.
ASIC cells are transistors at 0.1 mW resolution. The FPGA variants work in
whole mW, one cell per mW, built from 2 ring oscillators or 1 DSP slice.
"""
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import attack
from ._io import write_json
from .errors import CapacityError, ConfigError, ParseError, ShapeError
from .traces import PowerTrace

CELLS_PER_DIGIT = 9
PLATFORM_TAGS = ("asic", "fpga_ro", "fpga_dsp")


@dataclass(frozen=True)
class PlatformModel:
    tag: str
    resolution_mw: float
    units_per_mw: float  # physical units per mW of capacity (FPGA); ASIC counts digit cells

    def __post_init__(self):
        if self.tag not in PLATFORM_TAGS:
            raise ConfigError(f"unknown platform {self.tag!r}")
        if self.resolution_mw <= 0:
            raise ConfigError("resolution must be > 0")

    @classmethod
    def asic(cls):
        return cls("asic", 0.1, 1.0)

    @classmethod
    def fpga_ro(cls):
        return cls("fpga_ro", 1.0, 2.0)

    @classmethod
    def fpga_dsp(cls):
        return cls("fpga_dsp", 1.0, 1.0)

    @classmethod
    def from_name(cls, name):
        if name not in PLATFORM_TAGS:
            raise ConfigError(f"unknown platform {name!r}; expected one of {', '.join(PLATFORM_TAGS)}")
        return getattr(cls, name)()

    def quantize(self, values):
        return quantize(values, self.resolution_mw)


@dataclass(frozen=True)
class DigitRow:
    weight: int  # quantum in resolution steps (1, 10, 100, ...)
    cell_count: int = CELLS_PER_DIGIT


@dataclass(frozen=True)
class CellNetwork:
    """Digit rows, most significant first."""
    digit_rows: tuple
    resolution_mw: float

    def __post_init__(self):
        rows = tuple(self.digit_rows)
        if not rows:
            raise ConfigError("cell network needs at least one digit row")
        if any(b.weight >= a.weight for a, b in zip(rows, rows[1:])):
            raise ConfigError("digit quanta must be strictly decreasing")
        if any(r.cell_count < 1 or r.weight < 1 for r in rows):
            raise ConfigError("digit rows need positive weights and cell counts")
        object.__setattr__(self, "digit_rows", rows)

    @classmethod
    def decimal(cls, n_digits, resolution_mw):
        weights = [10 ** l for l in reversed(range(n_digits))]
        return cls(tuple(DigitRow(w) for w in weights), resolution_mw)

    @classmethod
    def for_platform(cls, platform, max_steps=0):
        """Smallest decimal network holding ``max_steps``; ASIC keeps units and tenths rows."""
        digits = len(str(int(max_steps))) if max_steps > 0 else 1
        if platform.tag == "asic":
            digits = max(digits, 2)
        return cls.decimal(digits, platform.resolution_mw)

    @property
    def n_cells(self):
        return sum(r.cell_count for r in self.digit_rows)

    @property
    def capacity_steps(self):
        return sum(r.weight * r.cell_count for r in self.digit_rows)

    @property
    def cell_weights(self):
        return np.concatenate([np.full(r.cell_count, r.weight, dtype=np.int64) for r in self.digit_rows])

    def quanta_mw(self):
        return [r.weight * self.resolution_mw for r in self.digit_rows]


@dataclass
class ConfigurationVectors:
    rows: np.ndarray  # (cycles, n_cells) of 0/1
    platform: PlatformModel
    network: CellNetwork

    def __len__(self):
        return self.rows.shape[0]

    def segments(self):
        """Per-digit views of the rows, in network order."""
        out, start = [], 0
        for r in self.network.digit_rows:
            out.append(self.rows[:, start:start + r.cell_count])
            start += r.cell_count
        return out

    def is_thermometer(self):
        # a prefix of ones means the row never steps from 0 back up to 1
        return all(not np.any(np.diff(seg.astype(np.int8), axis=1) > 0) for seg in self.segments())

    def steps(self):
        return self.rows.astype(np.int64) @ self.network.cell_weights

    def decode(self):
        return self.steps() * self.network.resolution_mw

    def to_dict(self):
        return {
            "platform": self.platform.tag,
            "digit_rows": [{"quantum_mw": float(q), "cells": r.cell_count}
                           for q, r in zip(self.network.quanta_mw(), self.network.digit_rows)],
            "rows": self.rows.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, obj):
        try:
            platform = PlatformModel.from_name(obj["platform"])
            res = platform.resolution_mw
            digit_rows = tuple(DigitRow(int(round(r["quantum_mw"] / res)), int(r["cells"]))
                               for r in obj["digit_rows"])
            network = CellNetwork(digit_rows, res)
            rows = np.array(obj["rows"], dtype=np.uint8).reshape(-1, network.n_cells)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed vectors file: {exc}") from None
        if np.any(rows > 1):
            raise ParseError("configuration bits must be 0 or 1")
        return cls(rows, platform, network)


def save_vectors(vectors, path):
    write_json(path, vectors.to_dict())


def load_vectors(path):
    return ConfigurationVectors.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def quantize_steps(values, resolution_mw):
    """Nearest multiple of the resolution as an integer step count; halves round up."""
    return np.floor(np.asarray(values, dtype=np.float64) / resolution_mw + 0.5).astype(np.int64)


def quantize(values, resolution_mw):
    return quantize_steps(values, resolution_mw) * resolution_mw


def _patch_values(patch):
    delta = patch.delta if isinstance(patch, attack.AdversarialPatch) else patch
    delta = np.asarray(delta, dtype=np.float64)
    if delta.ndim != 1 or delta.size == 0:
        raise ShapeError("patch must be a nonempty vector")
    return delta


def config_vectors(patch, platform, network=None):
    """Thermometer-coded per-cycle cell selections for every patch sample."""
    delta = _patch_values(patch)
    if np.any(delta < 0) or not np.all(np.isfinite(delta)):
        raise ConfigError("patch values must be finite and >= 0")
    steps = quantize_steps(delta, platform.resolution_mw)
    if network is None:
        network = CellNetwork.for_platform(platform, int(steps.max()))
    over = np.flatnonzero(steps > network.capacity_steps)
    if over.size:
        i = int(over[0])
        raise CapacityError(f"{delta[i]} mW exceeds network capacity "
                            f"{network.capacity_steps * platform.resolution_mw} mW", cycle=i)
    rows = np.zeros((delta.size, network.n_cells), dtype=np.uint8)
    remaining = steps.copy()
    start = 0
    for r in network.digit_rows:
        digit = np.minimum(remaining // r.weight, r.cell_count)
        remaining -= digit * r.weight
        rows[:, start:start + r.cell_count] = np.arange(r.cell_count)[None, :] < digit[:, None]
        start += r.cell_count
    return ConfigurationVectors(rows, platform, network)


def emulate(vectors, measurement_sigma=0.0, seed=0):
    """Power drawn per cycle by the configured cells, plus optional measurement noise."""
    if measurement_sigma < 0:
        raise ConfigError("measurement sigma must be >= 0")
    power = vectors.decode()
    if measurement_sigma > 0:
        rng = np.random.default_rng(seed)
        power = np.maximum(power + rng.normal(0.0, measurement_sigma, size=power.shape), 0.0)
    return PowerTrace(power)


def fidelity_mse(target, emulated):
    a = _patch_values(target)
    b = np.asarray(emulated.samples if isinstance(emulated, PowerTrace) else emulated, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    return float(np.mean((a - b) ** 2))


def resource_count(patch, platform):
    """Cells (ASIC transistors) or physical FPGA units needed for the patch.

    FPGA: units_per_mw * ceil(max). ASIC: the largest digit used at each
    decimal position, summed. A quantized patch maps each nonzero level onto
    one dedicated transistor, so there the count is the number of nonzero levels.
    """
    delta = _patch_values(patch)
    if platform.tag in ("fpga_ro", "fpga_dsp"):
        top = math.ceil(float(delta.max()) - 1e-9) if delta.max() > 0 else 0
        return int(platform.units_per_mw * top)
    if isinstance(patch, attack.AdversarialPatch) and patch.kind == "quantized":
        return int(np.unique(delta[delta > 0]).size)
    steps = quantize_steps(delta, platform.resolution_mw)
    total, place = 0, 1
    top = int(steps.max())
    while place <= max(top, 1):
        total += int(((steps // place) % 10).max())
        place *= 10
    return total


def ro_frequency(n_inverters, tau_s):
    """Oscillation frequency 1 / (2 n tau) of an n-stage ring oscillator."""
    if n_inverters < 1 or n_inverters % 2 == 0:
        raise ConfigError("the number of inverters should be an odd number >= 1")
    if tau_s <= 0:
        raise ConfigError("tau must be > 0")
    return 1.0 / (2 * n_inverters * tau_s)


@dataclass
class HTOReport:
    platform: PlatformModel
    patch: attack.AdversarialPatch
    emulated: PowerTrace
    mse_mw2: float
    resource_count: int
    accuracy: dict  # post-emulation per-class accuracy, percent

    def to_dict(self):
        return {
            "platform": self.platform.tag,
            "epsilon_mw": float(self.patch.budget.epsilon_mw),
            "mse_mw2": self.mse_mw2,
            "resource_count": self.resource_count,
            "class0": self.accuracy["class0"],
            "class1": self.accuracy["class1"],
        }


def end_to_end(patch, platform, params, dataset, shift_policy=None, measurement_sigma=0.0, seed=0):
    """Patch -> vectors -> emulated power -> detector evaluation."""
    if not isinstance(patch, attack.AdversarialPatch):
        patch = attack.AdversarialPatch(_patch_values(patch), attack.PatchBudget(
            epsilon_mw=max(float(np.max(patch)), 1e-12)))
    vectors = config_vectors(patch, platform)
    emulated = emulate(vectors, measurement_sigma, seed)
    acc = attack.evaluate_patch(params, dataset, emulated.samples, shift_policy)
    return HTOReport(platform, patch, emulated, fidelity_mse(patch, emulated),
                     resource_count(patch, platform), acc)
