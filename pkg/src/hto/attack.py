"""Universal adversarial power patches.

A patch is one nonnegative vector added to every HT trace so the detector
labels them benign. All generators share one sign-gradient loop:

    delta <- delta - alpha * mean_j sign(grad_x J(C(x_j + sh(delta)), benign))
    delta <- clip(delta, 0, eps) (+ Gaussian robustness noise)

with optional random cyclic shifts (unsynchronized patches), a spectral
projection (adaptive patches) or a value-subspace projection (quantized
patches, see :mod:`hto.quantizer`).
"""
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import detector as det
from . import spectral
from ._io import write_json
from .errors import ConfigError, ParseError, ShapeError

KINDS = ("sync", "unsync", "adaptive", "quantized")
TARGET_LABEL = 0


@dataclass(frozen=True)
class PatchBudget:
    epsilon_mw: float = 3.0
    alpha: float = None  # step size; defaults to 0.01 * epsilon
    sigma_mw: float = 0.0
    iterations: int = 200
    seed: int = 0
    batch_size: int = 32

    def validate(self):
        if self.epsilon_mw <= 0:
            raise ConfigError("epsilon_mw must be > 0")
        if self.alpha is not None and self.alpha < 0:
            raise ConfigError("alpha must be >= 0")
        if self.sigma_mw < 0:
            raise ConfigError("sigma_mw must be >= 0")
        if self.iterations < 1 or self.batch_size < 1:
            raise ConfigError("iterations and batch_size must be >= 1")

    @property
    def step(self):
        return 0.01 * self.epsilon_mw if self.alpha is None else self.alpha


@dataclass
class AdversarialPatch:
    delta: np.ndarray
    budget: PatchBudget
    kind: str = "sync"
    band: object = None  # spectral.BandPassFilter, adaptive patches only
    levels_mw: tuple = None  # value subspace, quantized patches only

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.kind not in KINDS:
            raise ConfigError(f"unknown patch kind {self.kind!r}")

    def __len__(self):
        return self.delta.shape[0]

    @property
    def overshoot_mw(self):
        """How far the patch leaves [0, eps]; nonzero only for adaptive patches."""
        return float(max(0.0, self.delta.max() - self.budget.epsilon_mw, -self.delta.min()))

    def to_dict(self):
        b = self.budget
        return {
            "kind": self.kind,
            "epsilon_mw": float(b.epsilon_mw),
            "sigma_mw": float(b.sigma_mw),
            "alpha": float(b.step),
            "iterations": int(b.iterations),
            "seed": int(b.seed),
            "band_mhz": self.band.mhz if self.band is not None else None,
            "levels_mw": [float(v) for v in self.levels_mw] if self.levels_mw is not None else None,
            "values_mw": [float(v) for v in self.delta],
        }

    @classmethod
    def from_dict(cls, obj):
        try:
            budget = PatchBudget(epsilon_mw=float(obj["epsilon_mw"]), alpha=float(obj["alpha"]),
                                 sigma_mw=float(obj["sigma_mw"]), iterations=int(obj["iterations"]),
                                 seed=int(obj["seed"]))
            band = obj.get("band_mhz")
            levels = obj.get("levels_mw")
            return cls(np.array(obj["values_mw"], dtype=np.float64), budget, obj["kind"],
                       spectral.BandPassFilter.from_mhz(*band) if band else None,
                       tuple(levels) if levels is not None else None)
        except (KeyError, TypeError) as exc:
            raise ParseError(f"malformed patch file: {exc}") from None


def save_patch(patch, path):
    write_json(path, patch.to_dict())


def load_patch(path):
    return AdversarialPatch.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ShiftPolicy:
    mode: str = "none"  # none | fixed | uniform_random
    k: int = 0
    seed: int = 0

    def shifts(self, n, d):
        if self.mode == "none":
            return np.zeros(n, dtype=np.int64)
        if self.mode == "fixed":
            if not 0 <= self.k < d:
                raise ConfigError(f"shift k={self.k} outside [0, {d - 1}]")
            return np.full(n, self.k, dtype=np.int64)
        if self.mode == "uniform_random":
            return np.random.default_rng(self.seed).integers(0, d, size=n)
        raise ConfigError(f"unknown shift mode {self.mode!r}")


def linf(delta):
    delta = np.asarray(delta, dtype=np.float64)
    if delta.size == 0:
        raise ShapeError("L-inf of an empty vector")
    return float(np.max(np.abs(delta)))


def clip_budget(delta, epsilon_mw):
    if epsilon_mw <= 0:
        raise ConfigError("epsilon_mw must be > 0")
    return np.clip(np.asarray(delta, dtype=np.float64), 0.0, epsilon_mw)


def shift(delta, k):
    """Cyclic right rotation: out[j] = delta[(j - k) mod d]."""
    delta = np.asarray(delta)
    d = delta.shape[-1]
    if not 0 <= k < d:
        raise ConfigError(f"shift k={k} outside [0, {d - 1}]")
    return np.concatenate([delta[..., d - k:], delta[..., :d - k]], axis=-1)


def _shift_rows(delta, ks):
    """Row j of the result is shift(delta, ks[j])."""
    d = delta.shape[0]
    return delta[(np.arange(d)[None, :] - ks[:, None]) % d]


def _unshift_rows(rows, ks):
    """Inverse rotation of every row, so gradients land on patch coordinates."""
    d = rows.shape[1]
    idx = (np.arange(d)[None, :] + ks[:, None]) % d
    return np.take_along_axis(rows, idx, axis=1)


def _ht_traces(dataset):
    X = dataset.X[dataset.y == 1]
    if X.shape[0] == 0:
        raise ConfigError("dataset has no HT-labeled traces")
    return X


def optimize_patch(dataset, params, budget, *, shifted=False, band=None, attack_filter=None,
                   project=None, kind="sync", alpha=None):
    """Shared sign-gradient loop behind every patch generator.

    ``band`` enables the per-iteration spectral projection; ``attack_filter``
    makes the loop differentiate through the defender's band-pass
    preprocessor; ``project`` maps the patch onto a value subspace.
    """
    budget.validate()
    X = _ht_traces(dataset)
    n, d = X.shape
    eps, sigma = budget.epsilon_mw, budget.sigma_mw
    step = budget.step if alpha is None else alpha
    period = dataset.sample_period
    if band is not None:
        band.validate_for(d, period)
    if attack_filter is not None:
        attack_filter.validate_for(d, period)
    rng = np.random.default_rng(budget.seed)

    delta = rng.uniform(0.0, eps, size=d)
    clean = delta.copy()
    for _ in range(budget.iterations):
        order = rng.permutation(n)
        for start in range(0, n, budget.batch_size):
            xb = X[order[start:start + budget.batch_size]]
            if shifted:
                ks = rng.integers(0, d, size=xb.shape[0])
                inputs = xb + _shift_rows(delta, ks)
            else:
                inputs = xb + delta
            if attack_filter is not None:
                inputs = spectral.band_pass(inputs, attack_filter, period)
            _, grad, _ = det.loss_and_gradients(params, inputs, TARGET_LABEL, want_params=False)
            if attack_filter is not None:
                grad = spectral.band_pass(grad, attack_filter, period)
            signs = np.sign(grad)
            if shifted:
                signs = _unshift_rows(signs, ks)
            delta = np.clip(delta - step * signs.mean(axis=0), 0.0, eps)
            clean = delta
            if sigma > 0:
                delta = delta + rng.normal(0.0, sigma, size=d)
            if band is not None:
                delta = spectral.spectral_clip(delta, band, period)
            if project is not None:
                delta = project(delta)

    if project is not None:
        final = project(np.clip(delta, 0.0, eps))
    elif band is not None:
        final = spectral.spectral_clip(clean, band, period)
    else:
        final = clean
    return AdversarialPatch(final, replace(budget, alpha=step), kind, band=band)


def generate_patch(dataset, params, budget):
    """Synchronized universal patch."""
    return optimize_patch(dataset, params, budget, kind="sync")


def generate_unsync_patch(dataset, params, budget):
    """Patch robust to a uniformly random cyclic time shift."""
    return optimize_patch(dataset, params, budget, shifted=dataset.d > 1, kind="unsync")


def generate_adaptive_patch(dataset, params, budget, band, shift_mode="sync", through_filter=True):
    """Patch whose spectrum is confined to ``band``.

    With ``through_filter`` the gradients are taken through the defender's
    band-pass preprocessor, which is the adaptive attacker's view.
    """
    if band is None:
        raise ConfigError("adaptive patches need a band")
    if shift_mode not in ("sync", "unsync"):
        raise ConfigError(f"unknown shift mode {shift_mode!r}")
    return optimize_patch(dataset, params, budget, shifted=shift_mode == "unsync", band=band,
                          attack_filter=band if through_filter else None, kind="adaptive")


def _patched(X, delta, ks):
    if not ks.any():
        return X + delta
    return X + _shift_rows(delta, ks)


def evaluate_patch(params, dataset, patch, shift_policy=None, preproc=None):
    """Per-class accuracy (percent) on ``x + shift(delta, k)``.

    ``preproc`` is an optional :class:`~hto.spectral.BandPassFilter` applied
    before the detector.
    """
    delta = patch.delta if isinstance(patch, AdversarialPatch) else np.asarray(patch, dtype=np.float64)
    if delta.shape != (dataset.d,):
        raise ShapeError(f"patch length {delta.shape} does not match traces of length {dataset.d}")
    policy = shift_policy or ShiftPolicy()
    ks = policy.shifts(len(dataset), dataset.d)
    X = _patched(dataset.X, delta, ks)
    if preproc is not None:
        X = spectral.band_pass(X, preproc, dataset.sample_period)
    return det.accuracy(params, dataset, X=X)


def evaluate_random_shifts(params, dataset, patch, n_shifts=200, seed=0, preproc=None):
    """Monte-Carlo evaluation: mean per-class accuracy over ``n_shifts`` random shifts."""
    rng = np.random.default_rng(seed)
    ks = rng.integers(0, dataset.d, size=n_shifts)
    results = [evaluate_patch(params, dataset, patch, ShiftPolicy("fixed", int(k)), preproc)
               for k in ks]
    return {key: float(np.mean([r[key] for r in results])) for key in ("class0", "class1", "overall")}


def budget_sweep(dataset, params, base_budget, epsilons, mode="sync", eval_dataset=None,
                 band=None, n_shifts=200, eval_seed=0):
    """One generate + evaluate per epsilon; rows of dicts (epsilon_mw, class0, class1).

    Unsync patches are scored by the random-shift Monte-Carlo mean; adaptive
    patches are scored through the band-pass preprocessor.
    """
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ConfigError("epsilon list is empty")
    if any(b <= a for a, b in zip(epsilons, epsilons[1:])):
        raise ConfigError("epsilons must be strictly ascending")
    eval_dataset = eval_dataset or dataset
    rows = []
    for eps in epsilons:
        budget = replace(base_budget, epsilon_mw=eps)
        if mode == "sync":
            patch = generate_patch(dataset, params, budget)
            acc = evaluate_patch(params, eval_dataset, patch)
        elif mode == "unsync":
            patch = generate_unsync_patch(dataset, params, budget)
            acc = evaluate_random_shifts(params, eval_dataset, patch, n_shifts, eval_seed)
        elif mode == "adaptive":
            patch = generate_adaptive_patch(dataset, params, budget, band)
            acc = evaluate_patch(params, eval_dataset, patch, preproc=band)
        else:
            raise ConfigError(f"unknown sweep mode {mode!r}")
        rows.append({"epsilon_mw": eps, "class0": acc["class0"], "class1": acc["class1"],
                     "patch": patch})
    return rows


def minimal_evading_epsilon(rows, threshold=0.0):
    """Smallest swept epsilon whose class-1 accuracy is <= threshold (None if none)."""
    for row in rows:
        if row["class1"] is not None and row["class1"] <= threshold:
            return row["epsilon_mw"]
    return None
