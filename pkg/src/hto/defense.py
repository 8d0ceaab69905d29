"""Defender-side countermeasures: band-pass preprocessing and PGD adversarial training."""
from dataclasses import dataclass, replace

import numpy as np

from . import attack
from . import detector as det
from . import spectral
from .errors import ConfigError, ShapeError
from .traces import DEFAULT_SAMPLE_PERIOD_US, PowerTrace, TraceDataset


@dataclass(frozen=True)
class FilteredDetector:
    params: det.DetectorParams
    filter: spectral.BandPassFilter
    sample_period: float = DEFAULT_SAMPLE_PERIOD_US

    def __post_init__(self):
        self.filter.validate_for(self.params.d, self.sample_period)

    def preprocess(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.params.d:
            raise ShapeError(f"trace length {X.shape[-1]} does not match detector input {self.params.d}")
        return spectral.band_pass(X, self.filter, self.sample_period)

    def accuracy(self, dataset, X=None):
        X = dataset.X if X is None else X
        return det.accuracy(self.params, dataset, X=self.preprocess(X))


def filtered_predict(fd, trace):
    samples = trace.samples if isinstance(trace, PowerTrace) else trace
    return det.predict(fd.params, fd.preprocess(samples))


def filtered_dataset(dataset, band):
    """Band-passed copy of a dataset, clamped at zero so it stays a valid power set."""
    X = np.maximum(spectral.band_pass(dataset.X, band, dataset.sample_period), 0.0)
    return TraceDataset(X, dataset.y, name=f"{dataset.name}-filtered", sample_period=dataset.sample_period)


def retrain_on_filtered(dataset, band, arch=None, config=None):
    """Optional variant: fit a fresh detector on band-passed traces."""
    params, _ = det.train(filtered_dataset(dataset, band), arch, config)
    return FilteredDetector(params, band, dataset.sample_period)


@dataclass(frozen=True)
class ATConfig:
    epsilon_mw: float = 0.5
    step: float = 0.1
    pgd_iters: int = 20
    epochs: int = 30
    seed: int = 0

    def validate(self):
        if self.epsilon_mw < 0:
            raise ConfigError("epsilon_mw must be >= 0")
        if self.step <= 0:
            raise ConfigError("step must be > 0")
        if self.pgd_iters < 1:
            raise ConfigError("pgd_iters must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


def pgd_attack(params, trace, label, at):
    """Projected sign-gradient ascent on the loss of ``label``.

    The perturbation stays in [0, eps] per element, like a physical patch,
    and the output is clamped to nonnegative power. Works on one trace or a
    batch of rows.
    """
    at.validate()
    x0 = np.asarray(trace.samples if isinstance(trace, PowerTrace) else trace, dtype=np.float64)
    single = x0.ndim == 1
    X0 = x0[None, :] if single else x0
    if at.epsilon_mw == 0:
        return x0.copy()
    y = np.broadcast_to(np.asarray(label, dtype=np.int64), (X0.shape[0],))
    X = X0.copy()
    for _ in range(at.pgd_iters):
        _, grad, _ = det.loss_and_gradients(params, X, y, want_params=False)
        X = X + at.step * np.sign(grad)
        X = np.maximum(X0 + np.clip(X - X0, 0.0, at.epsilon_mw), 0.0)
    return X[0] if single else X


def adversarial_train(dataset, arch=None, train_config=None, at=None):
    """Min-max training: every mini-batch is swapped for its PGD version before the step."""
    at = at or ATConfig()
    at.validate()
    train_config = train_config or det.TrainConfig(epochs=at.epochs, seed=at.seed)
    if at.epsilon_mw == 0:
        return det.train(dataset, arch, train_config)

    def perturb(params, X, y):
        return pgd_attack(params, X, y, at)

    return det.train(dataset, arch, train_config, perturb=perturb)


ROBUSTNESS_HEADER = ("epsilon_mw", "plain_acc", "at_acc", "at_clean_acc")


def robustness_curve(plain_params, at_params, dataset, epsilons, base_budget=None, eval_dataset=None):
    """Post-patch class-1 accuracy of both models, one fresh patch per model and eps.

    Rows follow ``ROBUSTNESS_HEADER``; at_clean_acc is the AT model's overall
    clean accuracy on the evaluation set.
    """
    epsilons = [float(e) for e in epsilons]
    if not epsilons:
        raise ConfigError("epsilon list is empty")
    if any(b <= a for a, b in zip(epsilons, epsilons[1:])):
        raise ConfigError("epsilons must be strictly ascending")
    base_budget = base_budget or attack.PatchBudget()
    eval_dataset = eval_dataset or dataset
    at_clean = det.accuracy(at_params, eval_dataset)["overall"]
    rows = []
    for eps in epsilons:
        budget = replace(base_budget, epsilon_mw=eps)
        accs = []
        for params in (plain_params, at_params):
            patch = attack.generate_patch(dataset, params, budget)
            accs.append(attack.evaluate_patch(params, eval_dataset, patch)["class1"])
        rows.append((eps, accs[0], accs[1], at_clean))
    return rows
