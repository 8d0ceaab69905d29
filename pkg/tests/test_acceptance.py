"""End-to-end acceptance checks on the frozen synthetic fixture.

Each test prints one PASS/FAIL line with the measured numbers, then asserts.
Run with ``pytest tests/test_acceptance.py -v`` to see them inline.
"""
import json
import time

import numpy as np
import pytest

from hto import attack, circuit, cli, defense, quantizer, spectral
from hto import detector as det
from hto.attack import PatchBudget

SYNC_EPS = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
UNSYNC_EPS = [1.0, 2.0, 3.0, 4.0, 6.0, 8.0]
ADAPTIVE_EPS = [1.0, 2.0, 4.0, 8.0]
EVADED = 2.0       # class-1 accuracy counted as 0% for the sync sweep
TARGET = 5.0       # class-1 accuracy ceiling for quantized / unsync / adaptive evasion
N_SHIFTS = 200


@pytest.fixture
def verdict(capsys):
    def emit(number, name, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number:>2} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def clean(fixture_data, fixture_model):
    return det.accuracy(fixture_model[0], fixture_data[2])


@pytest.fixture(scope="module")
def sync_sweep(fixture_data, fixture_model):
    _, train, test = fixture_data
    t0 = time.perf_counter()
    rows = attack.budget_sweep(train, fixture_model[0], PatchBudget(), SYNC_EPS, "sync", test)
    return rows, time.perf_counter() - t0


@pytest.fixture(scope="module")
def eps_star(sync_sweep, clean):
    rows, _ = sync_sweep
    for r in rows:
        if r["class1"] <= EVADED and abs(r["class0"] - clean["class0"]) <= 5.0:
            return r["epsilon_mw"], r["patch"]
    return None, None


def test_criterion_01_detector_sanity(fixture_data, fixture_model, clean, verdict):
    _, history, seconds = fixture_model
    ok = clean["class0"] >= 95.0 and clean["class1"] >= 95.0 and len(history) <= 30 and seconds <= 120.0
    verdict(1, "detector sanity",
            ok, f"held-out class0 {clean['class0']:.1f}% class1 {clean['class1']:.1f}%, "
                f"{len(history)} epochs in {seconds:.1f} s")
    assert ok


def test_criterion_02_gradient_correctness(fixture_data, fixture_model, verdict):
    _, _, test = fixture_data
    params = fixture_model[0]
    rng = np.random.default_rng(2024)
    h = 1e-5
    rows = rng.choice(len(test), size=5, replace=False)
    worst_in = 0.0
    for row in rows:
        x, y = test.X[row], int(test.y[row])
        g = det.input_gradient(params, x, y)
        for i in rng.choice(test.d, size=20, replace=False):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            num = (det.loss(params, xp, y) - det.loss(params, xm, y)) / (2 * h)
            if max(abs(g[i]), abs(num)) >= 1e-8:
                worst_in = max(worst_in, abs(g[i] - num) / max(abs(g[i]), abs(num)))
    X, y = test.X[rows], test.y[rows]
    flat = params.flat()
    g = det.param_gradient(params, X, y)
    worst_p = 0.0
    for i in rng.choice(flat.size, size=20, replace=False):
        fp, fm = flat.copy(), flat.copy()
        fp[i] += h
        fm[i] -= h
        num = (np.mean(det.loss(params.with_flat(fp), X, y))
               - np.mean(det.loss(params.with_flat(fm), X, y))) / (2 * h)
        if max(abs(g[i]), abs(num)) >= 1e-8:
            worst_p = max(worst_p, abs(g[i] - num) / max(abs(g[i]), abs(num)))
    ok = worst_in <= 1e-4 and worst_p <= 1e-4
    verdict(2, "gradient correctness", ok,
            f"max relative error input {worst_in:.2e}, params {worst_p:.2e} (limit 1e-4)")
    assert ok


def test_criterion_03_sync_evasion(sync_sweep, eps_star, clean, verdict):
    rows, seconds = sync_sweep
    star, _ = eps_star
    curve = ", ".join(f"{r['epsilon_mw']:g}:{r['class1']:.0f}/{r['class0']:.0f}" for r in rows)
    ok = star is not None and seconds <= 300.0
    verdict(3, "sync evasion", ok,
            f"eps* = {star} mW, sweep {seconds:.0f} s; eps:class1/class0 = {curve}; clean class0 {clean['class0']:.0f}")
    assert ok


def test_criterion_04_quantized_evasion(fixture_data, fixture_model, eps_star, verdict):
    _, train, test = fixture_data
    params = fixture_model[0]
    star, _ = eps_star
    assert star is not None, "needs eps* from criterion 3"
    S = quantizer.ValueSubspace((0.0, star))
    patch = quantizer.generate_quantized_patch(train, params, PatchBudget(epsilon_mw=star), S)
    acc = attack.evaluate_patch(params, test, patch)
    ok = acc["class1"] <= TARGET and set(patch.delta.tolist()) <= {0.0, star}
    verdict(4, "quantized evasion", ok,
            f"two-level {{0, {star:g}}} patch: class1 {acc['class1']:.1f}% (limit {TARGET:g}%)")
    assert ok


def test_criterion_05_unsync_evasion(fixture_data, fixture_model, eps_star, verdict):
    _, train, test = fixture_data
    params = fixture_model[0]
    star, _ = eps_star
    assert star is not None, "needs eps* from criterion 3"
    rows = attack.budget_sweep(train, params, PatchBudget(), UNSYNC_EPS, "unsync", test,
                               n_shifts=N_SHIFTS, eval_seed=0)
    unsync_star = attack.minimal_evading_epsilon(rows, TARGET)
    ok = unsync_star is not None and unsync_star > star
    curve = ", ".join(f"{r['epsilon_mw']:g}:{r['class1']:.1f}" for r in rows)
    verdict(5, "unsync evasion", ok,
            f"minimal unsync eps = {unsync_star} (sync eps* {star}); mean class1 over {N_SHIFTS} shifts: {curve}")
    assert ok


def test_criterion_06_spectral_oracle(verdict):
    rng = np.random.default_rng(6)
    worst_dft = worst_parseval = worst_idem = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 65))
        s = rng.normal(size=n) * rng.uniform(0.1, 10)
        worst_dft = max(worst_dft, float(np.max(np.abs(spectral.dft(s).bins - spectral.dft_direct(s)))))
        energy = float(np.sum(s ** 2))
        worst_parseval = max(worst_parseval, abs(spectral.psd(s).sum() - energy) / energy)
    band = spectral.BandPassFilter.from_mhz(0.5, 12.0)
    for _ in range(20):
        s = rng.uniform(0, 5, size=1000)
        once = spectral.band_pass(s, band)
        worst_idem = max(worst_idem, float(np.max(np.abs(spectral.band_pass(once, band) - once))))
    ok = worst_dft <= 1e-9 and worst_parseval <= 1e-6 and worst_idem <= 1e-9
    verdict(6, "spectral oracle", ok,
            f"dft vs direct {worst_dft:.1e}, Parseval rel {worst_parseval:.1e}, idempotence {worst_idem:.1e}")
    assert ok


def test_criterion_07_filter_defense(fixture_data, fixture_model, eps_star, clean, verdict):
    _, train, test = fixture_data
    params = fixture_model[0]
    star, sync_patch = eps_star
    assert star is not None, "needs eps* from criterion 3"
    band = spectral.choose_band(train, 0.99)
    fd = defense.FilteredDetector(params, band, test.sample_period)
    recovered = fd.accuracy(test, test.X + sync_patch.delta)["class1"]
    part_a = recovered >= clean["class1"] - 5.0
    rows = attack.budget_sweep(train, params, PatchBudget(), ADAPTIVE_EPS, "adaptive", test, band=band)
    adaptive_star = attack.minimal_evading_epsilon(rows, TARGET)
    part_b = adaptive_star is not None and adaptive_star > star
    curve = ", ".join(f"{r['epsilon_mw']:g}:{r['class1']:.1f}" for r in rows)
    ok = part_a and part_b
    verdict(7, "filter defense", ok,
            f"band {band.mhz[0]:g}-{band.mhz[1]:g} MHz; unconstrained patch filtered class1 {recovered:.1f}% "
            f"(need >= {clean['class1'] - 5:.1f}) [{'ok' if part_a else 'fail'}]; adaptive minimal eps = "
            f"{adaptive_star} vs eps* {star}, filtered class1 by eps {curve} [{'ok' if part_b else 'fail'}]")
    assert ok


def test_criterion_08_emulation_fidelity(eps_star, verdict):
    _, patch = eps_star
    assert patch is not None, "needs the eps* patch from criterion 3"
    mse = {}
    for tag in ("asic", "fpga_ro", "fpga_dsp"):
        platform = circuit.PlatformModel.from_name(tag)
        mse[tag] = circuit.fidelity_mse(patch, circuit.emulate(circuit.config_vectors(patch, platform)))
    rng = np.random.default_rng(8)
    exact = thermo = True
    for _ in range(1000):
        p = rng.uniform(0, rng.uniform(0.1, 9.0), size=50)
        for platform in (circuit.PlatformModel.asic(), circuit.PlatformModel.fpga_ro()):
            v = circuit.config_vectors(p, platform)
            exact &= bool(np.array_equal(v.decode(), circuit.quantize(p, platform.resolution_mw)))
            thermo &= v.is_thermometer()
    ok = mse["asic"] <= 0.0025 and mse["fpga_ro"] <= 0.25 and mse["fpga_dsp"] <= 0.25 and exact and thermo
    verdict(8, "circuit emulation fidelity", ok,
            f"MSE asic {mse['asic']:.2e}, fpga_ro {mse['fpga_ro']:.3f}, fpga_dsp {mse['fpga_dsp']:.3f} mW^2; "
            f"decode oracle exact={exact}, thermometer={thermo}")
    assert ok


def test_criterion_09_resource_accounting(verdict):
    budgets = [1, 2, 1, 2, 2, 1]
    ros = [circuit.resource_count(np.array([0.0, b / 2, b]), circuit.PlatformModel.fpga_ro()) for b in budgets]
    dsps = [circuit.resource_count(np.array([0.0, b / 2, b]), circuit.PlatformModel.fpga_dsp()) for b in budgets]
    asic = circuit.resource_count(np.array([0.0, 0.2, 0.6]), circuit.PlatformModel.asic())
    ok = ros == [2, 4, 2, 4, 4, 2] and dsps == [1, 2, 1, 2, 2, 1] and asic == 6
    verdict(9, "resource accounting", ok, f"ROs {ros}, DSPs {dsps}, ASIC 0-0.6 mW cells {asic}")
    assert ok


def test_criterion_10_adversarial_training(fixture_data, fixture_model, eps_star, verdict):
    _, train, test = fixture_data
    plain = fixture_model[0]
    star, _ = eps_star
    assert star is not None, "needs eps* from criterion 3"
    eps_train = star / 2
    at_params, _ = defense.adversarial_train(train, det.ArchitectureSpec(), det.TrainConfig(),
                                             defense.ATConfig(epsilon_mw=eps_train))
    plain_clean, at_clean = det.accuracy(plain, test), det.accuracy(at_params, test)
    attack_eps = [eps_train / 2, eps_train, 2 * star]
    rows = defense.robustness_curve(plain, at_params, train, attack_eps, PatchBudget(), test)
    utility = at_clean["overall"] <= plain_clean["overall"]
    low = all(r[2] >= r[1] + 10.0 for r in rows[:2])
    high = rows[2][2] - rows[2][1] < 10.0
    ok = utility and low and high
    curve = ", ".join(f"{r[0]:g}: plain {r[1]:.0f}% AT {r[2]:.0f}%" for r in rows)
    verdict(10, "adversarial training", ok,
            f"eps_train {eps_train:g}; clean overall plain {plain_clean['overall']:.1f}% AT "
            f"{at_clean['overall']:.1f}% (class0 {at_clean['class0']:.0f}, class1 {at_clean['class1']:.0f}) "
            f"[{'ok' if utility else 'fail'}]; class1 after patch {curve}; low-eps advantage "
            f"[{'ok' if low else 'fail'}], high-eps gap < 10 [{'ok' if high else 'fail'}]")
    assert ok


DETERMINISM_PIPELINE = [
    ["synth"],
    ["train", "--epochs", "3"],
    ["attack", "--mode", "sync", "--eps", "1", "--iters", "3"],
    ["attack", "--mode", "unsync", "--eps", "2", "--iters", "2", "--n-shifts", "10"],
    ["attack", "--mode", "adaptive", "--eps", "2", "--iters", "2"],
    ["quantize", "--strategy", "two_level", "--iters", "2"],
    ["emulate", "--platform", "asic"],
    ["emulate", "--platform", "fpga_dsp"],
    ["defend", "filter"],
    ["defend", "advtrain", "--eps", "0.5", "--iters", "2", "--epochs", "1",
     "--attack-eps", "0.5,2", "--attack-iters", "2"],
    ["sweep", "--mode", "sync", "--eps", "0.5,1", "--iters", "2"],
    ["report", "--n-shifts", "10"],
]


def test_criterion_11_determinism(tmp_path, verdict):
    manifests = []
    for run in ("a", "b"):
        out = tmp_path / run
        for argv in DETERMINISM_PIPELINE:
            assert cli.main(["--seed", "42", "--out", str(out)] + argv) == 0, argv
        manifests.append(json.loads((out / "manifest.json").read_text()))
    a, b = manifests
    files = sorted(p.name for p in (tmp_path / "a").iterdir()
                   if p.suffix in (".csv", ".json", ".svg") and p.name != "manifest.json")
    same_bytes = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    ok = a["content_hash"] == b["content_hash"] and a["files"] == b["files"] and same_bytes
    verdict(11, "determinism", ok,
            f"{len(files)} patch/CSV/SVG files byte-identical={same_bytes}; "
            f"manifest hash {a['content_hash'][:16]} vs {b['content_hash'][:16]}")
    assert ok

