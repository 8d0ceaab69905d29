"""``hto`` command line: reproducible runs of every stage, CSV/JSON outputs and SVG plots.

All stages share one root seed (``--seed``, else the config file, else
``HTO_SEED``, else 0). Each stage derives its own seed from the root and the
stage name, so a single stage can be re-run in isolation with the same result.
"""
import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import attack, circuit, defense, quantizer, spectral, traces
from . import detector as det
from ._io import sha256_file, write_csv, write_json
from .errors import ConfigError, HTOError

MANIFEST = "manifest.json"
HASHED_SUFFIXES = (".csv", ".json", ".bin")
PLATFORMS = circuit.PLATFORM_TAGS
MODES = ("sync", "unsync", "adaptive", "quantized")


def derive_seed(root, stage):
    digest = hashlib.sha256(f"{int(root)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


def parse_eps(text):
    """``a:b:s`` (inclusive range) or a comma list; returns ascending floats."""
    try:
        if ":" in text:
            a, b, s = (float(v) for v in text.split(":"))
            if s <= 0 or b < a:
                raise ValueError
            n = int(np.floor((b - a) / s + 1e-9)) + 1
            values = [round(a + i * s, 10) for i in range(n)]
        else:
            values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse epsilon list {text!r}; use a:b:step or a,b,c") from None
    if not values or any(v <= 0 for v in values):
        raise ConfigError("epsilons must be > 0")
    return values


# -- shared plumbing -------------------------------------------------------

class Run:
    def __init__(self, args):
        self.args = args
        self.seed = args.seed
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.written = []

    def seed_for(self, stage):
        return derive_seed(self.seed, stage)

    def path(self, explicit, default_name):
        return Path(explicit) if explicit else self.out / default_name

    def csv(self, name, header, rows):
        path = self.out / name
        write_csv(path, header, rows)
        self.written.append(path)
        return path

    def json(self, name, obj):
        path = self.out / name
        write_json(path, obj)
        self.written.append(path)
        return path

    def note(self, path):
        self.written.append(Path(path))

    def load_dataset(self, explicit, default_name):
        path = self.path(explicit, default_name)
        if not path.exists():
            raise ConfigError(f"missing dataset {path}; run 'hto synth' / 'hto train' first or pass a path")
        return traces.load_csv(path, sample_period=self.args.sample_period)

    def load_model(self, explicit=None, default_name="model.bin"):
        path = self.path(explicit, default_name)
        if not path.exists():
            raise ConfigError(f"missing model {path}; run 'hto train' first")
        return det.load_model(path)

    def load_patch(self, explicit, default_name):
        path = self.path(explicit, default_name)
        if not path.exists():
            raise ConfigError(f"missing patch {path}; run 'hto attack' first")
        return attack.load_patch(path)

    def finish(self):
        update_manifest(self)


def _echo(value, out):
    if isinstance(value, Path):
        value = str(value)
    if isinstance(value, str) and os.path.isabs(value):
        try:
            return os.path.relpath(value, out)
        except ValueError:
            return value
    return value


def update_manifest(run):
    path = run.out / MANIFEST
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    args = {k: _echo(v, run.out) for k, v in sorted(vars(run.args).items())
            if k not in ("func", "out", "config")}
    manifest.setdefault("commands", {})[run.args.command_key] = args
    manifest["seed"] = run.seed
    manifest["sub_seeds"] = {stage: derive_seed(run.seed, stage)
                             for stage in ("synth", "split", "train", "attack", "quantize",
                                           "emulate", "defend", "sweep")}
    files = {}
    for f in sorted(run.out.iterdir()):
        if f.is_file() and f.name != MANIFEST and f.suffix in HASHED_SUFFIXES:
            files[f.name] = sha256_file(f)
    manifest["files"] = files
    joined = "".join(f"{name}\0{digest}\n" for name, digest in files.items())
    manifest["content_hash"] = hashlib.sha256(joined.encode()).hexdigest()
    write_json(path, manifest)


def _acc_row(label, acc):
    return (label, acc["class0"], acc["class1"], acc["overall"])


ACC_HEADER = ("condition", "class0", "class1", "overall")


def _budget(args, stage_seed):
    return attack.PatchBudget(epsilon_mw=args.eps, sigma_mw=args.sigma, iterations=args.iters,
                              seed=stage_seed, batch_size=args.batch_size)


def _band(run, args, dataset):
    if args.band == "auto":
        return spectral.choose_band(dataset, args.energy)
    return spectral.BandPassFilter.parse(args.band)


def _patch_csvs(run, patch, stem, sample_period):
    hist = quantizer.histogram(patch, args_bin_width(patch))
    run.csv(f"{stem}_histogram.csv", ("bin_center_mw", "count"), hist)
    run.csv(f"{stem}_spectrum.csv", ("freq_mhz", "magnitude"),
            spectral.spectrum_report(patch.delta, sample_period))


def args_bin_width(patch):
    return max(patch.budget.epsilon_mw / 20.0, 1e-6)


# -- subcommands -----------------------------------------------------------

def cmd_synth(run):
    a = run.args
    cfg = traces.SynthConfig(d=a.d, n_per_class=a.n_per_class, base_amplitude_mw=a.base,
                             n_rounds=a.rounds, ht_bump_mw=a.bump, ht_bump_width=a.width,
                             noise_sigma_mw=a.noise, seed=a.synth_seed if a.synth_seed is not None
                             else run.seed_for("synth"), sample_period=a.sample_period)
    ds = traces.synth_dataset(cfg, name="synthetic")
    path = run.out / "dataset.csv"
    traces.save_csv(ds, path)
    run.note(path)
    n0, n1 = ds.class_counts()
    print(f"wrote {path} ({n0} benign, {n1} HT, d={ds.d})")


def cmd_train(run):
    a = run.args
    ds = run.load_dataset(a.data, "dataset.csv")
    train_ds, test_ds = traces.split(ds, a.train_fraction, run.seed_for("split"))
    for part, name in ((train_ds, "train.csv"), (test_ds, "test.csv")):
        traces.save_csv(part, run.out / name)
        run.note(run.out / name)
    config = det.TrainConfig(epochs=a.epochs, batch_size=a.batch_size, learning_rate=a.lr,
                             seed=run.seed_for("train"))
    params, history = det.train(train_ds, None, config)
    det.save_model(params, run.out / "model.bin")
    run.note(run.out / "model.bin")
    run.csv("history.csv", ("epoch", "loss", "accuracy"),
            [(h["epoch"], h["loss"], h["accuracy"]) for h in history])
    acc = det.accuracy(params, test_ds)
    run.csv("train_eval.csv", ACC_HEADER, [_acc_row("held_out", acc)])
    print(f"held-out accuracy: class0 {acc['class0']:.1f}%  class1 {acc['class1']:.1f}%  "
          f"({params.n_params} parameters)")


def _quantized(run, train_ds, params, budget, strategy, reference=None):
    if strategy.tag in ("three_level", "top_k") and reference is None:
        reference = attack.generate_patch(train_ds, params, budget)
    S = quantizer.build_subspace(reference if reference is not None else np.zeros(1), strategy,
                                 budget.epsilon_mw)
    if S.degenerate:
        print(f"warning: subspace has only {len(S)} level(s)", file=sys.stderr)
    return quantizer.generate_quantized_patch(train_ds, params, budget, S, run.args.shift)


def _evaluate(run, params, test_ds, patch, mode, band=None):
    if mode == "unsync" or (mode == "quantized" and run.args.shift == "unsync"):
        return attack.evaluate_random_shifts(params, test_ds, patch, run.args.n_shifts,
                                             run.seed_for("evaluate"))
    return attack.evaluate_patch(params, test_ds, patch, preproc=band)


def cmd_attack(run):
    a = run.args
    train_ds = run.load_dataset(a.train, "train.csv")
    test_ds = run.load_dataset(a.test, "test.csv")
    params = run.load_model(a.model)
    budget = _budget(a, run.seed_for("attack"))
    band = None
    if a.mode == "sync":
        patch = attack.generate_patch(train_ds, params, budget)
    elif a.mode == "unsync":
        patch = attack.generate_unsync_patch(train_ds, params, budget)
    elif a.mode == "adaptive":
        band = _band(run, a, train_ds)
        patch = attack.generate_adaptive_patch(train_ds, params, budget, band)
    else:
        patch = _quantized(run, train_ds, params, budget, quantizer.QuantizationStrategy.parse(a.strategy))
    attack.save_patch(patch, run.out / f"patch_{a.mode}.json")
    run.note(run.out / f"patch_{a.mode}.json")
    clean = det.accuracy(params, test_ds, X=spectral.band_pass(test_ds.X, band, test_ds.sample_period)
                         if band is not None else None)
    patched = _evaluate(run, params, test_ds, patch, a.mode, band)
    run.csv(f"attack_{a.mode}.csv", ACC_HEADER, [_acc_row("clean", clean), _acc_row("patched", patched)])
    _patch_csvs(run, patch, f"patch_{a.mode}", test_ds.sample_period)
    print(f"{a.mode} patch eps={budget.epsilon_mw} mW: class1 {clean['class1']:.1f}% -> "
          f"{patched['class1']:.1f}%  (class0 {patched['class0']:.1f}%)")
    if patch.kind == "adaptive":
        print(f"spectral clip leaves the patch {patch.overshoot_mw:.4g} mW outside [0, eps]")


def cmd_quantize(run):
    a = run.args
    train_ds = run.load_dataset(a.train, "train.csv")
    test_ds = run.load_dataset(a.test, "test.csv")
    params = run.load_model(a.model)
    reference = run.load_patch(a.patch, "patch_sync.json")
    strategy = quantizer.QuantizationStrategy.parse(a.strategy)
    budget = replace(reference.budget, alpha=None, seed=run.seed_for("quantize"),
                     iterations=a.iters if a.iters else reference.budget.iterations)
    run.csv("reference_histogram.csv", ("bin_center_mw", "count"),
            quantizer.histogram(reference, args_bin_width(reference)))
    patch = _quantized(run, train_ds, params, budget, strategy, reference)
    attack.save_patch(patch, run.out / "patch_quantized.json")
    run.note(run.out / "patch_quantized.json")
    patched = _evaluate(run, params, test_ds, patch, "quantized")
    run.csv("quantize.csv", ("levels_mw", "class0", "class1"),
            [(" ".join(repr(v) for v in patch.levels_mw), patched["class0"], patched["class1"])])
    print(f"quantized to {len(patch.levels_mw)} level(s) {list(patch.levels_mw)}: "
          f"class1 {patched['class1']:.1f}%")


def cmd_emulate(run):
    a = run.args
    patch = run.load_patch(a.patch, "patch_sync.json")
    platform = circuit.PlatformModel.from_name(a.platform)
    vectors = circuit.config_vectors(patch, platform)
    circuit.save_vectors(vectors, run.out / f"vectors_{a.platform}.json")
    run.note(run.out / f"vectors_{a.platform}.json")
    emulated = circuit.emulate(vectors, a.measurement_sigma, run.seed_for("emulate"))
    run.csv(f"emulated_{a.platform}.csv", ("cycle", "target_mw", "emulated_mw"),
            [(i, float(t), float(e)) for i, (t, e) in enumerate(zip(patch.delta, emulated.samples))])
    mse = circuit.fidelity_mse(patch, emulated)
    resources = circuit.resource_count(patch, platform)
    summary = {"platform": a.platform, "mse_mw2": mse, "resource_count": resources,
               "thermometer": bool(vectors.is_thermometer())}
    if a.test or (run.out / "test.csv").exists():
        test_ds = run.load_dataset(a.test, "test.csv")
        params = run.load_model(a.model)
        summary["accuracy"] = attack.evaluate_patch(params, test_ds, emulated.samples)
    run.json(f"emulate_{a.platform}.json", summary)
    print(f"{a.platform}: mse {mse:.6g} mW^2, {resources} resource unit(s)")


def cmd_defend_filter(run):
    a = run.args
    train_ds = run.load_dataset(a.train, "train.csv")
    test_ds = run.load_dataset(a.test, "test.csv")
    params = run.load_model(a.model)
    band = _band(run, a, train_ds)
    fd = defense.FilteredDetector(params, band, test_ds.sample_period)
    rows = [_acc_row("clean", det.accuracy(params, test_ds)),
            _acc_row("clean_filtered", fd.accuracy(test_ds))]
    patch_path = run.path(a.patch, "patch_sync.json")
    if patch_path.exists():
        patch = attack.load_patch(patch_path)
        X = test_ds.X + patch.delta
        rows.append(_acc_row("patched", det.accuracy(params, test_ds, X=X)))
        rows.append(_acc_row("patched_filtered", fd.accuracy(test_ds, X=X)))
    run.csv("filter.csv", ACC_HEADER, rows)
    run.json("band.json", {"band_mhz": band.mhz,
                           "energy_fraction": a.energy if a.band == "auto" else None})
    print(f"band {band.mhz[0]:g}-{band.mhz[1]:g} MHz")
    for r in rows:
        print(f"  {r[0]:<17} class0 {r[1]:.1f}%  class1 {r[2]:.1f}%")


def cmd_defend_advtrain(run):
    a = run.args
    train_ds = run.load_dataset(a.train, "train.csv")
    test_ds = run.load_dataset(a.test, "test.csv")
    plain = run.load_model(a.model)
    seed = run.seed_for("defend")
    at_cfg = defense.ATConfig(epsilon_mw=a.eps, step=a.step, pgd_iters=a.pgd_iters, epochs=a.epochs, seed=seed)
    at_params, history = defense.adversarial_train(
        train_ds, plain.arch, det.TrainConfig(epochs=a.epochs, batch_size=a.batch_size, seed=seed), at_cfg)
    det.save_model(at_params, run.out / "model_at.bin")
    run.note(run.out / "model_at.bin")
    run.csv("history_at.csv", ("epoch", "loss", "accuracy"),
            [(h["epoch"], h["loss"], h["accuracy"]) for h in history])
    base = attack.PatchBudget(iterations=a.attack_iters, seed=run.seed_for("attack"))
    rows = defense.robustness_curve(plain, at_params, train_ds, parse_eps(a.attack_eps), base, test_ds)
    run.csv("robustness.csv", defense.ROBUSTNESS_HEADER, rows)
    for r in rows:
        print(f"  eps {r[0]:g}: plain {r[1]:.1f}%  AT {r[2]:.1f}%")


def cmd_sweep(run):
    a = run.args
    train_ds = run.load_dataset(a.train, "train.csv")
    test_ds = run.load_dataset(a.test, "test.csv")
    params = run.load_model(a.model)
    band = _band(run, a, train_ds) if a.mode == "adaptive" else None
    base = attack.PatchBudget(sigma_mw=a.sigma, iterations=a.iters, seed=run.seed_for("sweep"),
                              batch_size=a.batch_size)
    rows = attack.budget_sweep(train_ds, params, base, parse_eps(a.eps), a.mode, test_ds, band,
                               a.n_shifts, run.seed_for("evaluate"))
    run.csv(f"sweep_{a.mode}.csv", ("epsilon_mw", "class0", "class1"),
            [(r["epsilon_mw"], r["class0"], r["class1"]) for r in rows])
    star = attack.minimal_evading_epsilon(rows, a.threshold)
    print(f"{a.mode}: minimal evading eps = {star if star is not None else 'none in range'}")


def cmd_report(run):
    a = run.args
    test_ds = run.load_dataset(a.test, "test.csv")
    params = run.load_model(a.model)
    clean = det.accuracy(params, test_ds)
    rows = []
    for mode in MODES:
        path = run.out / f"patch_{mode}.json"
        if not path.exists():
            continue
        patch = attack.load_patch(path)
        if np.any(patch.delta < 0):
            patch = replace(patch, delta=np.maximum(patch.delta, 0.0))
        for tag in PLATFORMS:
            platform = circuit.PlatformModel.from_name(tag)
            shift = None
            rep = circuit.end_to_end(patch, platform, params, test_ds, shift)
            if mode == "unsync":
                acc = attack.evaluate_random_shifts(params, test_ds, rep.emulated.samples,
                                                    a.n_shifts, run.seed_for("evaluate"))
            else:
                acc = rep.accuracy
            rows.append((test_ds.name, mode, tag, clean["class1"], rep.resource_count, acc["class1"],
                         f"0-{patch.budget.epsilon_mw:g}", rep.mse_mw2))
    run.csv("report.csv", ("dataset", "patch", "platform", "clean_acc", "resources", "patched_acc",
                           "budget", "mse_mw2"), rows)
    from .plotting import render_svg
    rendered = 0
    for csv_path in sorted(run.out.glob("*.csv")):
        kind = _plot_kind(csv_path)
        if kind:
            render_svg(csv_path, kind)
            rendered += 1
    print(f"report: {len(rows)} row(s), {rendered} figure(s)")


def _plot_kind(csv_path):
    name = csv_path.name
    if name.startswith(("sweep_", "robustness")):
        return "curve"
    if name.endswith("histogram.csv"):
        return "histogram"
    if name.endswith("spectrum.csv"):
        return "spectrum"
    return None


def cmd_render(run):
    from .plotting import render_svg
    path = render_svg(run.args.csv, run.args.kind, run.args.svg)
    print(f"wrote {path}")


# -- argument parsing ------------------------------------------------------

def _data_flags(p, model=True):
    p.add_argument("--train", help="training split CSV (default OUT/train.csv)")
    p.add_argument("--test", help="held-out split CSV (default OUT/test.csv)")
    if model:
        p.add_argument("--model", help="detector file (default OUT/model.bin)")


def _budget_flags(p, eps=True):
    if eps:
        p.add_argument("--eps", type=float, default=3.0, help="noise budget in mW")
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--sigma", type=float, default=0.0, help="robustness noise in mW")
    p.add_argument("--batch-size", type=int, default=32)


def _band_flags(p):
    p.add_argument("--band", default="auto", help="'fmin:fmax' in MHz, or 'auto'")
    p.add_argument("--energy", type=float, default=0.99, help="energy fraction for --band auto")


def build_parser():
    parser = argparse.ArgumentParser(prog="hto", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=None, help="root seed (default: HTO_SEED or 0)")
    parser.add_argument("--out", default="hto-out", help="output directory")
    parser.add_argument("--config", help="JSON file with flag defaults")
    parser.add_argument("--sample-period", type=float, default=traces.DEFAULT_SAMPLE_PERIOD_US,
                        help="µs per sample of loaded CSVs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic trace set")
    p.add_argument("--d", type=int, default=1000)
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--base", type=float, default=10.0)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--bump", type=float, default=0.8)
    p.add_argument("--width", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--synth-seed", type=int, default=None, help="generator seed (default derived)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="split the data set and train the detector")
    p.add_argument("--data", help="labeled CSV (default OUT/dataset.csv)")
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=0.01)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("attack", help="generate and evaluate one adversarial patch")
    p.add_argument("--mode", choices=MODES, default="sync")
    _data_flags(p)
    _budget_flags(p)
    _band_flags(p)
    p.add_argument("--strategy", default="two_level", help="quantized mode subspace strategy")
    p.add_argument("--shift", choices=("sync", "unsync"), default="sync", help="quantized mode shift")
    p.add_argument("--n-shifts", type=int, default=200)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("quantize", help="quantize a patch onto a value subspace")
    _data_flags(p)
    p.add_argument("--patch", help="reference patch (default OUT/patch_sync.json)")
    p.add_argument("--strategy", default="two_level",
                   help="grid:RES | three_level | two_level | top_k:K:BIN")
    p.add_argument("--shift", choices=("sync", "unsync"), default="sync")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--n-shifts", type=int, default=200)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("emulate", help="map a patch onto circuit cells and emulate it")
    p.add_argument("--patch", help="patch file (default OUT/patch_sync.json)")
    p.add_argument("--platform", choices=PLATFORMS, default="asic")
    p.add_argument("--measurement-sigma", type=float, default=0.0)
    p.add_argument("--test")
    p.add_argument("--model")
    p.set_defaults(func=cmd_emulate)

    p = sub.add_parser("defend", help="countermeasures")
    dsub = p.add_subparsers(dest="defense", required=True)
    q = dsub.add_parser("filter", help="band-pass preprocessing in front of the detector")
    _data_flags(q)
    _band_flags(q)
    q.add_argument("--patch", help="patch to test against (default OUT/patch_sync.json if present)")
    q.set_defaults(func=cmd_defend_filter)
    q = dsub.add_parser("advtrain", help="PGD adversarial training and robustness curve")
    _data_flags(q)
    q.add_argument("--eps", type=float, default=0.5, help="train-time perturbation bound in mW")
    q.add_argument("--step", type=float, default=0.1)
    q.add_argument("--iters", dest="pgd_iters", type=int, default=20)
    q.add_argument("--epochs", type=int, default=30)
    q.add_argument("--batch-size", type=int, default=32)
    q.add_argument("--attack-eps", default="0.25,0.5,1,2,4", help="attack budgets for the curve")
    q.add_argument("--attack-iters", type=int, default=200)
    q.set_defaults(func=cmd_defend_advtrain)

    p = sub.add_parser("sweep", help="budget sweep: one patch per epsilon")
    p.add_argument("--mode", choices=("sync", "unsync", "adaptive"), default="sync")
    p.add_argument("--eps", default="0.5:5:0.5", help="a:b:step or comma list, mW")
    p.add_argument("--threshold", type=float, default=0.0, help="class-1 accuracy counted as evasion")
    p.add_argument("--n-shifts", type=int, default=200)
    _data_flags(p)
    _budget_flags(p, eps=False)
    _band_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="hardware table over existing patches, plus SVG figures")
    p.add_argument("--test")
    p.add_argument("--model")
    p.add_argument("--n-shifts", type=int, default=200)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("render", help="render one report CSV to SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--kind", choices=("curve", "histogram", "spectrum"), required=True)
    p.add_argument("--svg", help="output path (default: CSV path with .svg)")
    p.set_defaults(func=cmd_render)
    return parser


def _load_config(path):
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    return obj


def _apply_config(parser, argv, config):
    """Config values act as defaults; explicit flags still win."""
    top = {k: v for k, v in config.items() if not isinstance(v, dict)}
    known = {a.dest for a in parser._actions}
    unknown = set(top) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    parser.set_defaults(**top)
    sub_action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, section in config.items():
        if not isinstance(section, dict):
            continue
        if name not in sub_action.choices:
            raise ConfigError(f"unknown config section {name!r}")
        sp = sub_action.choices[name]
        sp_known = {a.dest for a in sp._actions}
        bad = set(section) - sp_known
        if bad:
            raise ConfigError(f"unknown key(s) in config section {name!r}: {', '.join(sorted(bad))}")
        sp.set_defaults(**section)
    return parser.parse_args(argv)


def _resolve_seed(args):
    if args.seed is not None:
        return int(args.seed)
    env = os.environ.get("HTO_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"HTO_SEED must be an integer, got {env!r}") from None
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            args = _apply_config(build_parser(), argv, _load_config(args.config))
        args.seed = _resolve_seed(args)
        args.command_key = args.command + (f"_{args.defense}" if args.command == "defend" else "")
        run = Run(args)
        args.func(run)
        if args.command != "render":
            run.finish()
    except HTOError as exc:
        print(f"hto: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"hto: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
