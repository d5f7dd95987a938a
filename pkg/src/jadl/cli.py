"""Command-line front end.

Subcommands::

    jadl generate --config synth.json --seed 3 --out data/
    jadl learn    --data data/ --method jadl --k 3 --lambda 0.001 --out model/
    jadl encode   --model model/ --data data/ --out codes/
    jadl denoise  --model model/ --data data/ --out denoised/
    jadl evaluate --model model/ --truth data/ --out report/
    jadl sweep    --config sweep.json --out sweep/

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import benchmark, io
from .core import Dictionary, ShiftSet, reconstruct_all
from .learn import NumericalError
from .metrics import code_stats, denoise_error, similarity
from .pca import PcaModel, pca_denoise
from .synth import SynthConfig, generate

logger = logging.getLogger("jadl")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
REPORT_SCHEMA_VERSION = 1

LEARN_DEFAULTS = {
    "method": "jadl",
    "k": 3,
    "lambda": 0.001,
    "max_shift_seconds": 0.6,
    "shift_stride": 1,
    "shift_mode": "circular",
    "max_iters": 200,
    "tol": 1e-6,
    "seed": 0,
    "centered": False,
    "normalize_epochs": False,
    "sample_rate": 128.0,
}
SWEEP_DEFAULTS = {
    "seeds": [0, 1, 2, 3, 4],
    "methods": list(benchmark.METHODS),
    "ks": list(benchmark.TABLE2_K),
    "similarity_grid": list(benchmark.SIMILARITY_GRID),
    "error_grid": list(benchmark.ERROR_GRID),
}


class ConfigError(ValueError):
    """Bad command-line flag or configuration file."""


# -- configuration ---------------------------------------------------------


def load_config(path):
    """Parse a JSON configuration file; ``{}`` when ``path`` is None."""
    if path is None:
        return {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    unknown = set(cfg) - {"synth", "learn", "sweep"}
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")
    return cfg


def _section(cfg, name, defaults):
    sec = cfg.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be an object")
    unknown = set(sec) - set(defaults)
    if unknown:
        raise ConfigError(f"config section {name!r}: unknown fields {sorted(unknown)}")
    out = dict(defaults)
    out.update(sec)
    return out


def synth_config(cfg, seed=None) -> SynthConfig:
    sec = dict(cfg.get("synth", {}))
    if seed is not None:
        sec["seed"] = seed
    try:
        return SynthConfig.from_dict(sec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config section 'synth': {exc}") from None


def learn_settings(cfg, args):
    """Merge defaults, the ``learn`` config section and command-line flags."""
    s = _section(cfg, "learn", LEARN_DEFAULTS)
    flags = {
        "method": args.method,
        "k": args.k,
        "lambda": args.lam,
        "max_shift_seconds": args.max_shift_seconds,
        "shift_stride": args.shift_stride,
        "shift_mode": args.shift_mode,
        "seed": args.seed,
        "max_iters": getattr(args, "max_iters", None),
    }
    s.update({k: v for k, v in flags.items() if v is not None})
    if getattr(args, "normalize_epochs", False):
        s["normalize_epochs"] = True
    if s["method"] not in benchmark.METHODS:
        raise ConfigError(f"method must be one of {benchmark.METHODS}, got {s['method']!r}")
    for key in ("k", "shift_stride", "max_iters"):
        if not isinstance(s[key], int) or s[key] < 1:
            raise ConfigError(f"{key} must be a positive integer, got {s[key]!r}")
    for key in ("lambda", "max_shift_seconds"):
        if not isinstance(s[key], (int, float)) or s[key] < 0:
            raise ConfigError(f"{key} must be a non-negative number, got {s[key]!r}")
    if s["shift_mode"] not in ("circular", "extended"):
        raise ConfigError(f"shift_mode must be circular or extended, got {s['shift_mode']!r}")
    return s


def shift_set(settings, sample_rate, n_samples=None) -> ShiftSet:
    try:
        sh = ShiftSet.from_seconds(
            settings["max_shift_seconds"], sample_rate, settings["shift_stride"],
            settings["shift_mode"],
        )
        if n_samples is not None:
            sh.check_signal_length(n_samples)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return sh


def n_threads():
    raw = os.environ.get("JADL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"JADL_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"JADL_THREADS must be a positive integer, got {raw!r}")
    return n


# -- data and model files --------------------------------------------------


def read_signals(path):
    """Signals from a CSV file or a directory holding ``signals.csv``."""
    path = Path(path)
    if path.is_dir():
        path = path / "signals.csv"
    X, meta = io.read_matrix(path)
    if X.size == 0:
        raise io.DataError(f"{path}: no signals")
    return X, meta


def _sample_rate(meta, default):
    try:
        return float(meta.get("sample_rate", default))
    except ValueError:
        raise io.DataError(f"bad sample_rate {meta['sample_rate']!r} in data header") from None


def load_model(directory):
    directory = Path(directory)
    info = io.read_json(directory / "model.json")
    try:
        method, K = info["method"], int(info["k"])
        sh = ShiftSet(tuple(info["shifts"]), info["shift_mode"], int(info["shift_stride"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise io.DataError(f"{directory}/model.json: {exc}") from None
    atoms, _ = io.read_matrix(directory / "dictionary.csv")
    model = benchmark.FittedModel(method, K, float(info["lambda"]), sh)
    if method == "pca":
        mean, _ = io.read_matrix(directory / "mean.csv")
        model.pca = PcaModel(atoms, mean[0], np.asarray(info.get("explained_variance", [])),
                             bool(info.get("centered", False)))
    else:
        try:
            model.dictionary = Dictionary(atoms, mode=sh.mode)
        except ValueError as exc:
            raise io.DataError(f"{directory}/dictionary.csv: {exc}") from None
    model.scale = float(info.get("input_scale", 1.0))
    return model, info


def _check_length(model, X):
    N = model.pca.components.shape[1] if model.method == "pca" else \
        model.dictionary.signal_length(model.shifts)
    if X.shape[1] != N:
        raise io.DataError(f"signals have {X.shape[1]} samples, model expects {N}")


# -- subcommands -----------------------------------------------------------


def cmd_generate(args):
    cfg = load_config(args.config)
    sc = synth_config(cfg, args.seed)
    truth = generate(sc)
    out = Path(args.out)
    fs = sc.sample_rate
    io.write_matrix(out / "signals.csv", truth.noisy, sample_rate=fs)
    io.write_matrix(out / "clean.csv", truth.clean, sample_rate=fs)
    io.write_matrix(out / "events.csv", truth.events, sample_rate=fs)
    io.write_matrix(out / "truth_dictionary.csv", truth.dictionary.atoms, sample_rate=fs)
    io.write_matrix(out / "truth_coefs.csv", truth.coefs)
    io.write_matrix(out / "truth_shifts.csv", truth.shifts)
    files = ["signals.csv", "clean.csv", "events.csv", "truth_dictionary.csv",
             "truth_coefs.csv", "truth_shifts.csv"]
    io.write_manifest(out, files, config={"synth": sc.to_dict()}, seeds=[sc.seed],
                      noise_scale=truth.noise_scale)
    logger.info("wrote %d signals of %d samples to %s", *truth.noisy.shape, out)
    return EXIT_OK


def cmd_learn(args):
    cfg = load_config(args.config)
    s = learn_settings(cfg, args)
    jobs = n_threads()
    X, meta = read_signals(args.data)
    fs = _sample_rate(meta, s["sample_rate"])
    sh = shift_set(s, fs, X.shape[1])
    scale = 1.0
    if s["normalize_epochs"]:
        peak = float(np.max(np.linalg.norm(X, axis=1)))
        if peak == 0:
            raise io.DataError("all epochs are zero")
        scale = 1.0 / peak
        X = X * scale
    model = benchmark.fit(s["method"], X, s["k"], s["lambda"], sh, seed=s["seed"],
                          max_iters=s["max_iters"], tol=s["tol"], centered=s["centered"],
                          n_jobs=jobs)
    out = Path(args.out)
    info = {
        "format_version": io.FORMAT_VERSION,
        "method": model.method,
        "k": s["k"],
        "lambda": s["lambda"],
        "seed": s["seed"],
        "shift_mode": model.shifts.mode,
        "shift_stride": model.shifts.stride,
        "shifts": list(model.shifts.shifts),
        "sample_rate": fs,
        "input_scale": scale,
    }
    files = ["dictionary.csv", "model.json"]
    if model.method == "pca":
        io.write_matrix(out / "dictionary.csv", model.atoms(), sample_rate=fs)
        io.write_matrix(out / "mean.csv", model.pca.mean)
        files.append("mean.csv")
        info["centered"] = model.pca.centered
        info["explained_variance"] = model.pca.explained_variance[: s["k"]].tolist()
    else:
        res = model.result
        io.write_matrix(out / "dictionary.csv", res.dictionary.atoms, sample_rate=fs,
                        mode=model.shifts.mode)
        io.write_codes(out / "codes.txt", res.codes)
        hist = np.column_stack([np.arange(1, len(res.objective_history) + 1),
                                res.objective_history])
        io.write_matrix(out / "objective.csv", hist, columns="iteration,objective")
        files += ["codes.txt", "objective.csv"]
        info.update(iterations=res.iterations_run, converged=res.converged,
                    reinitialized=[list(p) for p in res.reinitialized])
        # wall time lives apart so the other outputs stay byte-reproducible
        io.write_json(out / "timing.json", {"wall_time_s": res.wall_time})
    io.write_json(out / "model.json", info)
    io.write_manifest(out, files, config={"learn": s}, seeds=[s["seed"]])
    logger.info("learned %s model with K=%d in %s", model.method, s["k"], out)
    return EXIT_OK


def _model_and_data(args):
    model, info = load_model(args.model)
    X, _ = read_signals(args.data)
    X = X * model.scale
    _check_length(model, X)
    lam = model.lam if args.lam is None else args.lam
    if lam < 0:
        raise ConfigError("lambda must be non-negative")
    return model, info, X, lam


def cmd_encode(args):
    model, _, X, lam = _model_and_data(args)
    out = Path(args.out)
    if model.method == "pca":
        V = model.pca.components[: model.n_atoms]
        io.write_matrix(out / "coefs.csv", (X - model.pca.mean) @ V.T)
        name = "coefs.csv"
    else:
        codes = benchmark.encode_model(model, X, lam, n_jobs=n_threads())
        io.write_codes(out / "codes.txt", codes, **{"lambda": lam})
        name = "codes.txt"
    io.write_manifest(out, [name], config={"lambda": lam, "model": str(args.model)})
    return EXIT_OK


def cmd_denoise(args):
    model, info, X, lam = _model_and_data(args)
    Y = benchmark.denoise(model, X, lam, n_jobs=n_threads()) / model.scale
    out = Path(args.out)
    io.write_matrix(out / "denoised.csv", Y, sample_rate=info.get("sample_rate", ""))
    io.write_manifest(out, ["denoised.csv"], config={"lambda": lam, "model": str(args.model)})
    return EXIT_OK


def cmd_evaluate(args):
    model, info = load_model(args.model)
    lam = model.lam if args.lam is None else args.lam
    report = {"schema_version": REPORT_SCHEMA_VERSION, "method": model.method,
              "k": model.n_atoms, "lambda": lam, "notices": []}
    out = Path(args.out)
    tables = []
    truth = Path(args.truth) if args.truth else None
    data = Path(args.data) if args.data else truth
    if truth is not None and (truth / "truth_dictionary.csv").exists():
        T, tmeta = io.read_matrix(truth / "truth_dictionary.csv")
        fs = _sample_rate(tmeta, info.get("sample_rate", 128.0))
        sim = similarity(model.atoms(), T, args.similarity_max_shift, fs)
        report["similarity"] = {
            "rho": sim.rho.tolist(),
            "sign": sim.sign.tolist(),
            "best_shift": sim.best_shift.tolist(),
            "assignment": [list(p) for p in sim.assignment],
            "rho_bar": sim.rho_bar,
        }
        partner = dict(sim.assignment)
        rows = [[i, partner.get(i, -1), sim.rho[i], sim.sign[i], sim.best_shift[i]]
                for i in range(T.shape[0])]
        tables.append(("similarity.csv", np.array(rows, dtype=float),
                       "true_atom,recovered_atom,rho,sign,best_shift"))
    else:
        report["notices"].append("no truth dictionary given; similarity section omitted")
    if data is not None:
        X, _ = read_signals(data)
        X = X * model.scale
        _check_length(model, X)
        Y = benchmark.denoise(model, X, lam, n_jobs=n_threads()) / model.scale
        if truth is not None and (truth / "clean.csv").exists():
            C, _ = io.read_matrix(truth / "clean.csv")
            if C.shape != Y.shape:
                raise io.DataError(f"clean signals {C.shape} do not match data {Y.shape}")
            report["epsilon"] = denoise_error(Y, C)
        else:
            report["notices"].append("no clean signals given; epsilon omitted")
        if model.method != "pca":
            codes = benchmark.encode_model(model, X, lam, n_jobs=n_threads())
            st = code_stats(codes, model.n_atoms)
            # coefficients are in the scaled units the model was fit in
            report["energy"] = st.energy.tolist()
            report["usage"] = st.usage.tolist()
            # per atom: [shift, count] pairs for the shifts actually used
            report["latency"] = [[[n, c] for n, c in st.histogram(i).items()]
                                 for i in range(model.n_atoms)]
            tables.append(("energy.csv", np.column_stack([np.arange(model.n_atoms), st.energy,
                                                          st.usage]), "atom,energy,usage"))
            lat = np.array([[n] + [st.latency[i].get(n, 0) for i in range(model.n_atoms)]
                            for n in model.shifts.shifts], dtype=float)
            tables.append(("latency.csv", lat,
                           "shift," + ",".join(f"atom{i}" for i in range(model.n_atoms))))
    for name, table, columns in tables:
        io.write_matrix(out / name, table, columns=columns)
    io.write_json(out / "report.json", report)
    for note in report["notices"]:
        logger.warning(note)
    return EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config)
    sw = _section(cfg, "sweep", SWEEP_DEFAULTS)
    if args.seed is not None:
        sw["seeds"] = [args.seed]
    if args.method is not None:
        sw["methods"] = [args.method]
    if args.k is not None:
        sw["ks"] = [args.k]
    bad = set(sw["methods"]) - set(benchmark.METHODS)
    if bad:
        raise ConfigError(f"unknown methods {sorted(bad)}")
    if not sw["seeds"] or not sw["ks"] or any((not isinstance(k, int)) or k < 1 for k in sw["ks"]):
        raise ConfigError("sweep needs at least one seed and positive integer K values")
    s = learn_settings(cfg, args)
    base = synth_config(cfg)
    truths = [generate(SynthConfig.from_dict({**base.to_dict(), "seed": seed}))
              for seed in sw["seeds"]]
    sh = shift_set(s, base.sample_rate, base.n_samples)
    cache = benchmark.ScoreCache(truths, sh, max_iters=s["max_iters"], n_jobs=n_threads())
    result = {"schema_version": REPORT_SCHEMA_VERSION, "seeds": sw["seeds"], "ks": sw["ks"],
              "rho_bar": {}, "epsilon": {}}
    rows1, rows2 = [], []
    for m in sw["methods"]:
        t1 = benchmark.tuned_table(cache, m, sw["ks"], sw["similarity_grid"], "rho_bar")
        t2 = benchmark.tuned_table(cache, m, sw["ks"], sw["error_grid"], "epsilon")
        result["rho_bar"][m] = {str(k): {"mean": v, "lambda": lam} for k, (v, lam) in t1.items()}
        result["epsilon"][m] = {str(k): {"mean": v, "lambda": lam} for k, (v, lam) in t2.items()}
        rows1.append([t1[k][0] for k in sw["ks"]])
        rows1.append([t1[k][1] for k in sw["ks"]])
        rows2.append([t2[k][0] for k in sw["ks"]])
        rows2.append([t2[k][1] for k in sw["ks"]])
    labels = ",".join(f"{m}_{q}" for m in sw["methods"] for q in ("value", "lambda"))
    out = Path(args.out)
    ks = ",".join(f"K{k}" for k in sw["ks"])
    io.write_matrix(out / "table_similarity.csv", rows1, rows_are=labels, columns=ks)
    io.write_matrix(out / "table_error.csv", rows2, rows_are=labels, columns=ks)
    io.write_json(out / "sweep.json", result)
    return EXIT_OK


# -- argument parsing ------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="jadl", description="Jitter-adaptive dictionary learning.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, learn_flags=False):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--out", required=True, help="output directory")
        if learn_flags:
            sp.add_argument("--seed", type=int)
            sp.add_argument("--method", choices=benchmark.METHODS)
            sp.add_argument("--k", type=int, help="number of atoms")
            sp.add_argument("--lambda", dest="lam", type=float, help="l1 penalty")
            sp.add_argument("--max-shift-seconds", type=float)
            sp.add_argument("--shift-stride", type=int)
            sp.add_argument("--shift-mode", choices=("circular", "extended"))
            sp.add_argument("--max-iters", type=int)

    g = sub.add_parser("generate", help="draw a synthetic benchmark dataset")
    common(g)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    lp = sub.add_parser("learn", help="fit a jadl, dl or pca model")
    common(lp, learn_flags=True)
    lp.add_argument("--data", required=True, help="signals CSV or dataset directory")
    lp.add_argument("--normalize-epochs", action="store_true",
                    help="scale epochs so the largest l2 norm is 1")
    lp.set_defaults(func=cmd_learn)

    for name, func, text in (("encode", cmd_encode, "sparse codes over a learned model"),
                             ("denoise", cmd_denoise, "reconstruct signals from their codes")):
        sp = sub.add_parser(name, help=text)
        sp.add_argument("--model", required=True)
        sp.add_argument("--data", required=True)
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--out", required=True)
        sp.set_defaults(func=func)

    ev = sub.add_parser("evaluate", help="score a model against ground truth")
    ev.add_argument("--model", required=True)
    ev.add_argument("--truth", help="dataset directory with truth files")
    ev.add_argument("--data", help="signals to denoise (default: the truth directory)")
    ev.add_argument("--lambda", dest="lam", type=float)
    ev.add_argument("--similarity-max-shift", type=float, default=0.6,
                    help="shift search range for similarity, seconds")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)

    sw = sub.add_parser("sweep", help="seed-averaged tables over K with tuned lambda")
    common(sw, learn_flags=True)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except io.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
