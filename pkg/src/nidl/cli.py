"""Command-line entry point: ``nidl <subcommand> [options]``.

Every option resolves in this order: command-line flag, environment variable
``NIDL_<OPTION>`` (upper case, dashes as underscores, e.g. ``NIDL_LOW_HZ``),
the ``--config`` file, then the built-in default. The config file holds
``key = value`` lines (``#`` starts a comment); keys are option names with
dashes or underscores, and keys a subcommand does not use are ignored so one
file can serve a whole pipeline. A key or variable can be scoped to one
subcommand (``magnify.mode = color``, ``NIDL_MAGNIFY_MODE``); the scoped form
wins over the plain one.

Each run writes a manifest next to its output: ``manifest.json`` inside an
output directory, or ``<file>.manifest.json`` beside an output file. It holds
the resolved configuration, seeds and SHA-256 hashes of inputs and outputs;
``nidl replay <manifest>`` re-runs it.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid data or
configuration, 4 numeric invariant breach.
"""

import argparse
import csv
import difflib
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from . import __version__
from .calibration import CalibParams
from .dataset import RoiSpec, load_dataset, load_datasets, make_dataset, save_dataset
from .errors import DataValidationError, NidlError, NumericInvariantError
from .evaluation import NIPST, absolute_errors, run_crossval, summarize
from .evm import EvmConfig, magnify
from .media import read_clip, read_temperature_log, write_clip, write_temperature_log
from .nipst import NipstConfig, evaluate_subject
from .regressor import PRESETS, TrainConfig, load_checkpoint, select_checkpoint, train
from .report import emit_from_json, emit_report, load_report
from .synth import SynthProfile, generate_synthetic_subject

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4
ENV_PREFIX = "NIDL_"
MANIFEST_NAME = "manifest.json"


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class Opt:
    name: str  # flag without dashes
    type: object = str
    default: object = None
    help: str = ""
    choices: tuple = None
    role: str = ""  # "in", "out" or "" (drives missing-input checks and manifests)

    @property
    def dest(self):
        return self.name.replace("-", "_")


def _calib_opts():
    d = CalibParams()
    return [
        Opt("calib-tau1", float, d.tau1, "tau1 divisor (test-prior branch)"),
        Opt("calib-tau2", float, d.tau2, "tau2 divisor (train-error branch)"),
        Opt("calib-n", int, d.n_prior, "number of leading test errors used as prior"),
        Opt("calib-eta", float, d.eta_c, "threshold on the prior test error mean (C)"),
        Opt("calib-eps", float, d.epsilon_c, "threshold on the training error mean (C)"),
    ]


def _train_opts():
    d = TrainConfig()
    return [
        Opt("preset", str, "desk", "network preset", tuple(PRESETS)),
        Opt("epochs", int, d.epochs),
        Opt("batch", int, d.batch_size),
        Opt("epsilon", float, d.save_epsilon_c, "checkpoint when verification MAE is below this (C)"),
        Opt("verify-every", int, d.verify_every_loops),
        Opt("save-every", int, d.save_every_loops),
        Opt("lr", float, d.learning_rate),
        Opt("optimizer", str, d.optimizer, choices=("adam", "sgd-momentum")),
        Opt("seed", int, d.rng_seed),
    ]


def _nipst_opts():
    d = NipstConfig()
    return [
        Opt("fit-frames", int, d.fit_frames, "frames used to refit the NIPST intercept"),
        Opt("mode", str, d.mode, "frames NIPST reads", ("magnified", "raw")),
    ]


_EVM = EvmConfig()
_SYN = SynthProfile()

COMMANDS = {
    "synth": ("generate synthetic subjects (clip + temperature log each)", [
        Opt("subjects", int, 2, "number of subjects"),
        Opt("seed", int, 0, "seed of the first subject; subject i uses seed + i"),
        Opt("duration", float, _SYN.duration_s, "seconds per subject"),
        Opt("fps", float, _SYN.fps),
        Opt("width", int, _SYN.width),
        Opt("height", int, _SYN.height),
        Opt("out", str, None, "output directory", role="out"),
    ]),
    "magnify": ("Eulerian magnification of one clip", [
        Opt("in", str, None, "input clip (raw-planar file or frame directory)", role="in"),
        Opt("out", str, None, "output raw-planar clip", role="out"),
        Opt("fps", float, 30.0, "frame rate for frame-directory input"),
        Opt("beta", float, _EVM.beta),
        Opt("low-hz", float, _EVM.low_hz),
        Opt("high-hz", float, _EVM.high_hz),
        Opt("levels", int, _EVM.pyramid_levels),
        Opt("filter", str, "ideal", choices=("ideal", "iir")),
        Opt("mode", str, _EVM.mode, choices=("color", "motion")),
        Opt("chroma", float, _EVM.chroma_attenuation, "chroma attenuation in [0, 1]"),
        Opt("padding", str, _EVM.temporal_padding, "temporal padding for the ideal filter",
            ("mirror", "none")),
    ]),
    "dataset": ("cut ROIs and label frames for one subject", [
        Opt("clip", str, None, "magnified clip", role="in"),
        Opt("log", str, None, "temperature log CSV", role="in"),
        Opt("raw-clip", str, "", "unmagnified clip (enables raw-mode NIPST)", role="in"),
        Opt("subject", str, "", "subject id; default is the clip's parent directory name"),
        Opt("roi", str, "", "x,y,side; default is a centred square of --side"),
        Opt("side", int, 150, "ROI side when --roi is not given"),
        Opt("fps", float, 30.0, "frame rate for frame-directory input"),
        Opt("out", str, None, "output subject directory", role="out"),
    ]),
    "train": ("train the regressor with one held-out subject", [
        Opt("data", str, None, "directory of subject datasets", role="in"),
        Opt("test-subject", str, None, "held-out subject id"),
        *_train_opts(),
        Opt("out", str, None, "output directory for checkpoints and the log", role="out"),
    ]),
    "predict": ("predict temperatures for one subject with a checkpoint", [
        Opt("checkpoint", str, None, "checkpoint file (.nidl) or a train output directory", role="in"),
        Opt("data", str, None, "subject dataset directory", role="in"),
        Opt("out", str, None, "output CSV", role="out"),
    ]),
    "baseline": ("fit and evaluate the saturation baseline per subject", [
        Opt("data", str, None, "directory of subject datasets", role="in"),
        *_nipst_opts(),
        Opt("out", str, None, "output directory", role="out"),
    ]),
    "evaluate": ("leave-one-subject-out evaluation of NIDL and the baseline", [
        Opt("data", str, None, "directory of subject datasets", role="in"),
        Opt("rounds", str, "all", "'all' or a comma-separated list of held-out subject ids"),
        *_train_opts(),
        *_calib_opts(),
        *_nipst_opts(),
        Opt("out", str, None, "report directory", role="out"),
    ]),
    "report": ("re-render tables and curves from a report.json", [
        Opt("in", str, None, "report.json or the directory holding it", role="in"),
        Opt("out", str, None, "output directory", role="out"),
    ]),
    "replay": ("re-run the command recorded in a manifest", [
        Opt("manifest", str, None, "manifest file", role="in"),
        Opt("out", str, "", "write to this path instead of the recorded output"),
    ]),
}


# parsing ----------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    parser = _Parser(prog="nidl", description="Skin temperature from magnified video.",
                     epilog="Exit codes: 1 runtime, 2 usage, 3 invalid data, 4 numeric invariant.")
    parser.add_argument("--version", action="version", version=f"nidl {__version__}")
    parser.add_argument("--config", default=None, help="key = value config file")
    parser.add_argument("--threads", type=int, default=None, help="cap on numeric worker threads")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    for name, (help_text, opts) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        for o in opts:
            default_txt = "" if o.default in (None, "") else f" (default: {o.default})"
            p.add_argument(f"--{o.name}", dest=o.dest, type=o.type, choices=o.choices,
                           default=None, help=(o.help + default_txt).strip())
    return parser


def read_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataValidationError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _convert(opt, raw, source):
    try:
        value = opt.type(raw)
    except (TypeError, ValueError):
        raise UsageError(f"{source}: invalid value {raw!r} for {opt.name}") from None
    if opt.choices and value not in opt.choices:
        raise UsageError(f"{source}: {opt.name} must be one of {', '.join(opt.choices)}")
    return value


def resolve(command, args, env=None, config=None):
    """Effective value of every option of ``command`` (flag > env > config > default)."""
    env = os.environ if env is None else env
    config = config or {}
    out = {}
    for o in COMMANDS[command][1]:
        flag = getattr(args, o.dest, None)
        env_keys = [f"{ENV_PREFIX}{command.upper()}_{o.dest.upper()}", ENV_PREFIX + o.dest.upper()]
        env_key = next((k for k in env_keys if k in env), None)
        conf_key = next((k for k in (f"{command}.{o.dest}", o.dest) if k in config), None)
        if flag is not None:
            out[o.dest] = flag
        elif env_key is not None:
            out[o.dest] = _convert(o, env[env_key], f"environment {env_key}")
        elif conf_key is not None:
            out[o.dest] = _convert(o, config[conf_key], f"config key {conf_key}")
        else:
            out[o.dest] = o.default
        if out[o.dest] is None:
            raise UsageError(f"{command}: --{o.name} is required")
    return out


def suggest(word):
    close = difflib.get_close_matches(word, list(COMMANDS), n=1)
    return f" (did you mean '{close[0]}'?)" if close else ""


def _first_positional(argv):
    skip = False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok in ("--config", "--threads"):
            skip = True
            continue
        if not tok.startswith("-"):
            return tok
    return None


# manifests ----------------------------------------------------------------------------


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_tree(path, exclude=(MANIFEST_NAME,)):
    """``{relative path: sha256}`` for a file or every file under a directory."""
    path = Path(path)
    if path.is_file():
        return {path.name: sha256_file(path)}
    return {
        p.relative_to(path).as_posix(): sha256_file(p)
        for p in sorted(path.rglob("*"))
        if p.is_file() and p.name not in exclude and not p.name.endswith(".tmp")
    }


def manifest_path(out):
    out = Path(out)
    return out / MANIFEST_NAME if out.is_dir() else out.with_name(out.name + ".manifest.json")


def write_manifest(command, config, seeds=None):
    out = Path(config["out"])
    inputs = {}
    for o in COMMANDS[command][1]:
        value = config[o.dest]
        if o.role == "in" and value:
            inputs[o.dest] = {"path": str(value), "sha256": hash_tree(value)}
    manifest = {
        "tool": "nidl",
        "version": __version__,
        "subcommand": command,
        "config": config,
        "seeds": seeds or {},
        "inputs": inputs,
        "outputs": hash_tree(out),
    }
    path = manifest_path(out)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_manifest(path):
    with open(path, encoding="utf-8") as fh:
        m = json.load(fh)
    if m.get("tool") != "nidl" or m.get("subcommand") not in COMMANDS:
        raise DataValidationError(f"{path}: not a nidl run manifest")
    return m


def manifest_argv(manifest, out=None):
    """Command line that reproduces a manifest's run."""
    command = manifest["subcommand"]
    config = dict(manifest["config"])
    if out:
        config["out"] = out
    argv = [command]
    for o in COMMANDS[command][1]:
        if o.dest in config and config[o.dest] is not None:
            argv += [f"--{o.name}", str(config[o.dest])]
    return argv


# commands ------------------------------------------------------------------------------


def _check_inputs(command, cfg):
    for o in COMMANDS[command][1]:
        if o.role == "in" and cfg[o.dest] and not Path(cfg[o.dest]).exists():
            raise DataValidationError(f"missing input: --{o.name} {cfg[o.dest]}")


def _train_config(cfg):
    return TrainConfig(
        batch_size=cfg["batch"], epochs=cfg["epochs"], save_epsilon_c=cfg["epsilon"],
        verify_every_loops=cfg["verify_every"], save_every_loops=cfg["save_every"],
        learning_rate=cfg["lr"], optimizer=cfg["optimizer"], rng_seed=cfg["seed"],
    )


def _spec(cfg, side):
    return PRESETS[cfg["preset"]](side)


def cmd_synth(cfg):
    profile = replace(SynthProfile(), duration_s=cfg["duration"], fps=cfg["fps"],
                      width=cfg["width"], height=cfg["height"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    seeds = {}
    for i in range(cfg["subjects"]):
        seed = cfg["seed"] + i
        sub = generate_synthetic_subject(seed, profile)
        d = out / sub.clip.subject_id
        d.mkdir(exist_ok=True)
        write_clip(sub.clip, d / "clip.rpc")
        write_temperature_log(sub.log, d / "log.csv")
        seeds[sub.clip.subject_id] = seed
    return seeds


def cmd_magnify(cfg):
    config = EvmConfig(beta=cfg["beta"], pyramid_levels=cfg["levels"], low_hz=cfg["low_hz"],
                       high_hz=cfg["high_hz"], filter_kind=cfg["filter"],
                       chroma_attenuation=cfg["chroma"], mode=cfg["mode"],
                       temporal_padding=cfg["padding"])
    src = Path(cfg["in"])
    clip = read_clip(src, fps=cfg["fps"], subject_id=_subject_from_path(src))
    Path(cfg["out"]).parent.mkdir(parents=True, exist_ok=True)
    write_clip(magnify(clip, config), cfg["out"])
    cfg["evm"] = asdict(config)


def _subject_from_path(path):
    path = Path(path)
    return path.parent.name if path.is_file() else path.name


def _evm_from_manifest(clip_path):
    m = manifest_path(Path(clip_path))
    if m.is_file():
        return read_manifest(m)["config"].get("evm")
    return None


def cmd_dataset(cfg):
    clip_path = Path(cfg["clip"])
    sid = cfg["subject"] or _subject_from_path(clip_path)
    clip = read_clip(clip_path, fps=cfg["fps"], subject_id=sid)
    series = read_temperature_log(cfg["log"])
    roi = RoiSpec.parse(cfg["roi"]) if cfg["roi"] else RoiSpec.centered(clip.height, clip.width, cfg["side"])
    raw = read_clip(cfg["raw_clip"], fps=cfg["fps"], subject_id=sid) if cfg["raw_clip"] else None
    ds = make_dataset(clip, series, roi, raw_clip=raw,
                      source_clip=clip_path.name, source_log=Path(cfg["log"]).name)
    evm = _evm_from_manifest(clip_path)
    if evm is not None:
        ds.provenance["evm"] = evm
    save_dataset(ds, cfg["out"])


def _find_subject(datasets, sid):
    for d in datasets:
        if d.subject_id == sid:
            return d
    raise DataValidationError(f"unknown subject {sid!r}; have {[d.subject_id for d in datasets]}")


def cmd_train(cfg):
    datasets = load_datasets(cfg["data"])
    test = _find_subject(datasets, cfg["test_subject"])
    train_sets = [d for d in datasets if d.subject_id != test.subject_id]
    if not train_sets:
        raise DataValidationError("training needs at least one subject besides the held-out one")
    tcfg = _train_config(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    result = train(train_sets, test, _spec(cfg, test.side), tcfg, out_dir=out)
    best = select_checkpoint(result.checkpoints)
    summary = {"best": f"ckpt_e{best.epoch:02d}_l{best.loop:06d}.nidl",
               "verify_mae": best.metrics["verify_mae"],
               "checkpoints": len(result.checkpoints), "loops_per_epoch": result.loops_per_epoch}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return {"train": tcfg.rng_seed}


def _resolve_checkpoint(path):
    path = Path(path)
    if path.is_dir():
        summary = path / "summary.json"
        if not summary.is_file():
            raise DataValidationError(f"{path} has no summary.json naming a best checkpoint")
        path = path / json.loads(summary.read_text())["best"]
    return load_checkpoint(path)


def cmd_predict(cfg):
    ckpt = _resolve_checkpoint(cfg["checkpoint"])
    ds = load_dataset(cfg["data"])
    model = ckpt.to_model()
    if ds.side != model.spec.input_side:
        raise DataValidationError(f"dataset ROI is {ds.side} px, model expects {model.spec.input_side}")
    pred = model.predict(ds.images)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "t_seconds", "truth", "predicted"])
        for i, t, truth, p in zip(ds.frame_index, ds.times, ds.temps, pred):
            w.writerow([int(i), repr(float(t)), repr(float(truth)), repr(float(p))])


def cmd_baseline(cfg):
    nipst_cfg = NipstConfig(fit_frames=cfg["fit_frames"], mode=cfg["mode"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for ds in load_datasets(cfg["data"]):
        model, pred = evaluate_subject(ds, nipst_cfg)
        rep = summarize(absolute_errors(pred, ds.temps), NIPST, ds.subject_id)
        summary[ds.subject_id] = {"intercept_b": model.intercept_b, "slope": model.slope,
                                  "mae": rep.mean, "median": rep.median}
        with open(out / f"{ds.subject_id}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frame_index", "t_seconds", "truth", "nipst"])
            for i, t, truth, p in zip(ds.frame_index, ds.times, ds.temps, pred):
                w.writerow([int(i), repr(float(t)), repr(float(truth)), repr(float(p))])
    (out / "baseline.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def cmd_evaluate(cfg):
    datasets = load_datasets(cfg["data"])
    rounds = None if cfg["rounds"] == "all" else [s.strip() for s in cfg["rounds"].split(",") if s.strip()]
    calib = CalibParams(tau1=cfg["calib_tau1"], tau2=cfg["calib_tau2"], n_prior=cfg["calib_n"],
                        eta_c=cfg["calib_eta"], epsilon_c=cfg["calib_eps"])
    nipst_cfg = NipstConfig(fit_frames=cfg["fit_frames"], mode=cfg["mode"])
    tcfg = _train_config(cfg)
    result = run_crossval(datasets, _spec(cfg, datasets[0].side), tcfg, calib, nipst_cfg, rounds=rounds)
    emit_report(result, cfg["out"])
    return {"train": tcfg.rng_seed}


def cmd_report(cfg):
    report = load_report(cfg["in"])
    emit_from_json(report, cfg["out"])


HANDLERS = {
    "synth": cmd_synth, "magnify": cmd_magnify, "dataset": cmd_dataset, "train": cmd_train,
    "predict": cmd_predict, "baseline": cmd_baseline, "evaluate": cmd_evaluate, "report": cmd_report,
}


def run_command(command, cfg):
    _check_inputs(command, cfg)
    cfg = dict(cfg)
    seeds = HANDLERS[command](cfg)
    return write_manifest(command, cfg, seeds)


def _threads_context(n):
    if n is None:
        import contextlib
        return contextlib.nullcontext()
    if n < 1:
        raise UsageError("--threads must be >= 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _dispatch(argv):
    parser = build_parser()
    first = _first_positional(argv)
    if first is not None and first not in COMMANDS:
        raise UsageError(f"nidl: unknown subcommand '{first}'{suggest(first)}")
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    config = read_config_file(args.config) if args.config else {}
    threads = args.threads
    if threads is None and ENV_PREFIX + "THREADS" in os.environ:
        threads = int(os.environ[ENV_PREFIX + "THREADS"])
    if threads is None and "threads" in config:
        threads = int(config["threads"])
    cfg = resolve(args.command, args, config=config)
    with _threads_context(threads):
        if args.command == "replay":
            manifest = read_manifest(cfg["manifest"])
            return _dispatch(manifest_argv(manifest, cfg["out"] or None))
        run_command(args.command, cfg)
    return EXIT_OK


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        return _dispatch(argv)
    except SystemExit as exc:  # --help / --version
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericInvariantError as exc:
        print(f"numeric invariant violated: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataValidationError as exc:
        print(f"invalid data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NidlError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
