"""Command line: gen, ingest, split, train, eval, rollout, profile, report.

Values come from built-in defaults, then an optional YAML ``--config`` file,
then explicit flags (highest precedence).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError, FlowBenchError, InputError

log = logging.getLogger("flowbench")

VERBS = ("gen", "ingest", "split", "train", "eval", "rollout", "profile", "report")
RECORDS = "records.json"


# ---------------------------------------------------------------------------
# argument parsing


def _common(p, *names):
    add = {
        "problem": lambda: p.add_argument("--problem", choices=("cavity", "tube", "dam", "cylinder")),
        "subsets": lambda: p.add_argument("--subsets", "--subset", dest="subsets",
                                          help="comma list of bc, prop, geo, or 'all'"),
        "out": lambda: p.add_argument("--out", required=True, help="output directory"),
        "data": lambda: p.add_argument("--data", help="directory of case containers"),
        "model": lambda: p.add_argument("--model", help="model kind, run directory, or 'identity'"),
        "seed": lambda: p.add_argument("--seed", type=int),
        "epochs": lambda: p.add_argument("--epochs", type=int),
        "lr": lambda: p.add_argument("--lr", type=float),
        "workers": lambda: p.add_argument("--workers", type=int),
        "steps": lambda: p.add_argument("--steps", type=int),
        "split": lambda: p.add_argument("--split", choices=("train", "val", "test")),
    }
    for n in names:
        add[n]()
    p.add_argument("--config", help="YAML file with solver/train/model sections and flag defaults")
    p.add_argument("--log-level", default=argparse.SUPPRESS, help="DEBUG, INFO, WARNING or ERROR")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flowbench", description=__doc__.splitlines()[0])
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="{" + ",".join(VERBS) + "}")

    p = sub.add_parser("gen", help="simulate cases with the in-house solver")
    _common(p, "problem", "subsets", "out", "workers")
    p.add_argument("--resolution", type=int, help="cells per side")
    p.add_argument("--frames", type=int, help="frames per case, including the initial one")
    p.add_argument("--limit", type=int, help="only the first N cases of each subset")

    p = sub.add_parser("ingest", help="bin external point data (.npz) into a case container")
    _common(p, "problem", "subsets", "out")
    p.add_argument("--input", required=True, help=".npz with frame_0000.. point arrays [N, 2+C] and a params entry")
    p.add_argument("--case-id", required=True)
    p.add_argument("--resolution", type=int)

    p = sub.add_parser("split", help="write a case-disjoint train/val/test split")
    _common(p, "data", "out", "seed")
    p.add_argument("--ratio", default=None, help="train,val,test weights (default 8,1,1)")

    p = sub.add_parser("train", help="train one model")
    _common(p, "data", "subsets", "out", "model", "seed", "epochs", "lr")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--k-queries", type=int)
    p.add_argument("--precision", choices=("float32", "float64"))
    p.add_argument("--max-batches", type=int)

    p = sub.add_parser("eval", help="single-step metrics for a trained run or the identity baseline")
    _common(p, "data", "subsets", "out", "model", "workers", "split")

    p = sub.add_parser("rollout", help="multi-step error curves from the initial frame")
    _common(p, "data", "subsets", "out", "model", "workers", "steps", "split")
    p.add_argument("--cases", type=int, help="number of cases to roll out")

    p = sub.add_parser("profile", help="parameter count, step time, memory and latency")
    _common(p, "data", "out", "model")
    p.add_argument("--iters", type=int)

    p = sub.add_parser("report", help="merge records into results.csv and plots")
    _common(p, "out")
    p.add_argument("--inputs", required=True, help="comma list of eval/rollout output directories")
    return parser


def load_config(path) -> dict:
    if not path:
        return {}
    try:
        cfg = yaml.safe_load(Path(path).read_text()) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    return cfg


def resolve(args, cfg, section, key, default=None):
    """Explicit flag, else config section value, else config top-level value, else default."""
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in cfg.get(section, {}) or {}:
        return cfg[section][key]
    return cfg.get(key, default)


def _subsets(spec, problem=None):
    from .flowgen import SUBSETS

    if not spec or spec == "all":
        return list(SUBSETS)
    out = [s.strip().lower() for s in str(spec).split(",") if s.strip()]
    if "all" in out:
        return list(SUBSETS)
    bad = [s for s in out if s not in SUBSETS]
    if bad:
        raise ConfigurationError(f"unknown subsets {bad}; choose from {SUBSETS} or 'all'")
    return out


def _require(value, flag):
    if value is None:
        raise ConfigurationError(f"{flag} is required (as a flag or in the config file)")
    return value


# ---------------------------------------------------------------------------
# verbs


def _solve_and_write(job):
    from .datakit import write_container
    from .flowgen import solve_case

    params, cfg, subset, cid, out = job
    rec = solve_case(params, cfg, subset, cid)
    write_container(rec, Path(out) / cid)
    return cid


def cmd_gen(args, cfg):
    from .flowgen import SolverConfig, case_id, enumerate_cases
    from .flowgen.solver import SUPPORTED
    from .errors import CapabilityError

    problem = _require(resolve(args, cfg, "gen", "problem"), "--problem")
    if problem not in SUPPORTED:
        raise CapabilityError(f"{problem} cases are not generated in-house (two-phase flow); "
                              f"convert external results with `flowbench ingest`")
    solver = dict(cfg.get("solver", {}) or {})
    res = resolve(args, cfg, "gen", "resolution")
    if res is not None:
        solver["resolution"] = (int(res), int(res))
    frames = resolve(args, cfg, "gen", "frames")
    if frames is not None:
        solver["n_frames"] = int(frames)
    try:
        scfg = SolverConfig(**solver)
    except TypeError as exc:
        raise ConfigurationError(f"bad solver settings: {exc}") from exc
    limit = resolve(args, cfg, "gen", "limit")
    jobs = []
    for subset in _subsets(resolve(args, cfg, "gen", "subsets"), problem):
        cases = enumerate_cases(problem, subset)
        cases = cases[:limit] if limit else cases
        jobs += [(p, scfg, subset, case_id(subset, i), args.out) for i, p in enumerate(cases)]
    Path(args.out).mkdir(parents=True, exist_ok=True)
    workers = int(resolve(args, cfg, "gen", "workers", 1))
    log.info("generating %d %s cases into %s with %d worker(s)", len(jobs), problem, args.out, workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cid in pool.map(_solve_and_write, jobs):
                log.info("wrote %s", cid)
    else:
        for job in jobs:
            log.info("wrote %s", _solve_and_write(job))
    return 0


def cmd_ingest(args, cfg):
    from .datakit import ingest_points, write_container
    from .flowgen import OperatingParams

    try:
        data = np.load(args.input, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {args.input}: {exc}") from exc
    if "params" not in data:
        raise InputError(f"{args.input} lacks a 'params' entry (JSON string of operating parameters)")
    params = OperatingParams.from_dict(json.loads(str(data["params"])))
    keys = sorted(k for k in data.files if k.startswith("frame_"))
    if not keys:
        raise InputError(f"{args.input} has no frame_XXXX arrays")
    res = int(resolve(args, cfg, "ingest", "resolution", 64))
    subset = _subsets(_require(resolve(args, cfg, "ingest", "subsets"), "--subset"))
    if len(subset) != 1:
        raise ConfigurationError("ingest takes exactly one subset")
    rec = ingest_points([data[k] for k in keys], params, subset[0], args.case_id, resolution=(res, res))
    path = write_container(rec, Path(args.out) / args.case_id)
    log.info("ingested %d frames into %s", len(keys), path)
    return 0


def cmd_split(args, cfg):
    from .datakit import SPLIT_FILE, list_cases, read_meta, split_by_group

    data = _require(resolve(args, cfg, "split", "data"), "--data")
    ratio = resolve(args, cfg, "split", "ratio", "8,1,1")
    ratio = tuple(int(r) for r in (ratio.split(",") if isinstance(ratio, str) else ratio))
    groups = {}
    for d in list_cases(data):
        meta = read_meta(d)
        groups.setdefault(meta.subset, []).append(meta.case_id)
    split = split_by_group(groups, ratio, int(resolve(args, cfg, "split", "seed", 0)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / SPLIT_FILE).write_text(json.dumps(split.to_json(), indent=1))
    log.info("split %d cases: %d train / %d val / %d test", len(split.all()), len(split.train), len(split.val),
             len(split.test))
    return 0


def _load_dataset(data, subsets):
    from .datakit import FlowDataset

    return FlowDataset.load(_require(data, "--data"), subsets=subsets)


def cmd_train(args, cfg):
    from .operators import KINDS, ModelSpec, build_model
    from .trainer import TrainConfig, train

    kind = _require(resolve(args, cfg, "train", "model"), "--model")
    if kind not in KINDS:
        raise ConfigurationError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    subsets = resolve(args, cfg, "train", "subsets")
    subsets = _subsets(subsets) if subsets else None
    ds = _load_dataset(resolve(args, cfg, "train", "data"), subsets)
    keys = ("lr", "epochs", "batch_size", "k_queries", "seed", "precision", "max_batches")
    train_cfg = dict(cfg.get("train", {}) or {})
    for k in keys:
        flag = getattr(args, k, None)
        if flag is not None:
            train_cfg[k] = flag
    train_cfg.pop("model", None)
    try:
        tc = TrainConfig(**{k: v for k, v in train_cfg.items() if k in TrainConfig.__dataclass_fields__})
    except TypeError as exc:
        raise ConfigurationError(f"bad train settings: {exc}") from exc
    spec = ModelSpec(kind, omega_dim=ds.omega_dim, out_dim=2, grid=ds.grid_shape,
                     hyper=dict(cfg.get("model", {}) or {}), field_scale=ds.field_scale())
    model = build_model(spec, seed=tc.seed, dtype=np.dtype(tc.precision))
    out = Path(args.out)
    log.info("training %s (%d parameters) on %d train cases", kind, model.count_params(), len(ds.ids("train")))
    model, state = train(model, ds, tc, run_dir=out)
    meta = json.loads((out / "config.json").read_text())
    meta.update(data=str(Path(resolve(args, cfg, "train", "data")).resolve()), subsets=subsets,
                best_epoch=state.best_epoch, best_val_nmse=state.best_val, seconds=state.seconds)
    (out / "config.json").write_text(json.dumps(meta, indent=1))
    log.info("best epoch %s, val NMSE %.4e", state.best_epoch, state.best_val)
    return 0


def _load_run(model_arg):
    """(model or None for identity, run config or {})."""
    from .operators import load_checkpoint

    if model_arg in (None, "identity"):
        return None, {}
    run = Path(model_arg)
    ck = run / "checkpoint" if (run / "checkpoint").exists() else run
    if not (ck / "spec.json").exists():
        raise ConfigurationError(f"{model_arg} is neither 'identity' nor a run/checkpoint directory")
    cfg_path = run / "config.json"
    run_cfg = json.loads(cfg_path.read_text()) if cfg_path.exists() else {}
    return load_checkpoint(ck), run_cfg


def _write_records(out, records):
    from .bench import emit_report

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / RECORDS).write_text(json.dumps(records, indent=1))
    emit_report(records, out)


def cmd_eval(args, cfg):
    from .bench import eval_identity, evaluate

    model, run_cfg = _load_run(resolve(args, cfg, "eval", "model"))
    subsets = resolve(args, cfg, "eval", "subsets") or run_cfg.get("subsets")
    ds = _load_dataset(resolve(args, cfg, "eval", "data") or run_cfg.get("data"), _subsets(subsets) if subsets
                       else None)
    split = resolve(args, cfg, "eval", "split", "test")
    workers = int(resolve(args, cfg, "eval", "workers", 1))
    rep = eval_identity(ds, split) if model is None else evaluate(model, ds, split, workers=workers)
    log.info("%s on %s/%s: %s", rep.model, rep.problem, split, {k: f"{v:.4e}" for k, v in rep.metrics.items()})
    _write_records(args.out, rep.records())
    return 0


def cmd_rollout(args, cfg):
    from .bench import IdentityStepper, mean_curve, rollout_many

    model, run_cfg = _load_run(resolve(args, cfg, "rollout", "model"))
    subsets = resolve(args, cfg, "rollout", "subsets") or run_cfg.get("subsets")
    ds = _load_dataset(resolve(args, cfg, "rollout", "data") or run_cfg.get("data"), _subsets(subsets) if subsets
                       else None)
    if model is None:
        model = IdentityStepper(ds.omega_dim, ds.grid_shape)
    split = resolve(args, cfg, "rollout", "split", "test")
    ids = ds.ids(split)
    n_cases = resolve(args, cfg, "rollout", "cases")
    ids = ids[:n_cases] if n_cases else ids
    steps = resolve(args, cfg, "rollout", "steps")
    curves = rollout_many(model, ds, ids, steps, workers=int(resolve(args, cfg, "rollout", "workers", 1)))
    curve = mean_curve(curves, name=model.kind)
    log.info("%s rollout over %d cases: final-step NMSE %.4e", model.kind, len(ids), curve.metrics["NMSE"][-1])
    _write_records(args.out, curve.records(split))
    return 0


def cmd_profile(args, cfg):
    from .bench import profile
    from .operators import KINDS, ModelSpec, build_model

    ds = _load_dataset(resolve(args, cfg, "profile", "data"), None)
    arg = _require(resolve(args, cfg, "profile", "model"), "--model")
    if arg in KINDS:
        hyper = dict(cfg.get("model", {}) or {})
        model = build_model(ModelSpec(arg, ds.omega_dim, grid=ds.grid_shape, hyper=hyper))
    else:
        model, _ = _load_run(arg)
    cid = ds.ids("train")[0] if ds.ids("train") else ds.split.all()[0]
    prof = profile(model, ds.frames(cid)[-1], ds.mask(cid), ds.omega(cid), n_train_examples=len(ds.pair_index(
        "train")), iters=int(resolve(args, cfg, "profile", "iters", 20)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "profile.json").write_text(json.dumps(prof.to_dict(), indent=1))
    log.info("%s", prof)
    return 0


def cmd_report(args, cfg):
    from .bench import emit_report

    records = []
    for d in str(args.inputs).split(","):
        path = Path(d.strip()) / RECORDS
        if not path.exists():
            raise InputError(f"{path} not found")
        records += json.loads(path.read_text())
    out = emit_report(records, args.out)
    log.info("wrote %s and %d plot(s)", out["csv"], len(out["plots"]))
    return 0


COMMANDS = dict(gen=cmd_gen, ingest=cmd_ingest, split=cmd_split, train=cmd_train, eval=cmd_eval,
                rollout=cmd_rollout, profile=cmd_profile, report=cmd_report)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.verb](args, cfg)
    except (FlowBenchError, OSError) as exc:
        print(f"flowbench {args.verb}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
