"""Desk-scale cavity benchmark: trained operators vs the identity baseline.

Generates (or reuses) a cavity set sweeping density at the lowest viscosity,
trains a U-Net and a second autoregressive model, then writes single-step
metrics, 20-step rollout curves, results.csv and plots under --out.

    python3 scripts/desk_benchmark.py --data runs/desk_data --out runs/desk
"""
from __future__ import annotations

import argparse
import json
import logging
import time
from pathlib import Path

from flowbench.bench import IdentityStepper, emit_report, eval_identity, evaluate, mean_curve, rollout_many
from flowbench.datakit import FlowDataset, list_cases, write_container
from flowbench.flowgen import SolverConfig, baseline, case_id, solve_case
from flowbench.operators import ModelSpec, build_model
from flowbench.trainer import TrainConfig, train

log = logging.getLogger("desk_benchmark")

# (kind, hyperparameters, base lr or None for the tuned default)
UNET = ("UNet", {}, None)
# second model kept small so the whole run stays inside an hour on one core
SECOND = ("ResNet", dict(hidden=16, depth=4), None)
UNET_EPOCHS = 100
SECOND_EPOCHS = 30
# small batches give 4x the optimizer steps of the default at the same cost per epoch
BATCH_SIZE = 8


def generate(root, n_cases=10, resolution=64, n_frames=21):
    """Cavity cases at mu = 1e-5 with rho = 1..n_cases; existing containers are reused."""
    root = Path(root)
    have = {p.name for p in list_cases(root)} if root.exists() else set()
    cfg = SolverConfig(resolution=(resolution, resolution), n_frames=n_frames)
    base = baseline("cavity")
    for i in range(n_cases):
        cid = case_id("prop", i)
        if cid in have:
            continue
        t0 = time.perf_counter()
        rec = solve_case(base.replace(rho=float(i + 1)), cfg, "prop", cid)
        write_container(rec, root / cid)
        log.info("generated %s in %.1fs", cid, time.perf_counter() - t0)
    return root


def run_benchmark(data, out, epochs=UNET_EPOCHS, seed=0, n_cases=10, resolution=64, n_frames=21, rollout_steps=20,
                  second=SECOND, second_epochs=SECOND_EPOCHS, batch_size=BATCH_SIZE):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    generate(data, n_cases, resolution, n_frames)
    ds = FlowDataset.load(data, seed=seed)
    log.info("split: %d train / %d val / %d test", len(ds.ids("train")), len(ds.ids("val")), len(ds.ids("test")))

    records = []
    summary = {"split": ds.split.to_json(), "models": {}}
    ident = eval_identity(ds, "test")
    records += ident.records()
    summary["identity_nmse"] = ident.metrics["NMSE"]

    stepper = IdentityStepper(ds.omega_dim, ds.grid_shape)
    ident_curve = mean_curve(rollout_many(stepper, ds, ds.ids("test"), rollout_steps), name="identity")
    records += ident_curve.records("test")

    for (kind, hyper, lr), n_epochs in ((UNET, epochs), (second, second_epochs or epochs)):
        spec = ModelSpec(kind, ds.omega_dim, grid=ds.grid_shape, hyper=hyper, field_scale=ds.field_scale())
        model = build_model(spec, seed=seed)
        cfg = TrainConfig(lr=lr, epochs=n_epochs, batch_size=batch_size, seed=seed, patience=n_epochs)
        log.info("training %s (%d parameters) for up to %d epochs", kind, model.count_params(), n_epochs)
        model, state = train(model, ds, cfg, run_dir=out / kind)
        rep = evaluate(model, ds, "test")
        curve = mean_curve(rollout_many(model, ds, ds.ids("test"), rollout_steps), name=kind)
        records += rep.records() + curve.records("test")
        summary["models"][kind] = dict(params=model.count_params(), epochs=state.epoch, best_epoch=state.best_epoch,
                                       seconds=state.seconds, test=rep.metrics,
                                       rollout_nmse=curve.metrics["NMSE"])
        log.info("%s test NMSE %.4e (identity %.4e)", kind, rep.metrics["NMSE"], ident.metrics["NMSE"])

    paths = emit_report(records, out)
    summary["rollout_steps"] = len(ident_curve.steps)
    summary["plots"] = [str(p) for p in paths["plots"]]
    (out / "summary.json").write_text(json.dumps(summary, indent=1, default=float))
    return summary


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data", default="runs/desk_data")
    p.add_argument("--out", default="runs/desk")
    p.add_argument("--epochs", type=int, default=UNET_EPOCHS)
    p.add_argument("--second-epochs", type=int, default=SECOND_EPOCHS)
    p.add_argument("--cases", type=int, default=10)
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--frames", type=int, default=21)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    s = run_benchmark(args.data, args.out, args.epochs, args.seed, args.cases, args.resolution, args.frames,
                      second_epochs=args.second_epochs)
    print(json.dumps({k: v["test"]["NMSE"] for k, v in s["models"].items()} | {"identity": s["identity_nmse"]},
                     indent=1))


if __name__ == "__main__":
    main()
