"""Learning-rate sweep per model kind on a small cavity set.

Trains every kind briefly at each candidate rate and keeps the one with the
lowest validation NMSE. The defaults in ``flowbench.trainer.TUNED_LR`` came
from running this at 32x32 with 6 epochs (``--epochs 6``).

    python3 scripts/tune_lr.py --data runs/tune_data --out runs/tune_lr.json
"""
from __future__ import annotations

import argparse
import json
import logging
import math
from pathlib import Path

from flowbench.datakit import FlowDataset
from flowbench.errors import TrainingDivergedError
from flowbench.operators import KINDS, ModelSpec, build_model
from flowbench.trainer import TrainConfig, train

from desk_benchmark import generate

log = logging.getLogger("tune_lr")

CANDIDATES = (1e-2, 3e-3, 1e-3, 3e-4, 1e-4)


def sweep(ds, kinds=KINDS, candidates=CANDIDATES, epochs=12, batch_size=16, seed=0):
    table = {}
    for kind in kinds:
        spec = ModelSpec(kind, ds.omega_dim, grid=ds.grid_shape, field_scale=ds.field_scale())
        scores = {}
        for lr in candidates:
            try:
                _, state = train(build_model(spec, seed=seed), ds,
                                 TrainConfig(lr=lr, epochs=epochs, batch_size=batch_size, seed=seed, patience=epochs))
                scores[lr] = state.best_val
            except TrainingDivergedError:
                scores[lr] = math.inf
            log.info("%s lr=%.0e val NMSE %.4e", kind, lr, scores[lr])
        table[kind] = dict(best=min(scores, key=scores.get), scores=scores)
    return table


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data", default="runs/tune_data")
    p.add_argument("--out", default="runs/tune_lr.json")
    p.add_argument("--kinds", default=",".join(KINDS))
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--resolution", type=int, default=32)
    args = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s: %(message)s")
    generate(args.data, n_cases=10, resolution=args.resolution, n_frames=21)
    ds = FlowDataset.load(args.data)
    table = sweep(ds, args.kinds.split(","), epochs=args.epochs)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text(json.dumps(table, indent=1, default=str))
    print(json.dumps({k: v["best"] for k, v in table.items()}, indent=1))


if __name__ == "__main__":
    main()
