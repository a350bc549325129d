"""Sweep the reference configuration over seeds and report recovery quality.

Usage: python3 scripts/recovery_sweep.py [n_seeds] [jobs]
"""

import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from ggm_select.pipeline import PipelineConfig, recovery_f1, run_pipeline


def run_one(args):
    config, seed = args
    result = run_pipeline(replace(config, seed=seed))
    f1 = recovery_f1(result.selection.solver_selected, result.planted.true_connected)
    return seed, result.selection.solver_selected, f1


def main():
    n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 10
    jobs = int(sys.argv[2]) if len(sys.argv) > 2 else 1
    config_path = Path(__file__).resolve().parent.parent / "configs" / "reference.json"
    config = PipelineConfig.from_json_file(config_path)

    work = [(config, seed) for seed in range(n_seeds)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run_one, work))
    else:
        rows = [run_one(item) for item in work]

    total = 0.0
    for seed, selected, f1 in rows:
        total += f1
        print(f"seed={seed} selected={selected} f1={f1:.3f}")
    print(f"average_f1={total / n_seeds:.3f} over {n_seeds} seeds")


if __name__ == "__main__":
    main()
