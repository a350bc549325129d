"""Run the reference planted configuration once and print the outcome.

Usage: python3 scripts/run_reference.py [seed]
"""

import sys
from pathlib import Path

from ggm_select.pipeline import PipelineConfig, recovery_f1, run_pipeline


def main():
    config_path = Path(__file__).resolve().parent.parent / "configs" / "reference.json"
    config = PipelineConfig.from_json_file(config_path)
    if len(sys.argv) > 1:
        import dataclasses
        config = dataclasses.replace(config, seed=int(sys.argv[1]))

    result = run_pipeline(config)
    f1 = recovery_f1(result.selection.solver_selected, result.planted.true_connected)
    print(f"seed={config.seed}")
    print(f"important={result.selection.important_set}")
    print(f"selected={result.selection.solver_selected}")
    print(f"true_connected={result.planted.true_connected}")
    print(f"converged={result.report.converged} iterations={result.report.iterations}")
    print(f"f1={f1:.3f}")


if __name__ == "__main__":
    main()
