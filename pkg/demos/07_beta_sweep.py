"""Run the experiment grid from demos/specs/beta_sweep.txt and print the table.

The same thing is available from the shell:

    ecgbalance experiment --spec demos/specs/beta_sweep.txt --out results.csv --jobs 2
"""

import pathlib
import tempfile

from ecgbalance import parse_experiment_spec, run_experiment, write_results_csv

here = pathlib.Path(__file__).resolve().parent
spec = parse_experiment_spec(here / "specs" / "beta_sweep.txt")
print(f"grid: losses={spec.losses} betas={spec.betas} alphas={spec.alphas} "
      f"encodes={spec.encodes}, {len(spec.seeds)} seeds")

rows = run_experiment(spec, jobs=1)
with tempfile.TemporaryDirectory() as tmp:
    out = pathlib.Path(tmp) / "results.csv"
    write_results_csv(rows, out)
    print("\n" + out.read_text())

best = max(rows, key=lambda r: r.macro_f1_mean)
print(f"best cell: beta={best.cell.beta} with macro F1 "
      f"{100 * best.macro_f1_mean:.1f} +- {100 * best.macro_f1_sd:.1f}")
