"""
A full run of the command-line pipeline on a small synthetic panel.

Writes M5-format CSVs and a config file to a scratch directory, then runs
diagnose, cluster, fit, evaluate and forecast, and prints the report.

Run: python demos/pipeline_demo.py [scratch_dir]
"""
import glob
import os
import sys
import tempfile

import pandas as pd

from countlss.cli import main as cli
from countlss.synthetic import simulate_panel, write_m5_csv


def main(root):
    data = os.path.join(root, "data")
    write_m5_csv(simulate_panel("NegBinomial", n_items=12, n_stores=2, n_days=400, seed=3), data)
    cfg = os.path.join(root, "demo.cfg")
    with open(cfg, "w") as fh:
        fh.write("# small demo run\n"
                 "sales_csv = data/sales.csv\n"
                 "calendar_csv = data/calendar.csv\n"
                 "workdir = work\n"
                 "n_clusters = 3\n"
                 "holdout_days = 7\n"
                 "families = Poisson,Geometric,NegBinomial,ZeroInfPoisson\n")
    for argv in (["diagnose"], ["cluster"], ["fit"], ["evaluate"],
                 ["forecast", "--start", "d_399", "--end", "d_400"]):
        code = cli(argv + ["--config", cfg])
        if code:
            sys.exit(code)
    report = glob.glob(os.path.join(root, "work", "reports", "*_report.csv"))[0]
    with pd.option_context("display.width", 160, "display.max_columns", 20):
        print(pd.read_csv(report)[["source", "avg", "improvement_pct", "mean_hqc", "best_hqc_pct"]])


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="countlss_demo_"))
