"""
The ddid command
================

Writes a small CSV, then runs the four subcommands through the same entry
point the ``ddid`` console script uses.
"""

import tempfile
from pathlib import Path

import numpy as np
import pandas as pd

from doubledid.cli import main

rng = np.random.default_rng(7)
n, periods = 80, 4
frame = pd.DataFrame({
    "county": np.repeat([f"c{i:02d}" for i in range(n)], periods),
    "year": np.tile(np.arange(2010, 2010 + periods), n),
})
frame["reform"] = ((frame.county < "c40") & (frame.year == 2013)).astype(int)
frame["turnout"] = rng.normal(size=len(frame)) + 0.1 * (frame.year - 2010) + 0.4 * frame.reform

tmp = Path(tempfile.mkdtemp())
path = tmp / "turnout.csv"
frame.to_csv(path, index=False)
cols = ["--data", str(path), "--unit", "county", "--time", "year", "--outcome", "turnout", "--treatment", "reform"]

main(["plot-data", *cols, "--output", str(tmp / "means.csv")])
main(["assess", *cols, "--bootstrap", "200"])
main(["estimate", *cols, "--regime", "extended", "--bootstrap", "200", "--output", str(tmp / "estimate.json")])
print((tmp / "estimate.json").read_text()[:400])
main(["simulate", "--n", "200", "-M", "5", "--bootstrap", "50"])
