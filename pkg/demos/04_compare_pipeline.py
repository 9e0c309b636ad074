"""End-to-end command-line pipeline in a scratch directory.

Generates a trace, splits it, trains and evaluates one model, then runs the
full-catalog comparison from ``compare_bundled.ini`` and prints the table.
"""

import tempfile
from pathlib import Path

from wattzoo.cli import main

here = Path(__file__).resolve().parent
with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    main(["synth", "--plant", "multilinear", "--sweep", "mixed", "--noise", "1", "--n", "200", "--seed", "3", "--out", str(tmp / "mix.csv")])
    main(["split", "--trace", str(tmp / "mix.csv"), "--seed", "3", "--out-dir", str(tmp)])
    main(["train", "--model", "mvlr-4", "--trace", str(tmp / "mix.train.csv"), "--out", str(tmp / "mvlr4.model")])
    main(["evaluate", "--model", str(tmp / "mvlr4.model"), "--trace", str(tmp / "mix.validation.csv")])

    status = main(["compare", "--config", str(here / "compare_bundled.ini"), "--format", "text-table,svg-bars", "--out-dir", str(tmp / "reports")])
    print((tmp / "reports" / "validation.txt").read_text())
    print(f"compare exit status {status}")
