"""Materialise MovieLens-100K as ``data/ml-100k/u.data``.

The RecBole wheel on PyPI ships the 100K ratings as ``ml-100k.inter`` (same
rows and order as ``u.data``, plus a typed header).  This script downloads
that wheel with pip, strips the header and writes the TAB-separated file.

    python scripts/fetch_ml100k.py [--wheel path/to/recbole.whl] [--out DIR]
"""

import argparse
import glob
import os
import subprocess
import sys
import tempfile
import zipfile

MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def main(argv=None):
    here = os.path.dirname(os.path.abspath(__file__))
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--wheel", help="use an already downloaded recbole wheel")
    parser.add_argument("--out", default=os.path.join(here, os.pardir, "data", "ml-100k"))
    args = parser.parse_args(argv)

    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel
        if wheel is None:
            subprocess.run(
                [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp, "recbole==1.2.1"],
                check=True,
            )
            wheel = glob.glob(os.path.join(tmp, "recbole-*.whl"))[0]
        with zipfile.ZipFile(wheel) as zf:
            lines = zf.read(MEMBER).decode("ascii").splitlines()

    if not lines[0].startswith("user_id"):
        raise SystemExit(f"unexpected header in {MEMBER}: {lines[0]!r}")
    rows = lines[1:]
    os.makedirs(args.out, exist_ok=True)
    target = os.path.join(args.out, "u.data")
    with open(target, "w", newline="\n") as fh:
        for row in rows:
            fh.write(row + "\n")
    print(f"wrote {len(rows)} ratings to {os.path.abspath(target)}")


if __name__ == "__main__":
    main()
