"""Shared helper: locate MovieLens 100K or explain how to get it."""

import os
import sys

from cfensemble.dataset import data_dir, load_movielens


def movielens_100k():
    path = os.path.join(data_dir(), "ml-100k", "u.data")
    if not os.path.exists(path):
        sys.exit(f"{path} is missing; run scripts/fetch_ml100k.py first")
    return load_movielens(path)
