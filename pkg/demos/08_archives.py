"""
Saving and loading models
=========================

Any trained model or ensemble is written to one binary file and read back
with identical predictions.
"""

import os
import tempfile

import numpy as np

from cfensemble import archive
from cfensemble.dataset import random_split
from cfensemble.ensemble import BaseLearnerSpec, inject_randomness
from cfensemble.knn import KnnConfig

from _data import movielens_100k

split = random_split(movielens_100k(), ratio=0.8, seed=1)
ensemble = inject_randomness(split.train, None, BaseLearnerSpec("knn_user", KnnConfig(k=20)), 5)

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "random-knn.cfm")
    archive.save(ensemble, path)
    print(f"{os.path.getsize(path) / 1e6:.1f} MB on disk (the five members share one table)")
    with open(path, "rb") as fh:
        print("\n".join(archive.describe(fh.read())[:8]))
    loaded = archive.load(path)

same = np.array_equal(loaded.predict(split.test.users, split.test.items), ensemble.predict(split.test.users, split.test.items))
print("identical predictions after reload:", same)
