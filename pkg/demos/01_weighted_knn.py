"""
Weighted k-nearest neighbours
=============================

User-user and item-item neighbourhood predictors on one 80:20 split of
MovieLens 100K, followed by a look at what per-rating weights do.
"""

import numpy as np

from cfensemble.dataset import WeightVector, bootstrap_weights, random_split
from cfensemble.evaluation import rmse
from cfensemble.knn import KnnConfig, fit_knn

from _data import movielens_100k

split = random_split(movielens_100k(), ratio=0.8, seed=1)
train, test = split.train, split.test

# Six configurations per perspective: two similarity measures, three sizes.
for perspective in ("user_user", "item_item"):
    for metric in ("pearson", "cosine"):
        for k in (5, 10, 20):
            model = fit_knn(train, None, KnnConfig(perspective, metric, k))
            print(f"{perspective:9s} {metric:7s} k={k:2d}  RMSE {rmse(model.predict, test):.4f}")

# Neighbour lists are sorted by similarity; peek at user 0's closest users.
model = fit_knn(train, None, KnnConfig("user_user", "pearson", 20))
print("user 0 neighbours:", [(v, round(s, 3)) for v, s in model.neighbors(0)[:5]])

# A weight of 0 removes a rating; larger weights pull the means and the
# similarities toward that rating.  A bootstrap draw does both at once.
w = bootstrap_weights(train, seed=0)
print(f"bootstrap leaves out {np.mean(w.values == 0):.1%} of the ratings")
resampled = fit_knn(train, w, KnnConfig("user_user", "pearson", 20))
print(f"k-NN on one bootstrap sample: RMSE {rmse(resampled.predict, test):.4f}")

# Equal weights change nothing.
same = fit_knn(train, WeightVector.ones(len(train)), KnnConfig("user_user", "pearson", 20))
print("equal weights identical:", np.array_equal(same.predict(test.users, test.items), model.predict(test.users, test.items)))
