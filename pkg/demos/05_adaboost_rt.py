"""
AdaBoost.RT for rating prediction
=================================

Each round fits on a distribution over the training ratings, counts the
mass of ratings predicted worse than a threshold, and shifts mass toward
them for the next round.
"""

from cfensemble.dataset import random_split
from cfensemble.ensemble import BaseLearnerSpec, adaboost_rt, adaboost_trace, default_delta
from cfensemble.evaluation import ensemble_size_curve
from cfensemble.knn import KnnConfig

from _data import movielens_100k

split = random_split(movielens_100k(), ratio=0.8, seed=1)
spec = BaseLearnerSpec("knn_user", KnnConfig("user_user", "pearson", 20))

# The threshold defaults to the mean absolute deviation of the ratings.
delta = default_delta(split.train)
print(f"threshold delta = {delta:.4f}")

ensemble = adaboost_rt(split.train, spec, K=10, delta=delta)
curve = ensemble_size_curve(ensemble, split.test)
for t, ((eps, beta), weight, score) in enumerate(zip(adaboost_trace(ensemble), ensemble.member_weights, curve), 1):
    print(f"round {t:2d}  epsilon {eps:.3f}  beta {beta:.3f}  vote {weight:.3f}  RMSE after {score:.4f}")
