"""
Bagging
=======

Average learners trained on bootstrap reweightings of the training set and
watch the test error fall as members are added.
"""

from cfensemble.dataset import random_split
from cfensemble.ensemble import BaseLearnerSpec, bag, fit_base
from cfensemble.evaluation import ensemble_size_curve, rmse
from cfensemble.factorization import MfHyperParams

from _data import movielens_100k

split = random_split(movielens_100k(), ratio=0.8, seed=1)
spec = BaseLearnerSpec("ismf", MfHyperParams("ismf", factors=10))

single = fit_base(spec, split.train)
print(f"single ISMF (F=10)  RMSE {rmse(single.predict, split.test):.4f}")

ensemble = bag(split.train, None, spec, K=20, seed=0)
curve = ensemble_size_curve(ensemble, split.test)
for size in (1, 2, 5, 10, 20):
    print(f"bagging K={size:2d}        RMSE {curve[size - 1]:.4f}")

# Each member's bootstrap sample and learner seed are logged.
print(ensemble.build_log[:2])
