import os

import numpy as np
import pytest

from cfensemble.dataset import RatingsDataset, data_dir


def pytest_addoption(parser):
    parser.addoption("--extended", action="store_true", default=False, help="run the ML-1M spot checks")


def dataset_from(triples, num_users=None, num_items=None):
    users, items, ratings = (np.array(col) for col in zip(*triples))
    return RatingsDataset(
        users,
        items,
        ratings.astype(float),
        num_users if num_users is not None else int(users.max()) + 1,
        num_items if num_items is not None else int(items.max()) + 1,
    )


def random_dataset(seed, num_users=30, num_items=40, density=0.3, integer=True):
    """A random rating matrix where every user and item has at least one rating."""
    rng = np.random.default_rng(seed)
    mask = rng.random((num_users, num_items)) < density
    mask[np.arange(num_users), rng.integers(0, num_items, num_users)] = True
    mask[rng.integers(0, num_users, num_items), np.arange(num_items)] = True
    users, items = np.nonzero(mask)
    if integer:
        ratings = rng.integers(1, 6, len(users)).astype(float)
    else:
        ratings = rng.uniform(1, 5, len(users))
    return RatingsDataset(users, items, ratings, num_users, num_items)


@pytest.fixture
def toy():
    return random_dataset(0)


@pytest.fixture(scope="session")
def ml100k_path():
    path = os.path.join(data_dir(), "ml-100k", "u.data")
    if not os.path.exists(path):
        pytest.skip(f"MovieLens 100K not found at {path}; run scripts/fetch_ml100k.py")
    return path


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE = []


def record_criterion(number, title, passed, detail):
    status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
    line = f"criterion {number} [{status}] {title}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
