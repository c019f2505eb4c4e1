import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from odcgan.config import RunConfig  # noqa: E402
from odcgan.data import make_synthetic_dataset  # noqa: E402

TOY_GEN = [8, 16, 32, 64, 64, 64, 64, 64]
TOY_DISC = [8, 16, 32, 64, 1]


def toy_config(**train) -> RunConfig:
    """Narrow networks at full 256x256 resolution, fast enough for unit tests."""
    cfg = RunConfig()
    cfg.generator.encoder_channels = list(TOY_GEN)
    cfg.discriminator.layer_channels = list(TOY_DISC)
    for k, v in train.items():
        setattr(cfg.train, k, v)
    cfg.validate()
    return cfg


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    """Six synthetic fundus images: four train, two test."""
    return make_synthetic_dataset(tmp_path_factory.mktemp("synth"), 6, seed=3, size=320, n_test=2)


# one summary line per acceptance criterion, collected from tests marked criterion(n, title)
_CRITERIA_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")
    config.stash[_CRITERIA_KEY] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.failed:
        status = "FAIL"
    elif report.skipped:
        status = "NOT RUN"
    elif report.when == "call":
        status = "PASS"
    else:
        return
    results = item.config.stash[_CRITERIA_KEY]
    prev = results.get(number, (title, "PASS"))[1]
    rank = {"PASS": 0, "NOT RUN": 1, "FAIL": 2}
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if detail:
        title = f"{title} ({detail})"
    results[number] = (title, max(prev, status, key=rank.get))


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_CRITERIA_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, status = results[number]
        terminalreporter.write_line(f"criterion {number}: {status:7s} {title}")
