import numpy as np
import pytest

from eigenpattern.dataset import ImageMeta, PatternDataset


def make_dataset(labels, side=2, seed=0):
    """Random-pixel dataset with the given label sequence."""
    labels = np.asarray(labels, dtype=np.int64)
    m = labels.size
    pixels = np.random.default_rng(seed).uniform(size=(m, side, side))
    return PatternDataset(pixels, labels, tuple(ImageMeta() for _ in range(m)), tuple(f"img_{k:05d}.png" for k in range(m)))


@pytest.fixture
def tiny_dataset():
    return make_dataset(np.repeat([0, 1, 2], 4), side=8)


@pytest.fixture(scope="session")
def synth_small():
    from eigenpattern.synth import gen_dataset

    return gen_dataset(per_class=30, side=64, seed=3)


# --- acceptance summary -----------------------------------------------------

_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = dict(item.user_properties).get("detail", "")
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        _CRITERIA.append((status, marker.args[0], report.duration, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, duration, detail in _CRITERIA:
        line = f"{status}  {name}  ({duration:.2f} s)"
        terminalreporter.write_line(line + (f"  {detail}" if detail else ""))
