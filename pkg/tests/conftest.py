import numpy as np
import pytest

from canforge.data import STYLE_NAMES, load_manifest, write_synthetic_corpus

ACCEPTANCE = {}


@pytest.fixture
def corpus_factory(tmp_path_factory):
    def make(n_images, seed=0, styles=None, size=(80, 80)):
        root = tmp_path_factory.mktemp("corpus")
        write_synthetic_corpus(root, n_images, seed=seed, styles=styles, size=size)
        return root

    return make


@pytest.fixture(scope="session")
def corpus20(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus20")
    write_synthetic_corpus(root, 20, seed=20)
    return load_manifest(root)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    label = marker.args[0]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        ACCEPTANCE[label] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(ACCEPTANCE, key=lambda s: int(s.split()[0].lstrip("AC"))):
        terminalreporter.write_line(f"{ACCEPTANCE[label]}  {label}")
