import numpy as np
import pytest

from cswd.datagen import CorpusSpec, generate_corpus, load_manifest

_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")
    config.addinivalue_line("markers", "slow: long-running training test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(rep.user_properties).get("detail", "")
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = rep.longrepr[2].removeprefix("Skipped: ")
        _CRITERIA.append((marker.args[0], rep.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, detail in _CRITERIA:
        tag = {"passed": "PASS", "failed": "FAIL"}.get(outcome, outcome.upper())
        terminalreporter.write_line(f"[{tag}] {name}{': ' + detail if detail else ''}")


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """120 clean utterances, 100 train / 20 eval."""
    out = tmp_path_factory.mktemp("corpus")
    spec = CorpusSpec(n_utterances=120, eval_fraction=1 / 6, snr_db=30, seed=5)
    utts = generate_corpus(spec, out)
    return out, utts


@pytest.fixture(scope="session")
def small_items(small_corpus):
    from cswd.trainer import prepare

    out, _ = small_corpus
    return prepare(load_manifest(out / "train.tsv"), load_manifest(out / "eval.tsv"))
