import numpy as np
import pytest

from fsat.audio_io import SynthConfig, gen_synthetic_corpus
from fsat.model import init_classifier


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def params():
    return init_classifier(seed=7)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """A 24-clip corpus on disk, shared by the CLI and pipeline tests."""
    root = tmp_path_factory.mktemp("corpus")
    cfg = SynthConfig(n_real=12, n_fake=12, clip_seconds=0.25, test_fraction=0.25, seed=3)
    return gen_synthetic_corpus(cfg, root), root / "manifest.tsv"


_VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(pytestconfig):
    """Record one acceptance line and fail the test when ``ok`` is false."""
    lines = pytestconfig.stash.setdefault(_VERDICTS, [])

    def record(criterion, ok, detail):
        lines.append(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {criterion}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
