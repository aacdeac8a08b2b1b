import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import LINES as ACCEPTANCE_LINES  # noqa: E402
from laserguard.dataset import SynthConfig, synth_corpus  # noqa: E402
from laserguard.evaluation import PipelineConfig, featurize_records  # noqa: E402


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    """Default synthetic corpus: 19 speakers x 5 utterances x 2 labels."""
    out = tmp_path_factory.mktemp("corpus")
    records = synth_corpus(SynthConfig(seed=0), out)
    return out, records


@pytest.fixture(scope="session")
def records(corpus):
    return corpus[1]


@pytest.fixture(scope="session")
def dwt_features(records):
    return featurize_records(records, "dwt", PipelineConfig())


@pytest.fixture(scope="session")
def labels(records):
    return {r.clip_id: r.label.y for r in records}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
