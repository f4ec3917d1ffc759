import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from eagps.data import SequenceRecord, build_sequences, split_train_test, synth_dataset  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def synth_small():
    log = synth_dataset(n_users=12, m_items=30, seq_len=6, noise=0.0, seed=0)
    return split_train_test(build_sequences(log, min_item_freq=1), 0.8, seed=0)


@pytest.fixture
def tiny_train():
    return [SequenceRecord(0, (0, 1, 2, 3), 0), SequenceRecord(1, (2, 3, 4), 1),
            SequenceRecord(2, (4, 5, 0, 1, 2), 2)]


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        passed, title, detail = module.RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}")
