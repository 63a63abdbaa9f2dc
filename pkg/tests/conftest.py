import os

import pytest

# The heavy Monte Carlo studies run once per session and feed several
# acceptance assertions; worker counts only affect wall time, never the
# report bytes (asserted by the determinism criterion).
WORKERS = max(1, min(2, os.cpu_count() or 1))
RERUN_WORKERS = WORKERS + 1


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running Monte Carlo acceptance runs")
