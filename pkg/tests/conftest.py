import os
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".cache" / "regrasp"
CAMPAIGN = Path(os.environ.get("REGRASP_CAMPAIGN", ROOT / "artifacts" / "campaign"))

_criteria = {}


def record_criterion(n, ok, detail):
    _criteria[n] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        ok, detail = _criteria[n]
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def config():
    from regrasp.config import Config
    return Config()


@pytest.fixture(scope="session")
def world(config):
    from regrasp.task import World
    w = World(config)
    w.ensure_handover(str(CACHE))
    return w


@pytest.fixture(scope="session")
def lblock_ctx(world, config):
    from regrasp.bench.run import build_context
    return build_context("lblock", config, str(CACHE), world=world)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
