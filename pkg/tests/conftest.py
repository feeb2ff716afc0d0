from __future__ import annotations

from types import SimpleNamespace

import pytest

from spt_impact.config import default_config
from spt_impact.simulator import SimConfig

# acceptance lines collected by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def experiment(cfg=None, **sim):
    """Duck-typed experiment for ``simulate_path`` with overridden sim settings."""
    cfg = default_config() if cfg is None else cfg
    base = cfg.sim
    fields = {f: getattr(base, f) for f in base.__dataclass_fields__}
    fields.update(sim)
    return SimpleNamespace(impacts=cfg.impacts, generator=cfg.generator, w=cfg.w, N=cfg.N,
                           sim=SimConfig(**fields), market=cfg.market)


@pytest.fixture(scope="session")
def reference_config():
    return default_config()
