from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ztqr.fhe import gen_params, keygen  # noqa: E402


@pytest.fixture(scope="session")
def desk():
    return gen_params("desk")


@pytest.fixture(scope="session")
def desk_keys(desk):
    return keygen(desk, np.random.default_rng(2024))


@pytest.fixture(scope="session")
def paper():
    return gen_params("paper-strength")


@pytest.fixture(scope="session")
def paper_keys(paper):
    return keygen(paper, np.random.default_rng(7))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------- acceptance summary

_criteria: dict[str, dict[str, object]] = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    cid = props.get("criterion")
    if cid is None or (report.when != "call" and report.passed):
        return
    entry = _criteria.setdefault(cid, {"title": props.get("title", ""), "ok": True, "notes": []})
    if report.failed:
        entry["ok"] = False
        msg = str(report.longrepr).strip().splitlines()[-1] if report.longrepr else ""
        entry["notes"].append(f"{report.nodeid.split('::')[-1]}: {msg}")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(_criteria, key=int):
        e = _criteria[cid]
        terminalreporter.write_line(f"criterion {cid:>2} {'PASS' if e['ok'] else 'FAIL'}  {e['title']}")
        for note in e["notes"]:
            terminalreporter.write_line(f"             {note}")
