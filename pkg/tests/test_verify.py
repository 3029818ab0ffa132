import xml.etree.ElementTree as ET

import pytest

from fermicrit.errors import ConfigurationError
from fermicrit.verify import CheckReport, run_suite, write_csv, write_junit


@pytest.fixture(scope="module")
def fast_reports():
    return run_suite("fast", seed=0)


def test_fast_suite_passes(fast_reports):
    failed = [(r.name, r.measured, r.bound) for r in fast_reports if not r.passed]
    assert not failed


def test_fast_suite_covers_every_module(fast_reports):
    prefixes = {r.name.split(".")[0] for r in fast_reports}
    assert {"grid", "potential", "state", "energy", "critical"} <= prefixes


def test_suite_is_deterministic(fast_reports):
    again = run_suite("fast", seed=0)
    assert [(r.name, r.measured) for r in again] == [(r.name, r.measured) for r in fast_reports]


def test_unknown_level():
    with pytest.raises(ConfigurationError):
        run_suite("medium")


def test_upper_report():
    assert CheckReport.upper("x", 0.5, 1.0).passed
    assert not CheckReport.upper("x", 2.0, 1.0).passed
    assert not CheckReport.upper("x", float("nan"), 1.0).passed


def test_writers(tmp_path, fast_reports):
    write_junit(fast_reports, tmp_path / "v.xml")
    write_csv(fast_reports, tmp_path / "v.csv")
    root = ET.parse(tmp_path / "v.xml").getroot()
    assert int(root.get("tests")) == len(fast_reports)
    assert int(root.get("failures")) == 0
    rows = (tmp_path / "v.csv").read_text().splitlines()
    assert rows[0] == "name,passed,measured,bound,context"
    assert len(rows) == len(fast_reports) + 1
