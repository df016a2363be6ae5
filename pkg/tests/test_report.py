import io

import pandas as pd
import pytest

from latentkit import __version__
from latentkit.core.report import Report, emit_report, emit_to_path, format_value, report_bytes


def _report():
    report = Report("lto", flags={"beta": 0.001, "in": ["a.lttk"]}, seed=7, title="selection")
    report.add("problems", 2).add("lto_rate", 1.0 / 3.0).add("passed", True)
    report.columns = ["problem_id", "reward", "label"]
    report.rows = [{"problem_id": 1, "reward": 1.0 / 3.0, "label": 1},
                   {"problem_id": 2, "reward": 0.25, "label": None}]
    return report


def test_same_report_same_bytes():
    for fmt in ("csv", "text"):
        assert report_bytes(_report(), fmt) == report_bytes(_report(), fmt)


def test_csv_contract():
    text = report_bytes(_report(), "csv").decode("utf-8")
    lines = text.splitlines()
    assert lines[0] == "problem_id,reward,label"
    assert lines[1] == "1,0.333333333,1.0" or lines[1] == "1,0.333333333,1"
    assert lines[2].startswith("2,0.25,")
    frame = pd.read_csv(io.StringIO(text))
    assert list(frame.columns) == ["problem_id", "reward", "label"]
    assert frame["label"].isna().tolist() == [False, True]


def test_empty_result_is_header_only():
    report = Report("metrics", columns=["problem_id", "step"])
    assert report_bytes(report, "csv") == b"problem_id,step\n"


def test_text_has_provenance():
    lines = report_bytes(_report(), "text").decode("utf-8").splitlines()
    assert f"version={__version__}" in lines
    assert "subcommand=lto" in lines
    assert "seed=7" in lines
    assert "flags=--beta=0.001 --in=a.lttk" in lines
    assert "lto_rate=0.333333333" in lines
    assert "passed=true" in lines
    assert "problem_id=2 reward=0.25 label=none" in lines


def test_format_value():
    assert format_value(None) == "none"
    assert format_value(False) == "false"
    assert format_value(float("nan")) == "nan"
    assert format_value([1, 0.5]) == "1,0.5"
    assert format_value(12) == "12"


def test_unknown_format():
    with pytest.raises(ValueError):
        emit_report(_report(), "json", io.BytesIO())


def test_emit_to_path(tmp_path):
    path = tmp_path / "r.txt"
    n = emit_to_path(_report(), "text", str(path), io.BytesIO())
    assert path.read_bytes() == report_bytes(_report(), "text")
    assert n == path.stat().st_size

    sink = io.BytesIO()
    emit_to_path(_report(), "csv", "-", sink)
    assert sink.getvalue() == report_bytes(_report(), "csv")
