import runpy
import sys
from pathlib import Path

import pytest

DEMOS = Path(__file__).resolve().parents[1] / "demos"


@pytest.mark.parametrize("name,args", [
    ("adaptive_vs_fixed.py", ["--T", "60", "--reps", "20"]),
    ("lower_bound_family.py", ["--T", "32", "64", "--reps", "20"]),
    ("confidence_intervals.py", ["--T", "60", "--reps", "20"]),
])
def test_demo_runs(name, args, monkeypatch, capsys):
    monkeypatch.setattr(sys, "argv", [name, *args])
    runpy.run_path(str(DEMOS / name), run_name="__main__")
    assert capsys.readouterr().out.strip()
