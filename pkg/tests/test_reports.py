import json
import math

import numpy as np

from supercrit import reports
from supercrit.envelopes import EnvelopeConstants
from supercrit.fk_montecarlo import McEstimate
from supercrit.reports import RatioReport


def _report():
    entries = [((0.5, (1.0,), (2.0,)), 0.1, 0.2, math.log(0.5)), ((1.0, (0.3,), (0.3,)), 0.3, 0.1, math.log(3.0))]
    return RatioReport.from_entries(entries, EnvelopeConstants(0.5, 2.0, 1.0))


def test_ratio_report_statistics():
    rep = _report()
    assert rep.spread == math.log(3.0) - math.log(0.5)
    assert rep.verdict == "bounded"
    bad = RatioReport.from_entries([((1.0,), 0.0, 0.1, -math.inf)], None)
    assert bad.verdict == "violated" and bad.violation == (1.0,)


def test_ratio_report_csv_schema():
    text = reports.ratio_report_csv(_report())
    lines = text.splitlines()
    assert lines[0] == "point,numeric,envelope,log_ratio"
    assert lines[1].startswith("0.5;1;2,0.10000000000000001,")
    assert lines[-1].startswith("#fitted,c_gauss=0.5,c_kill=2,eta2=1,spread=")
    assert text == reports.ratio_report_csv(_report())


def test_estimate_csv_schema():
    est = McEstimate(0.25, 0.01, 1000, 0.125)
    assert reports.estimate_csv([({}, est)]) == "mean,stderr,n,zero_weight_frac\n0.25,0.01,1000,0.125\n"
    text = reports.estimate_csv([({"t": 1.0, "x": np.array([0.5, 0.0])}, est)])
    assert text.splitlines()[1] == "1,0.5 0,0.25,0.01,1000,0.125"


def test_fmt_uses_17_significant_digits():
    assert reports.fmt(0.1) == "0.10000000000000001"
    assert reports.fmt(np.float32(0.5)) == "0.5"
    assert reports.fmt(3) == "3" and reports.fmt(True) == "true"


def test_table_csv():
    assert reports.table_csv({"r": [1.0, 2.0], "u": np.array([0.5, 0.25])}) == "r,u\n1,0.5\n2,0.25\n"


def test_json_is_stable_and_parseable():
    text = reports.ratio_report_json(_report(), experiment="x", regime="small_time")
    doc = json.loads(text)
    assert list(doc) == sorted(doc)
    assert doc["fitted"]["c_kill"] == 2.0 and len(doc["rows"]) == 2
    assert reports.to_json({"b": math.inf, "a": np.int64(2)}) == '{\n  "a": 2,\n  "b": "inf"\n}\n'
