import json

import numpy as np
import pytest

from gaplm.core import FitConfig, GaplmError
from gaplm.study import (SUMMARY_COLUMNS, replication_seeds, run_replication, run_study,
                         summaries_to_csv, summaries_to_json)

FAST = FitConfig(n_lambda=8)


def test_replication_seeds_are_independent_of_layout():
    a = replication_seeds(5, 3)
    b = replication_seeds(5, 3)
    assert np.random.default_rng(a[0]).random() == np.random.default_rng(b[0]).random()
    assert np.random.default_rng(a[0]).random() != np.random.default_rng(a[1]).random()
    assert np.random.default_rng(a[0]).random() != np.random.default_rng(replication_seeds(5, 4)[0]).random()


@pytest.mark.parametrize("variant", ["SCAD", "FULL", "ORACLE"])
def test_single_replication_summary(variant):
    s = run_study("example1", 60, 1, 2, "EC", variant, FAST)
    assert s.R == 1 and len(s.records) == 1
    assert {s.C, s.O, s.U} <= {0.0, 1.0}
    assert s.C + s.O + s.U + s.failure_fraction == 1.0
    assert s.MME >= 0.0


def test_oracle_uses_only_true_columns():
    rec = run_replication("example1", 60, 0, 1, "EC", "ORACLE", FAST)
    assert rec.active_x == [0, 1] and rec.active_z == [0, 1]
    assert rec.selection == "correct"
    assert all(b == 0.0 for b in rec.beta[2:])


def test_full_keeps_everything():
    rec = run_replication("example1", 60, 0, 1, "IND", "FULL", FAST)
    assert rec.selection == "over"
    assert len(rec.active_x) == 6 and len(rec.active_z) == 6


def test_replication_is_reproducible():
    full = run_replication("example1", 60, 0, 4, "EC", "FULL", FAST)
    again = run_replication("example1", 60, 0, 4, "EC", "FULL", FAST)
    assert full == again


def test_failure_is_recorded():
    rec = run_replication("example1", 60, 0, 1, "EC", "BOGUS", FAST)
    assert rec.failed and "BOGUS" in rec.error
    s = run_study("example1", 60, 1, 1, "EC", "BOGUS", FAST)
    assert s.failures == 1 and s.C + s.O + s.U == 0.0


def test_r_must_be_positive():
    with pytest.raises(GaplmError):
        run_study("example1", 60, 0, 1)


def test_thread_count_does_not_change_output():
    one = run_study("example1", 60, 3, 8, "EC", "SCAD", FAST, threads=1)
    two = run_study("example1", 60, 3, 8, "EC", "SCAD", FAST, threads=2)
    assert summaries_to_csv([one]) == summaries_to_csv([two])
    assert summaries_to_json([one]) == summaries_to_json([two])


def test_csv_and_json_layout():
    s = run_study("example1", 60, 2, 3, "EC", "FULL", FAST)
    lines = summaries_to_csv([s]).splitlines()
    assert lines[0].split(",") == list(SUMMARY_COLUMNS)
    row = dict(zip(SUMMARY_COLUMNS, lines[1].split(",")))
    assert row["design"] == "example1" and row["R"] == "2" and float(row["MME"]) == s.MME
    doc = json.loads(summaries_to_json([s]))
    assert doc[0]["R"] == 2 and len(doc[0]["records"]) == 2
    assert "records" not in json.loads(summaries_to_json([s], records=False))[0]
