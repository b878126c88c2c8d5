import json

import pytest

from fermipolaron.verify import (
    SUITES, Counter, SuiteReport, UnknownSuite, exit_code, fit_constant, format_reports, run_all,
    run_suite, suite_rng, worker_count,
)

FAST = ["pair_bounds", "ccr_error", "eta_bounds", "stability", "elin", "ebos", "patch_approx",
        "nonbosonizable"]


@pytest.mark.parametrize("name", FAST)
def test_fast_suites_pass_and_repeat(name):
    a = run_suite(name, trials=3, seed=7)
    b = run_suite(name, trials=3, seed=7)
    assert a.ok
    assert a.to_line() == b.to_line()
    d = json.loads(a.to_line())
    assert d["suite"] == name and d["seed"] == 7 and "wall_time" not in d


def test_seed_changes_samples():
    a = run_suite("pair_bounds", trials=3, seed=1)
    b = run_suite("pair_bounds", trials=3, seed=2)
    assert a.to_line() != b.to_line()


def test_suite_streams_are_independent():
    x = suite_rng(3, "elin").random()
    assert x == suite_rng(3, "elin").random()
    assert x != suite_rng(3, "ebos").random()


def test_unknown_suite():
    with pytest.raises(UnknownSuite):
        run_suite("nope")
    with pytest.raises(UnknownSuite):
        run_all(names=["elin", "nope"])


def test_run_all_subset_and_exit_code():
    reps = run_all(seed=0, names=["elin", "ebos"], workers=1)
    assert [r.name for r in reps] == ["elin", "ebos"]
    assert exit_code(reps) == 0
    bad = SuiteReport("x", "hard", 1, 1, 1, 0)
    soft = SuiteReport("y", "soft", 1, 1, 1, 0)
    assert exit_code(reps + [soft]) == 0
    assert exit_code(reps + [bad]) == 1
    assert format_reports(reps).count("\n") == 2


def test_counter_and_fit():
    c = Counter()
    c.leq(1.0, 1.0)
    c.leq(1.0 + 1e-14, 1.0)
    c.leq(2.0, 1.0)
    assert (c.checks, c.violations) == (3, 1)
    f = fit_constant([1.0, 2.0], [1.0, 1.0])
    assert f["C_max"] == 2.0 and f["C_ls"] == 1.5
    assert fit_constant([1.0], [0.0])["samples"] == 0


def test_worker_env(monkeypatch):
    monkeypatch.setenv("FERMIPOLARON_WORKERS", "3")
    assert worker_count() == 3


def test_registry():
    assert set(SUITES) == set(FAST) | {"approx_shift", "number_expectation"}
