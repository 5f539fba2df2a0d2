"""The thirteen acceptance criteria, each at its stated tolerance and budget.

Every test prints one ``[PASS]``/``[FAIL]`` line; the collected lines are
repeated in the terminal summary.
"""

import pytest

from supercrit import suites

from conftest import ACCEPTANCE_LINES


def _check(result):
    ACCEPTANCE_LINES[result.number] = result.line()
    print(result.line())
    assert result.passed, result.line()


def test_criterion_01_bessel():
    _check(suites.bessel())


def test_criterion_02_goldens():
    _check(suites.goldens())


def test_criterion_03_exterior():
    _check(suites.exterior())


def test_criterion_04_fk_kernel(kernel_grid):
    _check(suites.fk_kernel(suites.ACCEPT_MC, kernel_grid))


def test_criterion_05_fk_survival():
    _check(suites.fk_survival())


def test_criterion_06_decay_slope():
    _check(suites.decay())


def test_criterion_07_survival_sandwich():
    _check(suites.sandwich())


def test_criterion_08_barriers():
    _check(suites.barriers())


def test_criterion_09_small_time():
    _check(suites.small_time())


def test_criterion_10_large_time():
    _check(suites.large_time())


def test_criterion_11_green():
    _check(suites.green())


def test_criterion_12_counterexample():
    _check(suites.counterexample())


def test_criterion_13_determinism(kernel_grid):
    _check(suites.determinism(suites.ACCEPT_MC, kernel_grid))
