"""Acceptance criteria 1-11, one test each.

Every test records a one-line PASS/FAIL summary, printed at the end of
the pytest run (section "acceptance criteria") and when this file is run
as a script. Runtime is several minutes.
"""

import pytest

from msamp import validation as V

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:  # run as a script
    ACCEPTANCE_LINES = []


def _record(res):
    ACCEPTANCE_LINES.append(res.line())
    print(res.line())
    assert res.passed, res.detail


@pytest.fixture(scope="module")
def decoupling():
    return V.decoupling_run(seed=3, L=4096)


def test_01_dictionary_correctness():
    _record(V.check_dictionaries())


def test_02_fast_path_complexity():
    _record(V.check_complexity())


def test_03_divergence_free():
    _record(V.check_divergence_free())


def test_04_denoiser_quadrature():
    _record(V.check_quadrature())


def test_05_se_base_case():
    _record(V.check_se_base_case())


def test_06_decoupling(decoupling):
    _record(V.check_decoupling(decoupling))


def test_07_residual_moment_oracle():
    _record(V.check_residual_moments(n_seeds=2000))


def test_08_detection_rates():
    _record(V.check_detection_rates()[0])


def test_09_detected_mse_and_genie():
    _record(V.check_mse_and_genie(trials=8)[0])


def test_10_rs_consistency():
    _record(V.check_rs_consistency())


def test_11_identity(decoupling):
    _record(V.check_identity(decoupling))


if __name__ == "__main__":
    import sys
    sys.exit(0 if all(r.passed for r in V.run_all()) else 1)
