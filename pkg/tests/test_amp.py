import numpy as np
import pytest

from msamp.amp import empirical_error_covariance, estimate_theta, run_amp, trajectory_summary_csv
from msamp.model import build_dictionaries, sample_signals, synthesize_observation, wyner_config
from msamp.state_evolution import run_state_evolution
from msamp.streams import substream


@pytest.fixture(scope="module")
def setup():
    cfg = wyner_config(1024, [0.1, 0.1], 0.1, dict_kind="fourier", T=6, mc_samples=50_000)
    se = run_state_evolution(cfg)
    dicts = build_dictionaries(cfg, lambda u: substream(0, "dict", u))
    truth = sample_signals(cfg, substream(0, "signals"))
    Y, N = synthesize_observation(cfg, dicts, truth, substream(0, "noise"))
    return cfg, se, dicts, truth, Y


def test_first_iterate_is_matched_filter(setup):
    cfg, se, dicts, truth, Y = setup
    tr = run_amp(Y, dicts, cfg, se)
    for u in range(2):
        assert np.allclose(tr.R[u][0], dicts[u].apply_adjoint(Y))
        assert len(tr.R[u]) == cfg.T
    assert np.allclose(tr.Z[0], Y)


def test_store_last_only(setup):
    cfg, se, dicts, truth, Y = setup
    a = run_amp(Y, dicts, cfg, se)
    b = run_amp(Y, dicts, cfg, se, store_all=False)
    assert len(b.R[0]) == 1 and np.allclose(b.final_R()[0], a.final_R()[0])


def test_decoupling_moderate_size(setup):
    cfg, se, dicts, truth, Y = setup
    tr = run_amp(Y, dicts, cfg, se)
    for u in range(2):
        emp = empirical_error_covariance(tr.R[u][-1], truth.X[u])
        assert np.linalg.norm(emp - se.cphi(u, cfg.T)) / np.linalg.norm(se.cphi(u, cfg.T)) < 0.12


def test_error_decreases(setup):
    cfg, se, dicts, truth, Y = setup
    tr = run_amp(Y, dicts, cfg, se)
    tr0 = np.trace(empirical_error_covariance(tr.R[0][0], truth.X[0])).real
    trT = np.trace(empirical_error_covariance(tr.R[0][-1], truth.X[0])).real
    assert trT < tr0


def test_theta_and_csv(setup):
    cfg, se, dicts, truth, Y = setup
    tr = run_amp(Y, dicts, cfg, se)
    th = estimate_theta(tr, se, cfg.alpha)
    assert th[0].shape == (cfg.L, cfg.F)
    text = trajectory_summary_csv(tr, truth.X, se)
    assert text.splitlines()[0] == "u,t,trace_empirical,trace_se,rel_fro_error"
    assert len(text.splitlines()) == 1 + 2 * cfg.T


def test_empirical_cphi_mode(setup):
    cfg, se, dicts, truth, Y = setup
    tr = run_amp(Y, dicts, cfg, se, empirical_cphi=True)
    emp = empirical_error_covariance(tr.R[0][-1], truth.X[0])
    assert np.trace(emp).real < np.trace(se.cphi(0, 1)).real


def test_shape_errors(setup):
    cfg, se, dicts, truth, Y = setup
    with pytest.raises(ValueError):
        run_amp(Y[:-1], dicts, cfg, se)
    with pytest.raises(ValueError):
        run_amp(Y, dicts, cfg.replace(T=12), se)
