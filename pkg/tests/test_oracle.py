import math

import numpy as np
import pytest

from msamp.amp import run_amp
from msamp.dictionary import SemiUnitaryDictionary
from msamp.model import SignalRealization
from msamp.oracle import (GramSchmidtRankError, block_gram_schmidt, draw_instance, inner, moment_ensemble,
                          moment_statistics, oracle_config, run_householder_dice, run_residual_dynamics)
from msamp.state_evolution import run_state_evolution
from conftest import crand


@pytest.fixture(scope="module")
def small():
    cfg = oracle_config(N=48, T=3)
    return cfg, run_state_evolution(cfg.replace(mc_samples=50_000))


def test_gs_empty_basis_normalized(rng):
    B = crand(rng, (32, 2))
    w, v = np.linalg.eigh(inner(B, B))
    B = B @ (v / np.sqrt(w)) @ v.conj().T
    assert np.allclose(block_gram_schmidt(B, []), B)


def test_gs_orthonormal_and_reconstructs(rng):
    B0 = crand(rng, (32, 2))
    V1 = block_gram_schmidt(B0, [])
    B = crand(rng, (32, 2))
    V2 = block_gram_schmidt(B, [V1])
    assert np.allclose(inner(V2, V2), np.eye(2), atol=1e-10)
    assert np.allclose(inner(V1, V2), 0, atol=1e-10)
    assert np.allclose(V1 @ inner(V1, B) + V2 @ inner(V2, B), B, atol=1e-10)


def test_gs_degenerate(rng):
    V1 = block_gram_schmidt(crand(rng, (16, 2)), [])
    with pytest.raises(GramSchmidtRankError):
        block_gram_schmidt(V1 @ np.array([[1, 2], [3, 4]]), [V1])
    with pytest.raises(ValueError):
        block_gram_schmidt(crand(rng, (3, 2)), [V1[:3]])


def test_residuals_match_amp(small):
    cfg, se = small
    sig, noise, haar, _ = draw_instance(cfg, 0, 0)
    tr = run_residual_dynamics(cfg, se, sig, noise, haar)
    dicts = [SemiUnitaryDictionary.from_unitary(O, cfg.L) for O in haar]
    Y = noise + sum(D.apply(X) for D, X in zip(dicts, sig.X))
    amp = run_amp(Y, dicts, cfg, se)
    for u in range(cfg.U):
        for t in range(cfg.T):
            assert np.abs(tr.Phi_hat[u][t] - (amp.R[u][t] - sig.X[u])).max() < 1e-8
            assert np.abs(tr.Psi_hat[u][t][: cfg.L] - (amp.Gamma[u][t] - dicts[u].apply(sig.X[u]))).max() < 1e-8


def test_first_step_forced(small):
    cfg, se = small
    sig, noise, haar, _ = draw_instance(cfg, 0, 1)
    tr = run_residual_dynamics(cfg, se, sig, noise, haar, T=1)
    assert np.allclose(tr.Psi_hat[0][0], math.sqrt(cfg.alpha[0]) * haar[0] @ (-sig.X[0]))


def test_zero_inputs_give_zero(small):
    cfg, se = small
    zero = SignalRealization([np.zeros((48, 2), complex)] * 2, [np.zeros(48, bool)] * 2)
    _, _, haar, _ = draw_instance(cfg, 0, 2)
    tr = run_residual_dynamics(cfg, se, zero, np.zeros((48, 2), complex), haar)
    assert all(np.all(m == 0) for u in range(2) for m in tr.Phi_hat[u] + tr.Psi_hat[u])


def test_dice_structure(small):
    cfg, se = small
    sig, noise, _, gauss = draw_instance(cfg, 0, 3)
    st = run_householder_dice(cfg, se, sig, noise, gauss)
    for u in range(cfg.U):
        for basis in (st.V_basis[u], st.V_tilde_basis[u]):
            assert len(basis) == 2 * cfg.T
            G = np.array([[inner(a, b) for b in basis] for a in basis])
            expect = np.eye(len(basis))[:, :, None, None] * np.eye(2)
            assert np.abs(G - expect).max() < 1e-10
        # Phi^(t) - T^(t) lies in span V^(1..2t)
        for t in range(1, cfg.T + 1):
            D = st.Phi_hat[u][t - 1] - st.T_mats[u][t - 1]
            P = sum(v @ inner(v, D) for v in st.V_basis[u][: 2 * t])
            assert np.abs(D - P).max() < 1e-10


def test_dice_needs_room(small):
    cfg, se = small
    c = oracle_config(N=6, T=3)
    sig, noise, _, gauss = draw_instance(c, 0, 0)
    with pytest.raises(ValueError):
        run_householder_dice(c, se, sig, noise, gauss)


def test_first_step_moments_match(small):
    """Psi^(1) from both dynamics: entrywise first two moments over paired seeds."""
    cfg, se = small
    a, b = [], []
    for k in range(400):
        sig, noise, haar, gauss = draw_instance(cfg, 7, k)
        a.append(run_residual_dynamics(cfg, se, sig, noise, haar, T=1).Psi_hat[0][0][:4])
        b.append(run_householder_dice(cfg, se, sig, noise, gauss, T=1).Psi_hat[0][0][:4])
    a, b = np.array(a), np.array(b)
    for stat in (lambda x: x, lambda x: np.abs(x) ** 2):
        d = stat(a) - stat(b)
        se_ = np.sqrt((d.real.var(0, ddof=1) + d.imag.var(0, ddof=1)) / len(d))
        assert np.linalg.norm(d.mean(0)) <= 3 * np.sqrt((se_ ** 2).sum())


def test_ensemble_report(small):
    cfg, se = small
    rep = moment_ensemble(cfg.replace(T=2), se, 150, seed=2)
    assert rep.passed
    lines = rep.to_csv().splitlines()
    assert lines[0] == "moment,rom_alg,rom_mf,diff,se,max_abs_z,pass"
    assert len(lines) == 1 + len(rep.rows) and all(l.endswith("pass") for l in lines[1:])


def test_moment_test_detects_a_bias(small):
    cfg, se = small
    sa, sb = [], []
    for k in range(150):
        sig, noise, haar, gauss = draw_instance(cfg, 3, k)
        sa.append(moment_statistics(run_residual_dynamics(cfg, se, sig, noise, haar, T=2)))
        sb.append(moment_statistics(run_residual_dynamics(cfg, se, sig, 1.2 * noise, haar, T=2)))
    from msamp.oracle import compare_moments
    assert not all(r.passed for r in compare_moments(sa, sb))
