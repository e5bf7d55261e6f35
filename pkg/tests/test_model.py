import numpy as np
import pytest

from msamp.dictionary import build_dictionary
from msamp.model import (SystemConfig, sample_bernoulli_gaussian, sample_signals,
                         synthesize_observation, wyner_config, wyner_covariances)
from msamp.streams import substream


def test_wyner_covariances():
    S1, S2 = wyner_covariances()
    assert np.allclose(S1, np.diag([1, 1, 0.5, 0.5]))
    assert np.allclose(S2, np.diag([0.5, 0.5, 1, 1]))
    with pytest.raises(ValueError):
        wyner_covariances(crosstalk=1.5)


def test_four_locations_repeat():
    c = wyner_config(64, [0.1, 0.2], 0.1, locations=4)
    assert c.U == 4 and c.lam == [0.1, 0.2, 0.1, 0.2]
    assert np.allclose(c.sigma_u[2], c.sigma_u[0]) and np.allclose(c.sigma_u[3], c.sigma_u[1])


def test_config_text_roundtrip(tmp_path):
    c = wyner_config(96, [0.1, 0.3], 0.05, alpha=1.5, dict_kind="haar", seed=7, T=4)
    p = tmp_path / "c.cfg"
    c.save(p)
    d = SystemConfig.load(p)
    assert d.to_text() == c.to_text()
    assert d.digest() == c.digest()
    assert d.N == [144, 144]


def test_config_complex_sigma_roundtrip():
    S = np.array([[1.0, 0.3j], [-0.3j, 1.0]])
    c = SystemConfig(L=4, U=1, F=2, alpha=[1.0], lam=[0.5], sigma_u=[S], noise_var=0.1)
    d = SystemConfig.from_text(c.to_text())
    assert np.allclose(d.sigma_u[0], S)


@pytest.mark.parametrize("bad", [
    dict(lam=[0.0, 0.1]), dict(lam=[1.0, 0.1]), dict(alpha=[0.5, 1.0]), dict(alpha=[1.001, 1.0]),
    dict(noise_var=-1.0), dict(nu=[0.0, 1.0]), dict(sigma_u=[-np.eye(4), np.eye(4)]), dict(lam=[0.1]),
])
def test_config_validation(bad):
    c = wyner_config(64, [0.1, 0.1], 0.1)
    with pytest.raises(ValueError):
        c.replace(**bad)


def test_config_unknown_key():
    with pytest.raises(ValueError):
        SystemConfig.from_text(wyner_config(8, [0.1, 0.1], 0.1).to_text() + "bogus = 1\n")


def test_bernoulli_gaussian_statistics():
    S = np.diag([1.0, 0.5])
    X, a = sample_bernoulli_gaussian(0.2, S, 200_000, substream(0, "bg"))
    assert abs(a.mean() - 0.2) < 0.005
    assert np.all(X[~a] == 0)
    C = X.conj().T @ X / len(X)
    assert np.allclose(C, 0.2 * S, atol=0.01)


def test_observation_linear_and_noiseless():
    c = wyner_config(32, [0.3, 0.3], 0.0)
    dicts = [build_dictionary("fourier", 32, 32, substream(0, "d", u)) for u in range(2)]
    sig = sample_signals(c, substream(0, "s"))
    Y, N = synthesize_observation(c, dicts, sig, substream(0, "n"))
    assert np.all(N == 0)
    assert np.allclose(Y, sum(D.materialize() @ X for D, X in zip(dicts, sig.X)))
    assert sig.n_active == len(sig.active_set)


def test_signals_reproducible():
    c = wyner_config(64, [0.3, 0.3], 0.1)
    a = sample_signals(c, substream(5, "s"))
    b = sample_signals(c, substream(5, "s"))
    assert all(np.array_equal(x, y) for x, y in zip(a.X, b.X))


def test_config_continuation_lines():
    text = wyner_config(8, [0.1, 0.1], 0.1).to_text()
    wrapped = text.replace("]], [[", "]],  # source 1\n    [[")
    assert wrapped != text
    assert SystemConfig.from_text(wrapped).to_text() == text


def test_config_bad_json_reports_line():
    with pytest.raises(ValueError, match="line 2"):
        SystemConfig.from_text("L = 8\nU = [\n")
