import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msamp.dictionary import (DictKind, SemiUnitaryDictionary, build_dictionary,
                              sample_haar_unitary)
from msamp.streams import substream


@pytest.mark.parametrize("kind", list(DictKind))
@pytest.mark.parametrize("L,N", [(1, 1), (4, 4), (4, 6), (8, 16), (32, 48), (64, 64)])
def test_semi_unitary(kind, L, N):
    D = build_dictionary(kind, L, N, substream(0, "d", L, N))
    S = D.materialize()
    assert S.shape == (L, N)
    assert np.linalg.norm(S @ S.conj().T - (N / L) * np.eye(L)) <= 1e-8


@pytest.mark.parametrize("kind", list(DictKind))
def test_structured_matches_dense(kind, rng):
    D = build_dictionary(kind, 16, 24, rng)
    S = D.materialize()
    X = rng.standard_normal((24, 3)) + 1j * rng.standard_normal((24, 3))
    Z = rng.standard_normal((16, 3)) + 1j * rng.standard_normal((16, 3))
    assert np.abs(D.apply(X) - S @ X).max() <= 1e-10
    assert np.abs(D.apply_adjoint(Z) - S.conj().T @ Z).max() <= 1e-10
    assert np.abs(D.apply(X[:, 0]) - S @ X[:, 0]).max() <= 1e-10
    assert np.allclose(D.columns([3, 7]), S[:, [3, 7]])


def test_fourier_l1_n1_is_scalar():
    D = build_dictionary("fourier", 1, 1, substream(0, "x"))
    assert np.allclose(np.abs(D.materialize()), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["haar", "fourier"]),
       st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_linearity_and_adjointness(seed, kind, a, b):
    rng = substream(seed, "lin")
    D = build_dictionary(kind, 8, 12, rng)
    x = rng.standard_normal((12, 2)) + 1j * rng.standard_normal((12, 2))
    y = rng.standard_normal((12, 2)) + 1j * rng.standard_normal((12, 2))
    z = rng.standard_normal((8, 2)) + 1j * rng.standard_normal((8, 2))
    lhs = D.apply(a * x + b * y)
    assert np.allclose(lhs, a * D.apply(x) + b * D.apply(y), atol=1e-9 * (1 + abs(a) + abs(b)))
    # <S x, z> = <x, S^H z>
    assert np.isclose(np.vdot(D.apply(x), z), np.vdot(x, D.apply_adjoint(z)))


def test_haar_moments():
    n, reps = 6, 3000
    rng = substream(1, "haar")
    acc = np.zeros((n, n), complex)
    acc2 = np.zeros((n, n))
    for _ in range(reps):
        O = sample_haar_unitary(n, rng)
        acc += O
        acc2 += np.abs(O) ** 2
    # E O = 0 and E |O_ij|^2 = 1/n; the phase fix removes the QR sign bias on the diagonal
    assert np.abs(acc / reps).max() < 4 * np.sqrt(1 / (n * reps))
    assert np.abs(acc2 / reps - 1 / n).max() < 0.02


def test_haar_unitary():
    O = sample_haar_unitary(33, substream(0, "u"))
    assert np.allclose(O @ O.conj().T, np.eye(33))
    with pytest.raises(ValueError):
        sample_haar_unitary(0, substream(0, "u"))


def test_invalid_shapes():
    rng = substream(0, "bad")
    with pytest.raises(ValueError):
        build_dictionary("haar", 5, 4, rng)
    with pytest.raises(ValueError):
        build_dictionary("fourier", 0, 4, rng)
    D = build_dictionary("fourier", 4, 8, rng)
    with pytest.raises(ValueError):
        D.apply(np.zeros(7))
    with pytest.raises(ValueError):
        D.apply_adjoint(np.zeros(8))
    with pytest.raises(ValueError):
        SemiUnitaryDictionary(DictKind.SIGNED_FOURIER, 2, 4, signs=np.array([1.0, 2.0, 1.0, 1.0]),
                              selection=np.array([0, 1]))
    with pytest.raises(ValueError):
        DictKind.parse("wavelet")


def test_structure_roundtrip(tmp_path):
    D = build_dictionary("fourier", 16, 32, substream(3, "io"))
    p = tmp_path / "d.bin"
    D.dump_structure(p)
    E = SemiUnitaryDictionary.load_structure(p)
    assert np.array_equal(E.signs, D.signs) and np.array_equal(E.selection, D.selection)
    assert np.allclose(E.materialize(), D.materialize())
    assert p.stat().st_size == 8 + 8 + 32 + 4 * 16
    with pytest.raises(ValueError):
        build_dictionary("haar", 4, 4, substream(0, "h")).dump_structure(p)


def test_from_unitary_keeps_first_rows():
    O = sample_haar_unitary(6, substream(0, "fu"))
    D = SemiUnitaryDictionary.from_unitary(O, 4)
    assert np.allclose(D.materialize(), np.sqrt(6 / 4) * O[:4])
