import numpy as np
import pytest

from streamsvd import reference, synth
from streamsvd.linalg import InvalidArgumentError
from streamsvd.synth import SpectrumSpec


def test_power_law_eigenvalues():
    np.testing.assert_allclose(SpectrumSpec.power_law(4, 1.0).eigenvalues(),
                               [1, 1 / 2, 1 / 3, 1 / 4])


def test_spiked_eigenvalues():
    np.testing.assert_array_equal(SpectrumSpec.spiked(4, 2, 5.0).eigenvalues(), [5, 5, 1, 1])


@pytest.mark.parametrize("spec", [
    SpectrumSpec.power_law(4, 0.0),
    SpectrumSpec.spiked(4, 5, 2.0),
    SpectrumSpec.spiked(4, 2, 0.5),
    SpectrumSpec.explicit([1.0, 2.0]),
    SpectrumSpec.explicit([0.0, 0.0]),
    SpectrumSpec.explicit([1.0, -1.0]),
    SpectrumSpec.explicit([3.0, 2.0, 1.0], n=2),
])
def test_invalid_spectra(spec):
    with pytest.raises(InvalidArgumentError):
        synth.make_stream(spec)


def test_explicit_rank_two_subspace():
    handle = synth.make_stream(SpectrumSpec.explicit([4.0, 1.0, 0.0], seed=5))
    y = synth.next_block(handle, 50)
    assert np.linalg.matrix_rank(y, tol=1e-10) == 2
    np.testing.assert_allclose(handle.s_basis[:, 2] @ y, 0.0, atol=1e-12)


def test_explicit_rank_one_columns_on_first_axis():
    handle = synth.make_stream(SpectrumSpec.explicit([1.0], seed=2, n=5))
    y = synth.next_block(handle, 20)
    s1 = handle.s_basis[:, 0]
    np.testing.assert_allclose(y, np.outer(s1, s1 @ y), atol=1e-14)


def test_basis_orthonormal():
    handle = synth.make_stream(SpectrumSpec.power_law(30, 1.0, seed=9))
    np.testing.assert_allclose(handle.s_basis.T @ handle.s_basis, np.eye(30), atol=1e-12)


def test_sample_covariance_matches_spectrum():
    spec = SpectrumSpec.power_law(4, 1.0, seed=1)
    handle = synth.make_stream(spec)
    y = synth.next_block(handle, 100_000)
    empirical = np.sort(np.linalg.eigvalsh(y @ y.T / y.shape[1]))[::-1]
    np.testing.assert_allclose(empirical, spec.eigenvalues(), rtol=0.05)
    assert handle.cursor == 100_000


def test_deterministic_and_block_split_independent():
    spec = SpectrumSpec.spiked(6, 2, 4.0, seed=77)
    whole = synth.generate(spec, 12)
    again = synth.generate(spec, 12)
    assert np.array_equal(whole, again)
    h = synth.make_stream(spec)
    pieces = np.hstack([synth.next_block(h, k) for k in (1, 4, 7)])
    np.testing.assert_array_equal(pieces, whole)
    assert not np.array_equal(synth.generate(spec.with_seed(78), 12), whole)


def test_gaussian_matrix_moments():
    g = synth.sample_gaussian_matrix(1000, 1000, seed=3)
    assert abs(g.mean()) <= 4 / np.sqrt(g.size)
    assert g.var() == pytest.approx(1.0, rel=0.02)
    assert np.array_equal(g[:5, :5], synth.sample_gaussian_matrix(1000, 1000, seed=3)[:5, :5])


@pytest.mark.parametrize("seed", range(3))
def test_empirical_residual_near_population_tail(seed):
    spec = SpectrumSpec.power_law(40, 1.0, seed=seed)
    y = synth.generate(spec, 2000)
    ratio = reference.residual_sq(y, 5) / y.shape[1] / spec.tail(5)
    assert 1 / 3 <= ratio <= 3
