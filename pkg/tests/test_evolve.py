import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sps

from fermipolaron.evolve import (
    EvolutionReport, Propagator, cor_gap, fit_growth_constant, laplacian_diagnostic,
    moment_growth, oracle_n_max, propagate, thm1_residual, thm2_residual,
)
from fermipolaron.hamiltonians import Truncated, desk_kF1_small, desk_kF2


def random_hermitian(n, rng, density=0.05):
    A = sps.random(n, n, density=density, random_state=np.random.RandomState(rng.integers(1 << 31)),
                   dtype=float) + 1j * sps.random(n, n, density=density,
                                                  random_state=np.random.RandomState(rng.integers(1 << 31)))
    return ((A + A.conj().T) / 2).tocsr()


@pytest.fixture(scope="module")
def small():
    return desk_kF1_small(0.5, M=1)


def test_zero_time_and_norm():
    rng = np.random.default_rng(0)
    H = random_hermitian(50, rng)
    psi = rng.standard_normal(50) + 0j
    psi /= np.linalg.norm(psi)
    assert np.array_equal(propagate(H, psi, 0.0), psi)
    assert np.linalg.norm(propagate(H, psi, 3.0)) == pytest.approx(1.0, abs=1e-12)


def test_dense_matches_expm():
    rng = np.random.default_rng(1)
    H = random_hermitian(40, rng, 0.2)
    psi = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    want = sla.expm(-1j * 0.7 * H.toarray()) @ psi
    assert np.allclose(propagate(H, psi, 0.7), want, atol=1e-12)


def test_krylov_matches_dense():
    rng = np.random.default_rng(2)
    H = random_hermitian(300, rng, 0.03)
    psi = rng.standard_normal(300) + 1j * rng.standard_normal(300)
    psi /= np.linalg.norm(psi)
    dense = Propagator(H)
    kry = Propagator(H, dense_max=0)
    assert not kry.dense
    for t in (0.1, 2.0, 10.0):
        assert np.linalg.norm(kry(psi, t) - dense(psi, t)) < 1e-10


def test_semigroup():
    rng = np.random.default_rng(3)
    H = random_hermitian(200, rng, 0.05)
    psi = rng.standard_normal(200) + 0j
    p = Propagator(H, dense_max=0)
    assert np.linalg.norm(p(p(psi, 0.4), 0.9) - p(psi, 1.3)) < 1e-8
    traj = p.trajectory(psi, [0.4, 1.3])
    assert np.linalg.norm(traj[1] - p(psi, 1.3)) < 1e-8


def test_rejects_non_hermitian():
    with pytest.raises(ValueError):
        Propagator(sps.csr_matrix(np.array([[0, 1], [0, 0]], dtype=complex)))


def test_report_validation_and_csv():
    r = EvolutionReport("x", [0.0, 1.0], {"a": [1.0, 2.0]}, {"k": 1})
    text = r.to_csv()
    assert "t,a" in text and "# report = x" in text
    with pytest.raises(ValueError):
        EvolutionReport("x", [0.0, 1.0], {"a": [1.0]})


def test_fit_growth_constant():
    grid = np.linspace(0, 1, 11)
    res = 0.3 * np.expm1(0.3 * 2.0 * grid) * 0.1
    assert fit_growth_constant(res, grid, 2.0, 0.1) == pytest.approx(0.3, rel=1e-9)
    assert fit_growth_constant(np.zeros(11), grid, 2.0, 0.1) == 0.0


def test_thm1_small(small):
    grid = np.linspace(0.05, 1.0, 8)
    r = thm1_residual(small, grid)
    res, duh = r.column("residual"), r.column("duhamel")
    assert np.all(res <= duh * (1 + 1e-6) + 1e-12)
    assert r.metadata["lipschitz_ok"]
    assert r.column("norm_drift").max() < 1e-10
    assert np.all(r.column("bound_fit") >= res - 1e-15)


def test_thm2_oracle_and_fermionic(small):
    grid = np.linspace(0.0, 1.0, 6)
    o = thm2_residual(small, grid, kind="oracle", n_max=20)
    assert o.column("residual").max() < 1e-6
    assert o.column("tail_mass").max() < 1e-10
    assert np.all(o.column("residual") <= o.column("duhamel") + 1e-9)
    f = thm2_residual(small, grid, kind="fermionic")
    assert f.column("residual")[0] == pytest.approx(0.0, abs=1e-14)
    assert np.all(f.column("residual") <= f.column("duhamel") * (1 + 1e-6) + 1e-12)
    assert f.metadata["lipschitz_ok"]
    with pytest.raises(ValueError):
        thm2_residual(small, grid, kind="bogus")


def test_oracle_n_max_grows_with_coupling(small):
    grid = np.linspace(0, 2, 5)
    n1 = oracle_n_max(small.coherent_params(), grid)
    n2 = oracle_n_max(desk_kF1_small(1.5, M=1).coherent_params(), grid)
    assert 1 <= n1 <= n2


def test_cor_gap(small):
    r = cor_gap(small, [0.0, 0.5, 1.0])
    assert r.column("gap")[0] == 0.0
    assert set(r.column("gap_ge_floor")) <= {0.0, 1.0}


@pytest.mark.parametrize("flow", ["heff", "weyl"])
def test_moment_growth(flow):
    m = desk_kF2(0.5)
    for n in (1, 2, 3):
        r = moment_growth(m, n, np.linspace(0, 1, 6), flow=flow)
        assert np.all(r.column("moment") <= r.column("bound") * (1 + 1e-12))
        assert r.column("moment")[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        moment_growth(m, 4, [0.1])


def test_laplacian_diagnostic():
    m = desk_kF1_small(0.5, M=1, imp=Truncated(1.0, 0.5))
    r = laplacian_diagnostic(m, [0.0, 0.2, 0.5])
    assert r.column("value")[0] == pytest.approx(0.0)
    assert np.all(r.column("value") <= r.metadata["C_fit"] * r.column("shape") + 1e-12)
    with pytest.raises(ValueError):
        laplacian_diagnostic(desk_kF1_small(0.5, M=1), [0.1])
