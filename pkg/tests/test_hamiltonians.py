import numpy as np
import pytest
import scipy.sparse as sps

from fermipolaron.fock import ExcitationCutoff, max_abs
from fermipolaron.hamiltonians import (
    ImpurityBasis, Truncated, apply_weyl, build_b, build_b_dagger, build_micro,
    build_nonbosonizable, commutator_residual_bos, commutator_residual_lin, desk_kF1,
    desk_kF1_small, desk_kF2, dropped_hops, e_of, kinetic, lin_weight_residual,
    nonbosonizable_normal_ordered, weyl,
)


@pytest.fixture(scope="module")
def small():
    return desk_kF1_small(0.8, M=1)


@pytest.fixture(scope="module")
def kf2():
    return desk_kF2(0.6)


def test_e_signs(small):
    assert e_of(small.ph, (0, 0, 1)) == -1.0
    assert e_of(small.ph, (0, 0, 0)) == 0.0
    assert e_of(small.ph, (1, 0, 1)) == 2.0


def test_reconstruction_small(small):
    H = small.H_micro_ph()
    assert max_abs(H - H.conj().T) < 1e-14
    assert max_abs(small.reconstruction() - H) <= 1e-12


def test_reconstruction_kf2(kf2):
    assert kf2.dim == 4941
    assert max_abs(kf2.reconstruction() - kf2.H_micro_ph()) <= 1e-12


@pytest.mark.slow
def test_reconstruction_kf1():
    m = desk_kF1(1.0)
    assert m.dim == 50388
    assert max_abs(m.reconstruction() - m.H_micro_ph()) <= 1e-12


def test_reconstruction_with_moving_impurity():
    m = desk_kF1_small(0.7, imp=Truncated(1.0, 0.5))
    assert m.dim == 7 * 1024
    assert max_abs(m.reconstruction() - m.H_micro_ph()) <= 1e-12


def test_H0_is_transformed_kinetic_energy(small):
    R = small.R
    K = R.conj().T @ kinetic(small.micro) @ R
    EpW = small.ball.EpW
    assert max_abs(K - small.H0() - EpW * sps.identity(small.dim)) < 1e-12



def test_H0_nonnegative_on_neutral_sector(kf2):
    assert np.all(kf2.H0().diagonal().real >= 0)


def test_no_coupling(small):
    m = desk_kF1_small(0.0, M=1)
    assert max_abs(m.Phi()) == 0
    assert max_abs(m.H_micro_ph() - m.H0() - m.ball.EpW * sps.identity(m.dim)) < 1e-12


def test_b_is_adjoint(small):
    bd = build_b_dagger(small.ph, small.V, small.lam)
    b = build_b(small.ph, small.V, small.lam)
    assert max_abs(bd.conj().T - b) == 0
    assert max_abs(small.N @ bd - bd @ (small.N + 2 * sps.identity(small.dim))) == 0


def test_nonbosonizable_normal_ordering(small):
    op, const = nonbosonizable_normal_ordered(small.ph, small.V, small.lam)
    assert const == 0.0
    assert max_abs(op - build_nonbosonizable(small.ph, small.V, small.lam)) < 1e-15
    E = small.E_nonbos()
    assert max_abs(E - E.conj().T) < 1e-15
    assert max_abs(E @ small.N - small.N @ E) == 0


def test_strict_micro_rejects_dropped_hops(small):
    assert dropped_hops(small.modes, small.V)
    with pytest.raises(ValueError):
        build_micro(small.micro, small.ball, small.V, small.lam)


def test_linear_residual_matches_weights(kf2):
    for i, pm in enumerate(kf2.pair_modes):
        via_comm = commutator_residual_lin(kf2.H0(), kf2.alg, i, kf2.kF)
        assert max_abs(via_comm - lin_weight_residual(kf2.ph, pm, kf2.kF)) < 1e-12


def test_bosonic_residual_vanishes_on_vacuum(kf2):
    vac = kf2.vacuum()
    for i in range(len(kf2.pair_modes)):
        assert np.linalg.norm(commutator_residual_bos(kf2.DB(), kf2.alg, i, kf2.kF) @ vac) < 1e-12


def test_H_eff_hermitian_and_vacuum_energy(kf2):
    H = kf2.H_eff()
    assert max_abs(H - H.conj().T) < 1e-14
    vac = kf2.vacuum()
    assert np.vdot(vac, kf2.H_eff_tilde() @ vac).real == pytest.approx(kf2.ball.EpW)


def test_weyl_unitary_and_commutes(small):
    rng = np.random.default_rng(3)
    eta = rng.standard_normal(len(small.pair_modes)) + 1j * rng.standard_normal(len(small.pair_modes))
    B = small.B_of(0.3 * eta)
    W = weyl(B)
    assert np.allclose(W.conj().T @ W, np.eye(small.dim), atol=1e-12)
    Bd = B.toarray()
    assert np.allclose(W @ Bd, Bd @ W, atol=1e-12)
    psi = small.ph.random_state(rng)
    assert np.allclose(apply_weyl(B, psi, -1.0), W.conj().T @ psi, atol=1e-12)
    f = weyl(B, dense_max=0)
    assert np.allclose(f(psi), W @ psi, atol=1e-10)
    with pytest.raises(ValueError):
        weyl(sps.identity(4, format="csr"))


def test_impurity_basis():
    ib = ImpurityBasis(1.0)
    assert ib.dim == 7
    S = ib.shift((1, 0, 0))
    assert S.nnz == 2
    assert max_abs(ib.shift((-1, 0, 0)) - S.T) == 0
    assert ib.laplacian().diagonal().real.sum() == 6
    assert ib.plane_wave((0, 0, 0))[ib.index[(0, 0, 0)]] == 1.0


def test_sector_shrinks_with_cutoff():
    assert desk_kF2(0.5, m=2).dim < desk_kF2(0.5, m=4).dim
    assert isinstance(desk_kF2(0.5).sector, ExcitationCutoff)
