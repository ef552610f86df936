import numpy as np
import pytest

from conftest import as_sparse
from dashsvd import rsvd
from dashsvd.analysis import ReferenceSpectrum, eps_pve
from dashsvd.dense import oracle_svd
from dashsvd.errors import ConfigError, ShapeError
from dashsvd.rsvd import (
    SolverConfig,
    basic_rsvd,
    dash_svd,
    pve_stop_check,
    shifted_rsvd,
    solve,
    update_shift,
)
from dashsvd.sparse import transpose
from dashsvd.synthetic import dense2, dense2_spectrum, random_sparse

DIAG4 = as_sparse(np.diag([4.0, 3.0, 2.0, 1.0]))


def cfg(**kw):
    return SolverConfig(**kw)


def orthonormality_error(Q):
    return np.abs(Q.T @ Q - np.eye(Q.shape[1])).max()


@pytest.fixture(scope="module")
def dense2_300():
    return dense2(300, seed=0), ReferenceSpectrum(dense2_spectrum(300))


# ---------------------------------------------------------------- config


def test_config_defaults():
    c = SolverConfig(k=10)
    assert (c.s, c.p_max, c.tol, c.algorithm, c.orthonormalizer) == (5, 1000, 1e-2, "dash", "eigsvd")
    assert SolverConfig(k=1).s == 1
    assert SolverConfig(k=4, p=1, algorithm="basic").orthonormalizer == "qr"


@pytest.mark.parametrize(
    "kw",
    [
        dict(k=0),
        dict(k=3, s=-1),
        dict(k=3, tol=0.0),
        dict(k=3, p_max=0),
        dict(k=3, s=0),  # dash reads index k+1
        dict(k=3, algorithm="lanczos"),
        dict(k=3, algorithm="basic"),  # needs p
        dict(k=3, p=-1, algorithm="shifted"),
        dict(k=3, p=1, algorithm="basic", orthonormalizer="svd"),
        dict(k=3, orthonormalizer="qr"),
        dict(k=3, shift_update="sometimes"),
        dict(k=3, threads=0),
    ],
)
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        SolverConfig(**kw)


def test_rank_larger_than_matrix_is_rejected():
    with pytest.raises(ShapeError):
        solve(DIAG4, cfg(k=3, s=2))


# ---------------------------------------------------------------- basic


def test_basic_diagonal():
    S = basic_rsvd(DIAG4, cfg(k=2, s=1, p=2, algorithm="basic")).S
    # with l = 3 of 4 directions the second value converges like (1/3)^(4p+2)
    np.testing.assert_allclose(S, [4.0, 3.0], atol=1e-4)
    for seed in range(20):
        S = basic_rsvd(DIAG4, cfg(k=2, s=1, p=5, seed=seed, algorithm="basic")).S
        np.testing.assert_allclose(S, [4.0, 3.0], atol=1e-6)


def test_basic_rank_one_is_exact(rng):
    u, v = rng.standard_normal(7), rng.standard_normal(5)
    A = as_sparse(np.outer(u, v))
    res = basic_rsvd(A, cfg(k=1, s=1, p=0, algorithm="basic"))
    assert abs(res.S[0] - np.linalg.norm(u) * np.linalg.norm(v)) <= 1e-10 * res.S[0]


@pytest.mark.parametrize("orth", ["qr", "eigsvd"])
def test_basic_underestimates(orth):
    A = random_sparse(100, 60, 900, seed=17)
    sigma = oracle_svd(A.to_dense()).S
    res = basic_rsvd(A, cfg(k=10, p=1, algorithm="basic", orthonormalizer=orth))
    assert np.all(res.S <= sigma[:10] * (1 + 1e-10))
    assert orthonormality_error(res.U) < 1e-8
    assert orthonormality_error(res.V) < 1e-8


# ---------------------------------------------------------------- shift rule


@pytest.mark.parametrize("alpha, s_ll, expected", [(0.0, 0.5, 0.25), (0.3, 0.2, 0.3), (0.25, 0.35, 0.30)])
def test_update_shift(alpha, s_ll, expected):
    assert update_shift(alpha, s_ll) == pytest.approx(expected, abs=1e-15)
    assert update_shift(alpha, s_ll) >= alpha


# ---------------------------------------------------------------- shifted


def test_shift_becomes_positive():
    A = as_sparse(np.diag([4.0, 3.0, 2.0, 1.0, 0.0, 0.0]))
    _, trace = shifted_rsvd(A, cfg(k=2, s=2, p=3, algorithm="shifted"))
    assert trace.alphas[0] == 0.0
    assert trace.alphas[1] > 0.0
    assert trace.stop_reason == "fixed_p" and trace.stopped_at == 3


def test_shifted_beats_basic_on_dense2(dense2_300):
    A, ref = dense2_300
    for p in (4, 8, 12):
        basic = basic_rsvd(A, cfg(k=30, s=15, p=p, seed=3, algorithm="basic"))
        shifted, _ = shifted_rsvd(A, cfg(k=30, s=15, p=p, seed=3, algorithm="shifted"))
        assert eps_pve(A, shifted.U, ref) <= eps_pve(A, basic.U, ref)


def test_shift_trace_bounds(dense2_300):
    A, ref = dense2_300
    l = 45
    _, trace = shifted_rsvd(A, cfg(k=30, s=15, p=15, algorithm="shifted"))
    assert np.all(np.diff(trace.alphas) >= 0)
    assert trace.alphas[-1] <= ref.sigmas[l - 1] ** 2 / 2 + 1e-9


def test_fixed_shift_variant_freezes_after_first_step(dense2_300):
    A, _ = dense2_300
    _, trace = shifted_rsvd(A, cfg(k=30, s=15, p=6, algorithm="shifted", shift_update="fixed"))
    assert trace.alphas[0] == 0.0
    assert np.all(trace.alphas[1:] == trace.alphas[1])
    assert trace.alphas[1] == pytest.approx(trace.s_hat_history[0][-1] / 2)


def test_svd_orthonormalizer_matches_eigsvd(dense2_300):
    A, _ = dense2_300
    a, _ = shifted_rsvd(A, cfg(k=10, s=5, p=6, algorithm="shifted"))
    b, _ = shifted_rsvd(A, cfg(k=10, s=5, p=6, algorithm="shifted", orthonormalizer="svd"))
    np.testing.assert_allclose(a.S, b.S, rtol=1e-8)


def test_accuracy_improves_with_p():
    A = dense2(200, seed=5)
    ref = ReferenceSpectrum(dense2_spectrum(200))
    failures = trials = 0
    for seed in range(10):
        errs = {
            p: eps_pve(A, shifted_rsvd(A, cfg(k=20, s=10, p=p, seed=seed, algorithm="shifted"))[0].U, ref)
            for p in (0, 4, 8)
        }
        for p in (0, 4):
            trials += 1
            failures += errs[p + 4] > errs[p]
    assert failures <= 0.1 * trials


def test_callback_sees_every_step(dense2_300):
    A, _ = dense2_300
    seen = []
    _, trace = shifted_rsvd(A, cfg(k=5, s=3, p=4, algorithm="shifted"), callback=seen.append)
    assert [s.iteration for s in seen] == [1, 2, 3, 4]
    assert [s.alpha for s in seen] == trace.alphas.tolist()
    for state in seen:
        assert orthonormality_error(state.Q) < 1e-9
        assert np.all(np.diff(state.s_hat) <= 0)


# ---------------------------------------------------------------- stopping rule


def test_pve_stop_check_examples():
    assert not pve_stop_check([3.90, 1.00], 0.0, [4.00, 1.00], 0.05, k=1, tol=0.01)
    assert pve_stop_check([4.00, 1.00], 0.05, [4.005, 1.00], 0.05, k=1, tol=0.01)
    same = np.array([5.0, 2.0, 1.0])
    assert pve_stop_check(same, 0.3, same, 0.3, k=2, tol=1e-300)


def test_pve_stop_check_boundary_ratio():
    # ratio 0.15 / 1.05
    assert pve_stop_check([3.90, 1.00], 0.0, [4.00, 1.00], 0.05, k=1, tol=0.1429)
    assert not pve_stop_check([3.90, 1.00], 0.0, [4.00, 1.00], 0.05, k=1, tol=0.1428)


def test_pve_stop_check_needs_k_plus_one_values():
    with pytest.raises(ShapeError):
        pve_stop_check([1.0, 0.5], 0.0, [1.0, 0.5], 0.0, k=2, tol=0.1)


# ---------------------------------------------------------------- dash


def test_dash_huge_tolerance_stops_immediately(dense2_300):
    A, _ = dense2_300
    _, trace = dash_svd(A, cfg(k=10, tol=1e9))
    assert (trace.stopped_at, trace.stop_reason) == (1, "tol_met")


def test_dash_cap_binds(dense2_300):
    A, _ = dense2_300
    _, trace = dash_svd(A, cfg(k=10, tol=1e-15, p_max=3))
    assert (trace.stopped_at, trace.stop_reason) == (3, "p_max_reached")
    assert len(trace.alphas) == 3


def test_dash_meets_tolerance_on_dense2(dense2_300):
    A, ref = dense2_300
    res, trace = dash_svd(A, cfg(k=30, s=15, tol=1e-2))
    assert trace.stop_reason == "tol_met"
    assert eps_pve(A, res.U, ref) <= 5e-2


def test_dash_on_tiny_diagonal():
    res, trace = dash_svd(as_sparse(np.diag([1.0, 2.0])), cfg(k=1, tol=1e-2))
    assert res.S[0] == pytest.approx(2.0, rel=1e-14)
    assert trace.stop_reason == "tol_met"


# ---------------------------------------------------------------- orientation


@pytest.mark.parametrize("alg", ["basic", "shifted", "dash"])
def test_transpose_duality(alg):
    A = random_sparse(60, 100, 900, seed=23)
    c = cfg(k=8, s=4, p=3, algorithm=alg) if alg != "dash" else cfg(k=8, s=4)
    a, _ = solve(A, c)
    b, _ = solve(transpose(A), c)
    np.testing.assert_allclose(a.S, b.S, rtol=1e-9)
    assert a.U.shape == (60, 8) and a.V.shape == (100, 8)
    # the sign convention pins V, so swapped factors agree up to column signs
    signs = np.sign(np.sum(a.U * b.V, axis=0))
    np.testing.assert_allclose(a.U, b.V * signs, atol=1e-9)
    np.testing.assert_allclose(a.V, b.U * signs, atol=1e-9)


def test_square_input_takes_direct_path(monkeypatch, sparse_40x20):
    A = random_sparse(30, 30, 200, seed=6)

    def forbidden(_):
        raise AssertionError("square input must not be transposed")

    monkeypatch.setattr(rsvd, "_transpose", forbidden)
    solve(A, cfg(k=4))
    with pytest.raises(AssertionError):
        solve(transpose(sparse_40x20), cfg(k=4))


def test_dense_and_sparse_inputs_agree():
    A = random_sparse(80, 50, 700, seed=31)
    a, _ = solve(A, cfg(k=6, s=3))
    b, _ = solve(A.to_dense(), cfg(k=6, s=3))
    np.testing.assert_allclose(a.S, b.S, rtol=1e-12)


def test_sign_convention_on_results():
    A = random_sparse(70, 40, 500, seed=8)
    for alg in ("basic", "shifted", "dash"):
        res, _ = solve(A, cfg(k=5, p=2, algorithm=alg) if alg != "dash" else cfg(k=5))
        for col in res.V.T:
            assert col[np.flatnonzero(col)[0]] > 0


def test_results_have_orthonormal_factors_and_small_residual():
    A = random_sparse(120, 80, 1500, seed=12)
    res, _ = dash_svd(A, cfg(k=10, tol=1e-4))
    assert orthonormality_error(res.U) < 1e-8
    assert orthonormality_error(res.V) < 1e-8
    R = A.to_dense() @ res.V - res.U * res.S
    assert np.all(np.isfinite(np.linalg.norm(R, axis=0)))
