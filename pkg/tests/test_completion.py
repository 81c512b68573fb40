import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import exact_line_objective, golden_section

from tensordesing import tucker_geometry as tg
from tensordesing.completion import (
    CompletionObjective, CompletionProblem, core_singular_values, egrad_sparse, ehess_completion, errors,
    ingest_ratings, objective, sample_count, sample_phi, sample_tangent, split_train_test, sv_error,
    sv_total, synth_generate,
)
from tensordesing.errors import DataError, PreconditionError
from tensordesing.tensor_core import SparseTensor, make_rng, tucker_rank, unfold


def _all_entries(dims):
    lin = np.arange(int(np.prod(dims)))
    return np.stack(np.unravel_index(lin, dims, order="F"), axis=1)


def _random_obs(dims, m, seed, values=None):
    rng = make_rng(seed)
    lin = rng.choice(int(np.prod(dims)), m, replace=False)
    idx = np.stack(np.unravel_index(lin, dims, order="F"), axis=1)
    return SparseTensor(dims, idx, rng.standard_normal(m) if values is None else values)


def _problem(x_truth, m, seed):
    dims = x_truth.dims
    dense = tg.phi(x_truth)
    rng = make_rng(seed)
    lin = rng.choice(int(np.prod(dims)), 2 * m, replace=False)
    idx = np.stack(np.unravel_index(lin, dims, order="F"), axis=1)
    vals = dense[tuple(idx.T)]
    return CompletionProblem(SparseTensor(dims, idx[:m], vals[:m]), SparseTensor(dims, idx[m:], vals[m:]), x_truth)


def test_sample_phi_single_entry_rank_one():
    core = np.array([[[3.0]]])
    us = [np.array([[0.6], [0.8]]), np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])]
    x = tg.TuckerPoint(core, us)
    obs = SparseTensor((2, 2, 2), np.array([[1, 0, 1]]), np.array([0.0]))
    assert sample_phi(x, obs)[0] == pytest.approx(3.0 * 0.8 * 1.0 * 1.0, rel=1e-15)


def test_sample_phi_all_entries_equals_dense():
    x = tg.random_point((3, 4, 2), (2, 2, 2), 0)
    idx = _all_entries(x.dims)
    obs = SparseTensor(x.dims, idx, np.zeros(len(idx)))
    np.testing.assert_allclose(sample_phi(x, obs), tg.phi(x).ravel(order="F"), atol=1e-14)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31), d=st.integers(2, 4))
def test_sampled_evaluation_matches_dense(seed, d):
    rng = np.random.default_rng(seed)
    dims = tuple(int(v) for v in rng.integers(2, 9, size=d))
    ranks = tuple(int(rng.integers(1, n + 1)) for n in dims)
    x = tg.random_point(dims, ranks, seed)
    xi = tg.random_tangent(x, seed + 1)
    obs = _random_obs(dims, int(rng.integers(1, np.prod(dims) + 1)), seed)
    dense, dense_dot = tg.phi(x), tg.tangent_tensor(xi)
    sel = tuple(obs.indices.T)
    assert np.abs(sample_phi(x, obs) - dense[sel]).max() <= 1e-12 * max(1.0, np.abs(dense).max())
    assert np.abs(sample_tangent(x, xi, obs) - dense_dot[sel]).max() <= 1e-12 * max(1.0, np.abs(dense_dot).max())


def test_sample_tangent_trivial_cases():
    x = tg.random_point((6, 5, 4), (2, 3, 2), 1)
    obs = _random_obs(x.dims, 30, 2)
    assert np.abs(sample_tangent(x, tg.zero_tangent(x), obs)).max() == 0.0
    xi = tg.random_tangent(x, 3)
    core_only = tg.TuckerTangent(xi.core_dot, [np.zeros_like(u) for u in x.factors], x)
    np.testing.assert_allclose(sample_tangent(x, core_only, obs),
                               sample_phi(tg.TuckerPoint(xi.core_dot, x.factors), obs), atol=1e-14)


def test_dims_mismatch_is_an_error():
    x = tg.random_point((4, 4, 4), (2, 2, 2), 0)
    with pytest.raises(DataError):
        sample_phi(x, _random_obs((4, 4, 5), 5, 0))


def test_objective_and_gradient():
    truth = tg.random_point((6, 5, 4), (2, 2, 2), 4)
    prob = _problem(truth, 40, 5)
    assert objective(truth, prob) <= 1e-28
    assert np.abs(egrad_sparse(truth, prob).values).max() <= 1e-14
    zero = tg.TuckerPoint(np.zeros(truth.ranks), truth.factors)
    assert objective(zero, prob) == pytest.approx(0.5 * float(prob.train.values @ prob.train.values), rel=1e-14)

    x = tg.random_point(truth.dims, truth.ranks, 6)
    xi = tg.random_tangent(x, 7)
    g = egrad_sparse(x, prob)
    t = 1e-6
    moved = tg.TuckerPoint(x.core + t * xi.core_dot, [u + t * v for u, v in zip(x.factors, xi.factor_dots)])
    fd = (objective(moved, prob) - objective(x, prob)) / t
    an = float(g.values @ sample_tangent(x, xi, prob.train))
    assert abs(fd - an) <= 1e-5 * abs(an)


def test_sparse_gradient_matches_dense_path():
    truth = tg.random_point((6, 5, 4), (2, 2, 2), 8)
    prob = _problem(truth, 40, 9)
    x = tg.random_point(truth.dims, truth.ranks, 10)
    g = egrad_sparse(x, prob)
    a = tg.riem_grad(x, g).to_vector()
    b = tg.riem_grad(x, g.to_dense()).to_vector()
    assert np.abs(a - b).max() <= 1e-12 * max(1.0, np.abs(b).max())


def test_hessian_callback():
    truth = tg.random_point((5, 5, 4), (2, 2, 2), 11)
    x = tg.random_point(truth.dims, truth.ranks, 12)
    prob = _problem(truth, 30, 13)
    assert np.abs(ehess_completion(x, tg.zero_tangent(x), prob).values).max() == 0.0
    xi = tg.random_tangent(x, 14)
    h = ehess_completion(x, xi, prob)
    st_ = sample_tangent(x, xi, prob.train)
    np.testing.assert_array_equal(h.values, st_)
    form = float(np.sum(h.to_dense() * tg.tangent_tensor(xi)))
    assert abs(form - float(st_ @ st_)) <= 1e-12 * float(st_ @ st_)
    idx = _all_entries(x.dims)
    full = CompletionProblem(SparseTensor(x.dims, idx, np.zeros(len(idx))), SparseTensor(x.dims, idx[:0], np.zeros(0)))
    np.testing.assert_allclose(ehess_completion(x, xi, full).to_dense(), tg.tangent_tensor(xi), atol=1e-13)


def test_exact_step_matches_golden_section():
    truth = tg.random_point((6, 5, 4), (2, 2, 2), 15)
    prob = _problem(truth, 50, 16)
    obj = CompletionObjective(prob)
    x = tg.random_point(truth.dims, truth.ranks, 17)
    eta = -tg.riem_grad(x, obj.egrad(x))
    s = obj.exact_step(x, eta)
    xdot = sample_tangent(x, eta, prob.train)
    res = obj.residual(x)
    oracle = golden_section(exact_line_objective(xdot, -res), -50.0, 50.0)
    assert abs(s - oracle) <= 1e-8


def test_errors():
    truth = tg.random_point((6, 5, 4), (2, 2, 2), 18)
    prob = _problem(truth, 40, 19)
    tr, te = errors(truth, prob)
    assert tr <= 1e-14 and te <= 1e-14
    zero = tg.TuckerPoint(np.zeros(truth.ranks), truth.factors)
    assert errors(zero, prob) == (1.0, 1.0)
    x = tg.random_point(truth.dims, truth.ranks, 20)
    tr, _ = errors(x, prob)
    assert tr ** 2 * prob.train.norm() ** 2 == pytest.approx(2 * objective(x, prob), rel=1e-12)
    bad = CompletionProblem(prob.train.with_values(np.zeros(prob.train.count)), prob.test)
    with pytest.raises(PreconditionError):
        errors(x, bad)


def test_singular_value_error():
    truth = tg.random_point((6, 5, 4), (3, 2, 2), 21)
    assert sv_error(truth, truth) <= 1e-13
    zero = tg.TuckerPoint(np.zeros(truth.ranks), truth.factors)
    assert sv_error(zero, truth) == pytest.approx(sv_total(truth), rel=1e-14)
    dense = tg.phi(truth)
    for k, s in enumerate(core_singular_values(truth)):
        oracle = np.linalg.svd(unfold(dense, k), compute_uv=False)[: truth.ranks[k]]
        assert np.abs(s - oracle).max() <= 1e-10


def test_synthetic_generation():
    prob = synth_generate((5, 4, 3), (2, 2, 2), 1.0 / 60, 0)
    assert prob.train.count == 1 and prob.test.count == 1
    assert sample_count((400, 400, 400), 0.01) == 640000
    for seed in range(5):
        prob = synth_generate((10, 9, 8), (3, 2, 4), 0.1, seed)
        assert tucker_rank(tg.phi(prob.truth)) == (3, 2, 4)
        assert prob.train.count == prob.test.count == 72
        assert np.intersect1d(prob.train.linear_indices(), prob.test.linear_indices()).size == 0
        assert np.unique(prob.train.linear_indices()).size == 72
        np.testing.assert_allclose(prob.train.values, tg.phi(prob.truth)[tuple(prob.train.indices.T)], atol=1e-14)
    a, b = synth_generate((10, 9, 8), (2, 2, 2), 0.05, 3), synth_generate((10, 9, 8), (2, 2, 2), 0.05, 3)
    np.testing.assert_array_equal(a.train.indices, b.train.indices)
    np.testing.assert_array_equal(a.test.values, b.test.values)
    with pytest.raises(PreconditionError):
        synth_generate((5, 4, 3), (2, 2, 2), 0.0, 0)
    with pytest.raises(PreconditionError):
        synth_generate((5, 4, 3), (2, 2, 2), 0.6, 0)


def test_synthetic_sparse_sampler_is_uniform_enough():
    # The rejection sampler path (small p) must still give distinct, in-range indices.
    prob = synth_generate((60, 50, 40), (2, 2, 2), 0.01, 1)
    lin = np.concatenate([prob.train.linear_indices(), prob.test.linear_indices()])
    assert np.unique(lin).size == lin.size == 2 * 1200
    assert lin.min() >= 0 and lin.max() < 60 * 50 * 40


def test_problem_rejects_overlap():
    obs = _random_obs((4, 4, 4), 10, 0)
    with pytest.raises(DataError):
        CompletionProblem(obs, obs)


def test_ingest_examples(tmp_path):
    p = tmp_path / "one.dat"
    p.write_text("1::1::5::0\n")
    obs = ingest_ratings(p)
    assert obs.dims == (1, 1, 1) and obs.count == 1
    assert obs.indices.tolist() == [[0, 0, 0]] and obs.values.tolist() == [5.0]
    p.write_text("1::2::3::100\n2::1::4::604900\n")
    obs = ingest_ratings(p, 604800)
    assert sorted(obs.indices[:, 2].tolist()) == [0, 1]
    assert obs.dims == (2, 2, 2)


def test_ingest_duplicates_last_write_wins(tmp_path):
    p = tmp_path / "dup.dat"
    p.write_text("3::4::1::0\n3::4::2::10\n3::4::5::604800\n1::1::4::5\n")
    obs = ingest_ratings(p)
    got = {tuple(i): v for i, v in zip(obs.indices.tolist(), obs.values.tolist())}
    assert got == {(2, 3, 0): 2.0, (2, 3, 1): 5.0, (0, 0, 0): 4.0}


@pytest.mark.parametrize("text,line", [
    ("1::1::5::0\n1::1::5\n", 2),
    ("1::x::5::0\n", 1),
    ("1::1::5::0\n\n1::1::abc::3\n", 3),
    ("0::1::5::0\n", 1),
    ("1::1::nan::0\n", 1),
])
def test_ingest_malformed_lines(tmp_path, text, line):
    p = tmp_path / "bad.dat"
    p.write_text(text)
    with pytest.raises(DataError) as err:
        ingest_ratings(p)
    assert err.value.line == line


def test_ingest_empty_and_bad_period(tmp_path):
    p = tmp_path / "empty.dat"
    p.write_text("\n")
    with pytest.raises(DataError):
        ingest_ratings(p)
    with pytest.raises(PreconditionError):
        ingest_ratings(p, 0)


def test_split():
    obs = _random_obs((6, 5, 4), 30, 0)
    prob = split_train_test(obs, 30, 1)
    assert prob.test.count == 0 and prob.train.count == 30
    prob = split_train_test(obs, 21, 1)
    assert prob.train.count + prob.test.count == 30
    again = split_train_test(obs, 21, 1)
    np.testing.assert_array_equal(prob.train.indices, again.train.indices)
    merged = np.sort(np.concatenate([prob.train.linear_indices(), prob.test.linear_indices()]))
    np.testing.assert_array_equal(merged, np.sort(obs.linear_indices()))
    with pytest.raises(PreconditionError):
        split_train_test(obs, 31, 1)
