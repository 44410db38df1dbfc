import numpy as np
import pytest

from streamsvd import moses, reference, synth
from streamsvd.linalg import InvalidArgumentError, svd_truncate
from streamsvd.moses import FlushPolicy, MosesConfig

from conftest import rel_fro, split_blocks

NEVER = FlushPolicy.never()


def test_config_enforces_rank_order():
    with pytest.raises(InvalidArgumentError):
        MosesConfig(n=5, r=3, b=2)
    with pytest.raises(InvalidArgumentError):
        MosesConfig(n=3, r=1, b=4)
    assert MosesConfig(n=10, r=2, b=3).flush_policy == FlushPolicy.when_rows_exceed(10)


def test_init_diagonal():
    st = moses.init(MosesConfig(2, 1, 2, NEVER), np.diag([2.0, 1.0]))
    np.testing.assert_allclose(np.abs(st.s_hat[:, 0]), [1, 0])
    np.testing.assert_allclose(st.gamma_hat, [2])
    np.testing.assert_allclose(np.abs(st.q_hat[:, 0]), [1, 0])
    np.testing.assert_allclose(moses.reconstruct(st), np.diag([2.0, 0.0]))
    assert (st.k, st.t) == (1, 2)


def test_init_zero_block_then_grow(rng):
    cfg = MosesConfig(4, 2, 2, NEVER)
    st = moses.init(cfg, np.zeros((4, 2)))
    assert st.rank == 0
    block = rng.standard_normal((4, 2))
    st = moses.update(st, block)
    assert st.rank == 2
    np.testing.assert_allclose(moses.reconstruct(st), np.hstack([np.zeros((4, 2)), block]),
                               atol=1e-12)


def test_init_matches_truncation(rng):
    block = rng.standard_normal((6, 3))
    st = moses.init(MosesConfig(6, 2, 3, NEVER), block)
    oracle = svd_truncate(block, 2).reconstruct()
    assert rel_fro(moses.reconstruct(st), oracle) <= 1e-12


def test_init_shape_checked():
    with pytest.raises(InvalidArgumentError):
        moses.init(MosesConfig(4, 1, 2, NEVER), np.ones((4, 3)))


def test_update_orthogonal_innovation():
    cfg = MosesConfig(2, 2, 1, NEVER, relaxed=True)
    st = moses.init(cfg, np.array([[2.0], [0.0]]))
    st = moses.update(st, np.array([[0.0], [3.0]]))
    np.testing.assert_allclose(st.gamma_hat, [3, 2])
    np.testing.assert_allclose(np.abs(st.s_hat), [[0, 1], [1, 0]], atol=1e-15)
    cfg1 = MosesConfig(2, 1, 1, NEVER)
    st1 = moses.update(moses.init(cfg1, np.array([[2.0], [0.0]])), np.array([[0.0], [3.0]]))
    np.testing.assert_allclose(st1.gamma_hat, [3])


def test_update_zero_innovation(rng):
    cfg = MosesConfig(6, 2, 3, NEVER)
    first = rng.standard_normal((6, 3))
    st = moses.init(cfg, first)
    inside = st.s_hat @ rng.standard_normal((2, 3))
    new = moses.update(st, inside)
    angles = np.linalg.svd(st.s_hat.T @ new.s_hat, compute_uv=False)
    np.testing.assert_allclose(angles, 1.0, atol=1e-12)
    np.testing.assert_allclose(new.s_hat.T @ new.s_hat, np.eye(2), atol=1e-12)
    oracle = svd_truncate(np.hstack([moses.reconstruct(st), inside]), 2).reconstruct()
    assert rel_fro(moses.reconstruct(new), oracle) <= 1e-12


def test_update_matches_naive_20_blocks(rng):
    n, b, r, k = 30, 5, 3, 20
    y = rng.standard_normal((n, b * k))
    blocks = split_blocks(y, b)
    naive = reference.naive_run(blocks, r)
    st = moses.init(MosesConfig(n, r, b, NEVER), blocks[0])
    for i in range(1, k):
        st = moses.update(st, blocks[i])
        assert rel_fro(moses.reconstruct(st), naive[i]) <= 1e-8
    assert (st.k, st.t) == (20, 100)


def test_update_shape_checked(rng):
    st = moses.init(MosesConfig(4, 1, 2, NEVER), rng.standard_normal((4, 2)))
    with pytest.raises(InvalidArgumentError):
        moses.update(st, np.ones((3, 2)))


def test_reconstruct_single_block_is_offline(rng):
    y = rng.standard_normal((5, 4))
    st = moses.init(MosesConfig(5, 4, 4, NEVER), y)
    np.testing.assert_allclose(moses.reconstruct(st), y, atol=1e-12)


def test_reconstruct_never_beats_offline(rng):
    y = synth.generate(synth.SpectrumSpec.power_law(12, 0.5, seed=3), 60)
    st = moses.run(MosesConfig(12, 3, 4, NEVER), split_blocks(y, 4))
    err = np.linalg.norm(y - moses.reconstruct(st)) ** 2
    assert err >= reference.residual_sq(y, 3) - 1e-8 * np.linalg.norm(y) ** 2


def test_project():
    st = moses.init(MosesConfig(2, 1, 2, NEVER), np.diag([2.0, 1.0]))
    sign = np.sign(st.s_hat[0, 0])
    np.testing.assert_allclose(moses.project(st, [5.0, 7.0]), [5.0 * sign])
    np.testing.assert_allclose(moses.project(st, [0.0, 7.0]), [0.0])
    with pytest.raises(InvalidArgumentError):
        moses.project(st, [1.0, 2.0, 3.0])


def test_project_random(rng):
    st = moses.run(MosesConfig(8, 3, 4, NEVER), split_blocks(rng.standard_normal((8, 16)), 4))
    x = rng.standard_normal(8)
    expect = [sum(st.s_hat[i, j] * x[i] for i in range(8)) for j in range(3)]
    np.testing.assert_allclose(moses.project(st, x), expect, atol=1e-12)


def test_flush_after_init(rng):
    st = moses.init(MosesConfig(6, 2, 3, NEVER), rng.standard_normal((6, 3)))
    fl = moses.flush(st)
    assert fl.q_hat.shape == (3, 2)
    assert fl.flushed_rows == 0
    assert np.array_equal(fl.s_hat, st.s_hat) and np.array_equal(fl.q_hat, st.q_hat)


def test_flush_keeps_subspace_trajectory(rng):
    n, r, b = 10, 2, 3
    y = rng.standard_normal((n, b * 30))
    blocks = split_blocks(y, b)
    plain = moses.init(MosesConfig(n, r, b, NEVER), blocks[0])
    auto = moses.init(MosesConfig(n, r, b, FlushPolicy.when_rows_exceed(n)), blocks[0])
    every = moses.init(MosesConfig(n, r, b, FlushPolicy.every_m_blocks(4)), blocks[0])
    for blk in blocks[1:]:
        plain, auto, every = (moses.update(s, blk) for s in (plain, auto, every))
        assert np.array_equal(plain.s_hat, auto.s_hat)
        assert np.array_equal(plain.s_hat, every.s_hat)
        assert np.array_equal(plain.gamma_hat, auto.gamma_hat)
        for s in (auto, every):
            assert s.q_hat.shape[0] == s.t - s.flushed_rows
    assert auto.flushed_rows > 0 and auto.q_hat.shape[0] <= n + r + b
    np.testing.assert_allclose(auto.q_hat.T @ auto.q_hat, np.eye(r), atol=1e-10)


def test_manual_flush_accounting(rng):
    n, r, b = 8, 2, 2
    st = moses.init(MosesConfig(n, r, b, NEVER), rng.standard_normal((n, b)))
    dropped = []
    for i in range(12):
        st = moses.update(st, rng.standard_normal((n, b)))
        if i % 4 == 3:
            before = st.q_hat.shape[0]
            st = moses.flush(st)
            dropped.append(before - st.q_hat.shape[0])
    assert st.flushed_rows == sum(dropped)
    assert st.q_hat.shape[0] == st.t - sum(dropped)


def test_long_stream_orthonormality():
    n, r, b = 20, 3, 3
    cfg = MosesConfig(n, r, b)
    handle = synth.make_stream(synth.SpectrumSpec.power_law(n, 1.0, seed=11))
    st = moses.init(cfg, synth.next_block(handle, b))
    for _ in range(10_000):
        st = moses.update(st, synth.next_block(handle, b))
    assert np.linalg.norm(st.s_hat.T @ st.s_hat - np.eye(r)) <= 1e-6
    assert np.linalg.norm(st.q_hat.T @ st.q_hat - np.eye(r)) <= 1e-8
    assert np.all(np.diff(st.gamma_hat) <= 0)


def test_reorthonormalization_preserves_iterate(rng):
    n, r, b = 12, 3, 4
    blocks = split_blocks(rng.standard_normal((n, b * 6)), b)
    st = moses.run(MosesConfig(n, r, b, NEVER), blocks)
    re = moses.reorthonormalize(st)
    assert rel_fro(moses.reconstruct(re), moses.reconstruct(st)) <= 1e-12


def test_checkpoint_round_trip(tmp_path, rng):
    n, r, b = 9, 2, 3
    st = moses.run(MosesConfig(n, r, b, FlushPolicy.every_m_blocks(3)),
                   split_blocks(rng.standard_normal((n, 21)), b))
    path = tmp_path / "state.bin"
    moses.save(st, path)
    back = moses.load(path)
    assert back.config == st.config
    for name in ("s_hat", "gamma_hat", "q_hat", "last_q"):
        assert np.array_equal(getattr(back, name), getattr(st, name))
    assert (back.k, back.t, back.flushed_rows) == (st.k, st.t, st.flushed_rows)
    # Updating a restored state is identical to updating the original.
    blk = rng.standard_normal((n, b))
    assert np.array_equal(moses.update(back, blk).s_hat, moses.update(st, blk).s_hat)


def test_checkpoint_layout(rng):
    st = moses.init(MosesConfig(3, 1, 2, NEVER), np.array([[1.0, 0], [0, 0], [0, 0]]))
    data = moses.dumps(st)
    assert data[:4] == b"MOSS"
    assert int.from_bytes(data[4:8], "little") == moses.VERSION
    assert len(data) == moses._HEADER.size + 8 * (3 + 1 + 2 + 2)
    with pytest.raises(InvalidArgumentError):
        moses.loads(b"XXXX" + data[4:])
    with pytest.raises(InvalidArgumentError):
        moses.loads(data[:-3])


def test_flush_policy_parse():
    assert FlushPolicy.parse("never") == FlushPolicy.never()
    assert FlushPolicy.parse("rows:50") == FlushPolicy.when_rows_exceed(50)
    assert FlushPolicy.parse("every:3") == FlushPolicy.every_m_blocks(3)
    with pytest.raises(InvalidArgumentError):
        FlushPolicy.parse("sometimes:2")
