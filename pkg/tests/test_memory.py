"""Scene-memory semantics: FIFO eviction, scene isolation, bypass vs.
attention paths, and detachment of stored entries."""

import numpy as np
import pytest

from wavehdr import model as M
from wavehdr import tensor as T
from wavehdr.errors import ConfigError

CFG = M.ModelConfig(channels=6, num_resblocks=2, groups=2, memory_len=2)


def entry(rng, m=16, cr=3):
    return rng.normal(size=(m, cr))


def test_fifo_eviction_order(rng):
    store = M.MemoryStore(max_len=2)
    e1, e2, e3 = entry(rng), entry(rng), entry(rng)
    store.insert("s", e1)
    assert store.queue_length("s") == 1
    store.insert("s", e2)
    store.insert("s", e3)  # evicts e1
    got = store.lookup("s")
    assert len(got) == 2
    np.testing.assert_array_equal(got[0], e2)
    np.testing.assert_array_equal(got[1], e3)


def test_scene_isolation(rng):
    store = M.MemoryStore(max_len=2)
    ea, eb = entry(rng), entry(rng)
    store.insert("a", ea)
    store.insert("b", eb)
    np.testing.assert_array_equal(store.lookup("a")[0], ea)
    np.testing.assert_array_equal(store.lookup("b")[0], eb)
    assert store.lookup("c") == []
    assert store.scene_ids() == ["a", "b"]
    store.drop_scene("a")
    assert store.scene_ids() == ["b"]
    store.clear()
    assert store.scene_ids() == []


def test_max_len_validation():
    with pytest.raises(ConfigError):
        M.MemoryStore(max_len=0)


def test_clone_is_independent(rng):
    store = M.MemoryStore(max_len=2)
    store.insert("s", entry(rng))
    dup = store.clone()
    dup.insert("s", entry(rng))
    dup.lookup("s")[0][:] = 99.0
    assert store.queue_length("s") == 1
    assert not np.array_equal(store.lookup("s")[0], dup.lookup("s")[0])
    assert dup.match_count == store.match_count


def test_bypass_then_match_counters(rng):
    params = M.ModelParams.initialize(CFG, seed=1)
    store = M.MemoryStore(max_len=2)
    feats = T.Tensor(rng.normal(size=(3, 6, 4, 4)))
    M.dmm_forward(feats, "s", store, params)
    # frame 0 finds an empty queue (bypass); frames 1, 2 attend
    assert store.bypass_count == 1
    assert store.match_count == 2
    # a different scene starts with its own bypass
    M.dmm_forward(feats, "s2", store, params)
    assert store.bypass_count == 2
    assert store.match_count == 4


def test_queue_grows_one_entry_per_frame(rng):
    params = M.ModelParams.initialize(CFG, seed=2)
    store = M.MemoryStore(max_len=5)
    feats = T.Tensor(rng.normal(size=(3, 6, 4, 4)))
    M.dmm_forward(feats, "s", store, params)
    assert store.queue_length("s") == 3
    M.dmm_forward(feats, "s", store, params)
    assert store.queue_length("s") == 5  # 6 inserts, capped at 5


def test_entries_are_detached_numpy(rng):
    params = M.ModelParams.initialize(CFG, seed=3)
    store = M.MemoryStore(max_len=2)
    feats = T.Tensor(rng.normal(size=(2, 6, 4, 4)), requires_grad=True)
    out = M.dmm_forward(feats, "s", store, params)
    for e in store.lookup("s"):
        assert isinstance(e, np.ndarray)
        assert e.shape == (16, 3)  # h*w tokens, reduced width
    # backward through the attention path works and never touches entries
    out.sum().backward()
    assert feats.grad is not None


def test_memory_contents_change_output(rng):
    params = M.ModelParams.initialize(CFG, seed=4)
    frame = T.Tensor(rng.normal(size=(1, 6, 4, 4)))

    store1 = M.MemoryStore(max_len=2)
    store1.insert("s", rng.normal(size=(16, 3)))
    out1 = M.dmm_forward(frame, "s", store1, params)

    store2 = M.MemoryStore(max_len=2)
    store2.insert("s", rng.normal(size=(16, 3)) + 5.0)
    out2 = M.dmm_forward(frame, "s", store2, params)

    assert not np.allclose(out1.data, out2.data)


def test_other_scene_memory_does_not_leak(rng):
    params = M.ModelParams.initialize(CFG, seed=5)
    frame = T.Tensor(rng.normal(size=(1, 6, 4, 4)))

    fresh = M.MemoryStore(max_len=2)
    out_fresh = M.dmm_forward(frame, "target", fresh, params)

    polluted = M.MemoryStore(max_len=2)
    polluted.insert("other", rng.normal(size=(16, 3)) * 10.0)
    out_polluted = M.dmm_forward(frame, "target", polluted, params)

    np.testing.assert_array_equal(out_fresh.data, out_polluted.data)
    np.testing.assert_array_equal(polluted.lookup("other")[0],
                                  polluted.lookup("other")[0])
    assert polluted.queue_length("other") == 1  # untouched


def test_dmm_deterministic(rng):
    params = M.ModelParams.initialize(CFG, seed=6)
    feats = T.Tensor(rng.normal(size=(2, 6, 4, 4)))
    outs = []
    for _ in range(2):
        store = M.MemoryStore(max_len=2)
        outs.append(M.dmm_forward(feats, "s", store, params).data)
    np.testing.assert_array_equal(outs[0], outs[1])


def test_phase2_scene_sequence_uses_memory_across_clips(rng):
    # running two clips of the same scene back to back: the second clip's
    # first frame must see memory from the first clip
    params = M.ModelParams.initialize(CFG, seed=7)
    store = M.MemoryStore(max_len=2)
    clip1 = T.Tensor(rng.uniform(size=(2, 3, 8, 8)))
    clip2 = T.Tensor(rng.uniform(size=(2, 3, 8, 8)))
    M.phase2_forward(clip1, "s", store, params)
    bypass_before = store.bypass_count
    M.phase2_forward(clip2, "s", store, params)
    assert store.bypass_count == bypass_before  # no new-scene bypass
