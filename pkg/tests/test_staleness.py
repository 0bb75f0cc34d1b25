import math

import numpy as np
import pytest

from pipetrain.data import batches, make_blobs
from pipetrain.errors import InputError
from pipetrain.nn import ModelSpec, init_params
from pipetrain.numcore import make_rng
from pipetrain.staleness import History, record_history, record_rmse, summarize


def test_zero_version_difference_is_exact(rng):
    h = History([rng.standard_normal(4) for _ in range(6)], [rng.standard_normal(4) for _ in range(6)], 0.1)
    for r in record_rmse(h, 0):
        assert r.rmse_pred == r.rmse_stale == 0.0


def test_constant_history():
    w = np.array([1.0, -2.0])
    h = History([w] * 5, [np.zeros(2)] * 5, 0.1)
    for s in range(4):
        assert all(r.rmse_pred == r.rmse_stale == 0.0 for r in record_rmse(h, s))


def test_history_too_short():
    h = History([np.zeros(1)] * 3, [np.zeros(1)] * 3, 0.1)
    with pytest.raises(InputError):
        record_rmse(h, 3)
    with pytest.raises(InputError):
        record_rmse(h, -1)


def test_hand_computed_records():
    # W_t = t, v_t = 0.5 for t >= 1
    h = History([np.array([float(t)]) for t in range(4)],
                [np.array([0.0])] + [np.array([0.5])] * 3, eta=2.0)
    recs = record_rmse(h, 2)
    assert [r.step for r in recs] == [2, 3]
    # t=2: predicted = W_0 - 2*2*0 = 0, actual 2; t=3: predicted = 1 - 2*2*0.5 = -1, actual 3
    assert [r.rmse_pred for r in recs] == [2.0, 4.0]
    assert [r.rmse_stale for r in recs] == [2.0, 2.0]


def test_history_alignment():
    spec = ModelSpec.mlp([4, 5, 3])
    data = make_blobs(0, 64, 4, 3, 0.5)
    params = init_params(spec, make_rng(0))
    h = record_history(spec, params, batches(data, 16, 0), 5, 0.1)
    assert len(h) == 6
    assert not h.smoothed[0].any()
    # momentum rule: W_{t+1} = W_t - eta * v_{t+1 smoothed}
    np.testing.assert_allclose(h.weights[1], h.weights[0] - 0.1 * h.smoothed[1], rtol=0, atol=1e-15)


def test_prediction_beats_staleness_on_blobs():
    spec = ModelSpec.mlp([16, 32, 32, 32, 8])
    data = make_blobs(1, 2048, 16, 8, 1.0)
    h = record_history(spec, init_params(spec, make_rng(1)), batches(data, 128, 1, drop_last=True), 300, 0.05)
    stats = [summarize(record_rmse(h, s), warmup=10) for s in (1, 2, 3)]
    for st in stats:
        assert st["mean_rmse_pred"] < st["mean_rmse_stale"]
    assert stats[0]["mean_rmse_stale"] < stats[1]["mean_rmse_stale"] < stats[2]["mean_rmse_stale"]


def test_summarize():
    # weights rise by one per step, so the smoothed gradient is -1
    h = History([np.array([float(t)]) for t in range(5)], [np.array([-1.0])] * 5, eta=1.0)
    st = summarize(record_rmse(h, 1), warmup=2)
    assert st["steps"] == 3
    assert st["dominance"] == 1.0
    assert st["mean_rmse_pred"] == 0.0
    assert math.isclose(st["mean_rmse_stale"], 1.0)
    with pytest.raises(InputError):
        summarize(record_rmse(h, 1), warmup=10)
