import numpy as np
import pytest

from mixflow.rl.checkpoint import save_checkpoint
from mixflow.rl.trainer import LOG_HEADER, Learner, episode_seed, linear_schedule, train
from mixflow.simcore import Transition


def tiny(single, iterations=3):
    return single.with_sim(horizon=120.0).with_train(iterations=iterations, hidden=(16, 16), warmup=40,
                                                      batch_size=8, target_sync=20)


def test_zero_iterations_returns_initial_network(single):
    s = tiny(single, 0)
    res = train(s)
    fresh = Learner(s.train)
    assert np.array_equal(res.checkpoint.net.flat, fresh.net.flat)
    assert res.log == [] and res.losses == []
    assert res.log_csv().strip() == ",".join(LOG_HEADER)


def test_training_is_deterministic(single):
    s = tiny(single)
    a, b = train(s), train(s)
    ca, cb = a.checkpoint, b.checkpoint
    assert save_checkpoint(ca.net, ca.config, ca.rng_state, ca.provenance) == \
        save_checkpoint(cb.net, cb.config, cb.rng_state, cb.provenance)
    assert a.log_csv() == b.log_csv()
    assert len(a.log) == 3 and len(a.losses) > 0
    assert a.checkpoint.provenance["grad_steps"] == len(a.losses)


def test_needs_unsignalized_intersection(single):
    with pytest.raises(ValueError):
        train(single.with_config("0U+1S"))


def test_warmup_gates_learning(single):
    learner = Learner(tiny(single).train)
    obs = np.zeros(12)
    for i in range(39):
        learner.observe(Transition(obs, i % 2, 0.0, obs, False))
    assert learner.grad_steps == 0
    learner.observe(Transition(obs, 0, 0.0, obs, False))
    assert learner.grad_steps == 1


def test_schedules():
    assert linear_schedule(1.0, 0.05, 0.0) == 1.0
    assert linear_schedule(1.0, 0.05, 2.0) == 0.05
    assert linear_schedule(0.4, 1.0, 0.5) == pytest.approx(0.7)
    assert episode_seed(0, 1) != episode_seed(0, 2) and episode_seed(3, 4) == episode_seed(3, 4)
