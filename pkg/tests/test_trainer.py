from concurrent.futures import Future

import numpy as np

from cosimlab.compensator import TrainerConfig
from cosimlab.core import CouplingScenario, run_cosim
from cosimlab.trainer import OnlineTrainer
from cosimlab.twomass import A_OPT, STOP, CompensatorSetup, make_compensators, make_plants, simulate

CFG = TrainerConfig(epochs=30, trigger_every=1000, apply_delay_steps=300, max_samples=3000)


def stop_scenario(duration=3.0, training=True):
    return CouplingScenario(duration=duration, compensator_kind="network", online_training=training)


def test_training_disabled_keeps_weights():
    sc = stop_scenario(2.0, training=False)
    comps = make_compensators(sc, CompensatorSetup(A_OPT))
    before = {k: c.net.flat().copy() for k, c in comps.items()}
    run_cosim(sc, make_plants(sc, stop=STOP), comps)
    for k, c in comps.items():
        assert np.array_equal(c.net.flat(), before[k])


def test_deterministic_mode_is_bit_identical():
    runs = [simulate(stop_scenario(), CompensatorSetup(A_OPT), stop=STOP, trainer_cfg=CFG) for _ in range(2)]
    a, b = runs
    assert len(a.training_log) > 0
    for name in a.channels:
        assert np.array_equal(a.channels[name].compensated, b.channels[name].compensated)
    assert np.array_equal(a.states["mass1"], b.states["mass1"])
    assert [c.loss_after for c in a.training_log] == [c.loss_after for c in b.training_log]


def test_deterministic_hand_off_steps():
    tr = simulate(stop_scenario(), CompensatorSetup(A_OPT), stop=STOP, trainer_cfg=CFG)
    for cycle in tr.training_log:
        assert cycle.trigger_step % CFG.trigger_every == 0
        assert cycle.apply_step == cycle.trigger_step + CFG.apply_delay_steps
        assert cycle.loss_after <= cycle.loss_before


def test_swap_happens_exactly_at_the_hand_off_boundary():
    sc = stop_scenario(1.5)
    comps = make_compensators(sc, CompensatorSetup(A_OPT))
    trainers = {"v1": OnlineTrainer("v1", comps["v1"], CFG, sc.delay_steps)}
    init = comps["v1"].net.flat().copy()
    swapped_at = []

    orig = trainers["v1"].boundary

    def boundary(n, received):
        orig(n, received)
        if not swapped_at and not np.array_equal(comps["v1"].net.flat(), init):
            swapped_at.append(n)

    trainers["v1"].boundary = boundary
    run_cosim(sc, make_plants(sc, stop=STOP), comps, trainers)
    assert swapped_at == [CFG.trigger_every + CFG.apply_delay_steps]


class NeverDone:
    def submit(self, *args, **kwargs):
        return Future()

    def shutdown(self, **kwargs):
        pass


class Failing:
    def submit(self, *args, **kwargs):
        f = Future()
        f.set_exception(RuntimeError("worker died"))
        return f

    def shutdown(self, **kwargs):
        pass


def _run_with_executor(executor, duration=2.5):
    sc = stop_scenario(duration)
    comps = make_compensators(sc, CompensatorSetup(A_OPT))
    init = {k: c.net.flat().copy() for k, c in comps.items()}
    trainers = {k: OnlineTrainer(k, c, CFG, sc.delay_steps, deterministic=False, executor=executor)
                for k, c in comps.items()}
    tr = run_cosim(sc, make_plants(sc, stop=STOP), comps, trainers)
    return tr, comps, init


def test_slow_training_never_blocks():
    tr, comps, init = _run_with_executor(NeverDone())
    assert tr.time.size == 2500 and not tr.diverged
    assert tr.training_log == []
    for k, c in comps.items():
        assert np.array_equal(c.net.flat(), init[k])


def test_failed_cycle_keeps_weights():
    tr, comps, init = _run_with_executor(Failing())
    assert tr.training_log == []
    for k, c in comps.items():
        assert np.array_equal(c.net.flat(), init[k])


def test_concurrent_mode_applies_results_at_a_later_boundary():
    sc = stop_scenario(4.0)
    tr = simulate(sc, CompensatorSetup(A_OPT), stop=STOP, trainer_cfg=CFG, deterministic=False)
    assert tr.training_log, "no cycle finished within the run"
    for cycle in tr.training_log:
        assert cycle.apply_step > cycle.trigger_step
        assert cycle.loss_after <= cycle.loss_before
