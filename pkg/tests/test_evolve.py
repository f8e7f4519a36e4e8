from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import dense_driver, dense_problem, fidelity, trotter_evolve
from rapidquench import krylov
from rapidquench.errors import QuenchError
from rapidquench.evolve import (
    Trajectory,
    check_energy_redistribution,
    default_window,
    evolve,
    make_linear_schedule,
    make_preanneal_schedule,
    make_two_stage_schedule,
    make_walk_schedule,
    observables,
    piecewise_linear_schedule,
    success_probability,
    tabulated_schedule,
    time_averaged_success,
)
from rapidquench.io import read_csv
from rapidquench.ising import (
    IsingProblem,
    basis_state,
    biased_driver,
    driver_ground_state,
    make_sk_instance,
    make_two_qubit_problem,
    transverse_driver,
    uniform_state,
)

TOL = 1e-9


class _Trace:
    def __init__(self, t, p):
        self.times, self.p_success = t, p


def test_two_stage_schedule_shape():
    s = make_two_stage_schedule(2.0, 0.5, 10.0, 10.0)
    assert s.gamma(9.999) == 2.0 and s.gamma(10.0) == 0.5 and s.t_final == 20.0
    assert s.monotone
    assert not make_two_stage_schedule(1.0, 4.0, 10.0, 10.0).monotone
    flat = make_two_stage_schedule(1.5, 1.5, 3.0, 4.0)
    assert flat.monotone and flat.t_final == 7.0 and {flat.gamma(t) for t in (0, 3, 6.9)} == {1.5}
    with pytest.raises(QuenchError) as e:
        make_two_stage_schedule(2.0, 1.0, 0.0, 1.0)
    assert e.value.code == "nonpositive-duration"


def test_preanneal_schedule_shape():
    g = 1.3
    s = make_preanneal_schedule(g, 4.0, 2.0)
    assert s.controls(0.0) == pytest.approx((2 * g, 0.0))
    assert s.controls(4.0) == pytest.approx((g, 1.0))
    a_left = s.segments[0].controls(4.0)
    assert a_left == pytest.approx((g, 1.0))
    assert s.monotone
    walk = make_preanneal_schedule(g, 0.0, 2.0)
    assert len(walk.segments) == 1 and walk.controls(1.0) == (g, 1.0)
    with pytest.raises(QuenchError) as e:
        make_preanneal_schedule(g, 1.0, 0.0)
    assert e.value.code == "nonpositive-t2"


def test_non_monotone_flag_is_validated():
    from rapidquench.evolve import Schedule, linear_segment

    with pytest.raises(QuenchError) as e:
        Schedule((linear_segment(1.0, 0.5, 1.0, 1.0, 1.0),), monotone=True)
    assert e.value.code == "non-monotone"
    with pytest.raises(QuenchError) as e:
        tabulated_schedule([0.0, 1.0], [1.0, -0.1], [0.0, 1.0])
    assert e.value.code == "negative-control"


def test_linear_schedule_is_monotone():
    s = make_linear_schedule(2.0)
    assert s.monotone and s.controls(1.0) == pytest.approx((0.5, 0.5))
    assert piecewise_linear_schedule([0, 1, 2], [0, 0.3, 1]).monotone
    assert not piecewise_linear_schedule([0, 1, 2], [0, 0.6, 0.4]).monotone


def test_observables_examples():
    p = make_sk_instance(5, seed=2)
    d = transverse_driver(5)
    ed, ep, eg = observables(driver_ground_state(d), p, d, 3.0)
    assert abs(ed) < 1e-12 and abs(ep) < 1e-12 and abs(eg - ep) < 1e-12
    ed, ep, _ = observables(basis_state(5, 7), p, d, 1.0)
    assert ed == pytest.approx(5.0) and ep == pytest.approx(p.energies[7])


def test_success_probability_examples():
    p = make_two_qubit_problem()
    assert success_probability(uniform_state(2), p) == pytest.approx(0.25)
    assert success_probability(basis_state(2, 0), p) == pytest.approx(1.0)
    sk = make_sk_instance(6, seed=4)
    assert success_probability(uniform_state(6), sk) == pytest.approx(2.0**-6)
    deg = IsingProblem(2, np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2))
    assert success_probability(uniform_state(2), deg) == pytest.approx(0.5)


def test_time_average_examples():
    t = np.linspace(0, 5, 600)
    assert time_averaged_success(_Trace(t, np.full_like(t, 0.3)), (1.0, 4.0)) == pytest.approx(0.3)
    w = 2 * math.pi
    t = np.linspace(0, 3, 3001)
    assert abs(time_averaged_success(_Trace(t, np.sin(w * t) ** 2), (0.0, 3.0)) - 0.5) < 1e-6
    assert default_window(9) == pytest.approx((12.5 / 3, 17.5 / 3))
    with pytest.raises(QuenchError) as e:
        time_averaged_success(_Trace(t, t), (1.0, 4.0))
    assert e.value.code == "window-out-of-range"


def test_stationary_driver_ground_state():
    p = IsingProblem(4, np.zeros((4, 4)), np.zeros(4))
    for d in (transverse_driver(4), biased_driver((1, -1, 1, 1), 0.7)):
        psi0 = driver_ground_state(d)
        tr = evolve(p, d, make_linear_schedule(3.0), grid=np.linspace(0, 3, 7), keep_states=True)
        for st in tr.states:
            assert abs(fidelity(psi0, st) - 1.0) < TOL


def test_two_qubit_two_stage_steps_energy_down():
    p = make_two_qubit_problem()
    d = transverse_driver(2)
    s = make_two_stage_schedule(2.0, 0.5, 10.0, 10.0)
    grid = np.linspace(0, 20, 401)
    tr = evolve(p, d, s, grid=grid)
    before = tr.e_gamma[grid < 10][-1]
    after = tr.e_gamma[grid >= 10][0]
    assert after < before - 1e-3
    assert tr.exp_prob[grid > 0].mean() < tr.exp_prob[0]
    check_energy_redistribution(tr, 10 * TOL)


def test_matches_trotter_oracle_n4():
    p = make_sk_instance(4, seed=11)
    d = transverse_driver(4)
    s = make_preanneal_schedule(1.2, 1.0, 1.0)
    tr = evolve(p, d, s)
    ref = trotter_evolve(dense_driver(4), dense_problem(p.couplings, p.fields), s, driver_ground_state(d), q=20_000)
    assert fidelity(tr.final_state, ref) >= 1 - 1e-6


def test_energy_conserved_on_constant_segment():
    p = make_sk_instance(6, seed=8)
    d = transverse_driver(6)
    t = np.linspace(0, 100, 101)
    tr = evolve(p, d, make_walk_schedule(1.1, 100.0), grid=t)
    assert np.all(np.abs(tr.e_gamma - tr.e_gamma[0]) < 10 * TOL * (t + 1))
    assert np.max(tr.norm_drift) < TOL


@pytest.mark.parametrize("make", [
    lambda: make_two_stage_schedule(3.0, 0.8, 2.0, 2.0),
    lambda: make_preanneal_schedule(1.0, 2.0, 2.0),
    lambda: make_linear_schedule(3.0),
    lambda: piecewise_linear_schedule([0, 1, 2, 3], [0, 0.5, 0.6, 1.0]),
])
def test_energy_redistribution(make):
    s = make()
    for seed in range(3):
        p = make_sk_instance(6, seed=seed)
        d = transverse_driver(6)
        tr = evolve(p, d, s, grid=np.linspace(0, s.t_final, 60))
        check_energy_redistribution(tr, 10 * TOL)
        assert np.max(tr.norm_drift) < TOL


def test_redistribution_check_detects_violation():
    tr = Trajectory(*[np.array([0.0, 1.0])] * 4, exp_prob=np.array([0.0, 1.0]), e_gamma=np.array([0.0, 1.0]),
                    e_ab=np.zeros(2), p_success=np.zeros(2), norm_drift=np.zeros(2), final_state=np.zeros(1))
    with pytest.raises(QuenchError) as e:
        check_energy_redistribution(tr, 1e-8)
    assert e.value.code == "invariant-violation"


def test_reversibility():
    p = make_sk_instance(5, seed=3)
    d = transverse_driver(5)
    s = make_preanneal_schedule(0.9, 1.5, 1.0)
    psi0 = driver_ground_state(d)
    fwd = evolve(p, d, s).final_state
    back = evolve(p, d, s.reversed(), initial=np.conj(fwd)).final_state
    assert fidelity(np.conj(back), psi0) >= 1 - 100 * TOL


def test_evolve_errors():
    p = make_sk_instance(3, seed=0)
    with pytest.raises(QuenchError) as e:
        evolve(p, transverse_driver(4), make_linear_schedule(1.0))
    assert e.value.code == "dimension-mismatch"
    with pytest.raises(QuenchError):
        evolve(p, transverse_driver(3), make_linear_schedule(1.0), grid=[0.0, 2.0])


def test_trajectory_csv(tmp_path):
    p = make_two_qubit_problem()
    tr = evolve(p, transverse_driver(2), make_walk_schedule(1.0, 1.0), grid=np.linspace(0, 1, 5))
    tr.to_csv(tmp_path / "t.csv")
    rows = read_csv(tmp_path / "t.csv")
    assert list(rows[0]) == ["t", "exp_drive", "exp_prob", "e_total", "p_success", "norm_drift"]
    assert float(rows[-1]["p_success"]) == tr.p_success[-1]


def test_krylov_matches_dense_expm():
    from scipy.linalg import expm

    p = make_sk_instance(5, seed=9)
    H = 0.7 * dense_driver(5) + dense_problem(p.couplings, p.fields)
    psi = uniform_state(5)
    got = krylov.propagate(lambda v: H @ v, psi, [0.0, 0.3, 2.0, 7.5])
    for t, g in zip([0.0, 0.3, 2.0, 7.5], got):
        np.testing.assert_allclose(g, expm(-1j * H * t) @ psi, atol=1e-10)
