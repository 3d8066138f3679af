import numpy as np
import pytest

from tcljump import hilbert, mastereq, unravel
from tcljump.errors import NegativeRateError, PropagationError, TrajectoryAbort
from tcljump.hilbert import DoubledState
from tcljump.mastereq import LindbladChannel, TimeLocalGenerator
from tcljump.models import BandGap, DetunedJC, ResonantJC
from tcljump.unravel import TrajectoryConfig

FIG1 = ResonantJC(1.0, 5.0)
STRONG = ResonantJC(1.0, 0.2)
FIG3 = DetunedJC(1.0, 0.3, 2.4)
SM = hilbert.sigma_minus()
SP = SM.conj().T
UP = np.array([0.0, 1.0], dtype=complex)
DOWN = np.array([1.0, 0.0], dtype=complex)


class FixedRng:
    """Stand-in generator returning a fixed uniform."""

    def __init__(self, u):
        self.u = u

    def random(self):
        return self.u


def decay(gamma=1.0, h=None):
    h = np.zeros((2, 2)) if h is None else h
    return mastereq.lindblad_generator(h, [LindbladChannel(SM, gamma)])


def signed_decay(gamma):
    """Two-level TCL generator with a constant rate of either sign."""
    a = -0.5 * gamma * SP @ SM
    root = np.sqrt(abs(gamma))
    sign = -1.0 if gamma < 0 else 1.0
    return TimeLocalGenerator(2, lambda t: a, lambda t: a,
                              [(lambda t: sign * root * SM, lambda t: root * SM)],
                              trace_preserving=True)


def test_config_validation():
    with pytest.raises(ValueError):
        TrajectoryConfig(dt=0.0)
    with pytest.raises(ValueError):
        TrajectoryConfig(t_end=-1.0)
    with pytest.raises(ValueError):
        TrajectoryConfig(dt=0.003, t_end=1.0)
    with pytest.raises(ValueError):
        TrajectoryConfig(seed=-1)
    assert TrajectoryConfig(dt=0.01, t_end=1.0).n_steps == 100


def test_lindblad_step_excited_state():
    g = decay(1.0)
    psi, ch = unravel.lindblad_step(UP, g, 0.0, 1e-3, FixedRng(0.5))
    assert ch is None
    np.testing.assert_allclose(psi, UP, atol=1e-15)
    # the jump probability per step is 1 - exp(-gamma dt) ~ gamma dt
    p = -np.expm1(-1e-3)
    psi, ch = unravel.lindblad_step(UP, g, 0.0, 1e-3, FixedRng(0.999 * p))
    assert ch == 0
    np.testing.assert_allclose(psi, DOWN, atol=1e-15)
    psi, ch = unravel.lindblad_step(UP, g, 0.0, 1e-3, FixedRng(1.001 * p))
    assert ch is None


def test_lindblad_step_ground_state():
    psi, ch = unravel.lindblad_step(DOWN, decay(1.0), 0.0, 1e-3, FixedRng(0.0))
    assert ch is None
    np.testing.assert_allclose(psi, DOWN, atol=1e-15)


def test_lindblad_step_hamiltonian_only():
    h = np.array([[0.0, 0.7], [0.7, 0.3]])
    psi0 = np.array([0.6, 0.8j])
    psi, ch = unravel.lindblad_step(psi0, decay(0.0, h), 0.0, 1e-2, FixedRng(0.0))
    assert ch is None
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


def test_lindblad_step_rejects_negative_rate():
    with pytest.raises(NegativeRateError):
        unravel.lindblad_step(UP, signed_decay(-0.5), 0.0, 1e-3, FixedRng(0.5))


def test_doubled_jump_positive_rate():
    theta = DoubledState(UP, UP)
    out, ch = unravel.doubled_step(theta, signed_decay(0.8), 0.0, 1e-3, FixedRng(0.0))
    assert ch == 0
    scale = out.phi[0]
    np.testing.assert_allclose(out.phi, [scale, 0], atol=1e-15)
    np.testing.assert_allclose(out.psi, [scale, 0], atol=1e-15)
    assert out.norm2() == pytest.approx(theta.norm2(), rel=1e-12)


def test_doubled_jump_negative_rate():
    theta = DoubledState(UP, UP)
    out, ch = unravel.doubled_step(theta, signed_decay(-0.8), 0.0, 1e-3, FixedRng(0.0))
    assert ch == 0
    np.testing.assert_allclose(out.phi, -out.psi, atol=1e-15)
    assert out.psi[0].real > 0 and abs(out.psi[1]) < 1e-15
    rho = np.outer(out.phi, np.conj(out.psi))
    assert rho[0, 0].real < 0


def test_doubled_drift_invariance():
    theta = DoubledState(UP, UP)
    out, ch = unravel.doubled_step(theta, signed_decay(0.8), 0.0, 1e-3, FixedRng(0.99))
    assert ch is None
    np.testing.assert_allclose(out.as_array(), theta.as_array(), atol=1e-15)


def test_doubled_drift_negative_rate_grows_norm():
    theta = DoubledState(UP, UP)
    out, ch = unravel.doubled_step(theta, signed_decay(-0.8), 0.0, 1e-3, FixedRng(0.99))
    assert ch is None
    assert out.norm2() > theta.norm2()


def test_doubled_step_zero_norm():
    with pytest.raises(ValueError):
        unravel.doubled_step(DoubledState(np.zeros(2), np.zeros(2)), signed_decay(1), 0, 1e-3,
                             FixedRng(0.5))


def test_determinism():
    g = mastereq.tcl_generator(FIG3, "tcl4")
    cfg = TrajectoryConfig(dt=5e-3, t_end=10.0, seed=17, trajectory_index=3)
    rho0 = hilbert.two_level_density(0.6, 0.3)
    r1 = unravel.simulate_trajectory(rho0, g, cfg)
    r2 = unravel.simulate_trajectory(rho0, g, cfg)
    assert np.array_equal(r1.states, r2.states) and r1.jumps == r2.jumps
    others = [unravel.simulate_trajectory(
        rho0, g, TrajectoryConfig(dt=5e-3, t_end=10.0, seed=17, trajectory_index=k))
        for k in range(4, 24)]
    assert any(not np.array_equal(r1.states, o.states) for o in others)


def test_streams_independent_of_length():
    u_short = unravel.trajectory_uniforms(5, 2, 10)
    u_long = unravel.trajectory_uniforms(5, 2, 100)
    assert np.array_equal(u_short, u_long[:11])


def test_t_end_zero():
    r = unravel.simulate_trajectory(UP, decay(), TrajectoryConfig(t_end=0.0))
    assert r.times.tolist() == [0.0] and r.states.shape == (1, 2, 2) and r.jumps == ()
    np.testing.assert_allclose(r.states[0], [UP, UP])


def test_phi_equals_psi_for_positive_rates():
    g = mastereq.tcl_generator(FIG1, "tcl4")
    for k in range(20):
        r = unravel.simulate_trajectory(
            UP, g, TrajectoryConfig(seed=1, trajectory_index=k, t_end=5.0))
        assert np.array_equal(r.states[:, 0], r.states[:, 1])


@pytest.mark.parametrize("model", [FIG3, BandGap()])
def test_norm_nondecreasing_tcl4(model):
    g = mastereq.tcl_generator(model, "tcl4")
    for k in range(20):
        r = unravel.simulate_trajectory(
            np.array([0.6, 0.8]), g, TrajectoryConfig(seed=2, trajectory_index=k))
        n2 = np.sum(np.abs(r.states) ** 2, axis=(1, 2))
        assert np.all(np.diff(n2) >= -1e-12 * n2[1:])


def test_lindblad_norm_drift():
    h = np.array([[0.0, 0.5], [0.5, 1.0]])
    g = decay(0.7, h)
    cfg = TrajectoryConfig(dt=1e-3, t_end=10.0, seed=3)
    for k in range(5):
        r = unravel.simulate_trajectory(np.array([0.6, 0.8j]), g,
                                        TrajectoryConfig(dt=1e-3, t_end=10.0, seed=3,
                                                         trajectory_index=k),
                                        mode="lindblad")
        norms = np.linalg.norm(r.states[:, 0], axis=1)
        assert np.max(np.abs(norms - 1)) <= 1e-6
    assert cfg.n_steps == 10000


def test_jump_statistics_positive_rate():
    # waiting times of an excited atom under a constant rate are exponential
    g = mastereq.tcl_generator(FIG1, "markov", horizon=20.0)
    times = []
    for k in range(400):
        r = unravel.simulate_trajectory(UP, g, TrajectoryConfig(dt=1e-2, t_end=20.0, seed=9,
                                                                trajectory_index=k),
                                        output_times=[0.0, 20.0], mode="lindblad")
        assert len(r.jumps) <= 1
        if r.jumps:
            times.append(r.jumps[0][0])
    assert len(times) >= 395
    assert np.mean(times) == pytest.approx(1.0, abs=4 / np.sqrt(400))


def test_lindblad_mode_rejects_signed_generator():
    g = mastereq.tcl_generator(FIG3, "tcl4")
    with pytest.raises(NegativeRateError, match="doubled"):
        unravel.simulate_trajectory(UP, g, TrajectoryConfig(), mode="lindblad")


def test_dry_scan_rejects_large_steps():
    with pytest.raises(ValueError, match="reduce dt"):
        unravel.simulate_trajectory(UP, decay(20.0), TrajectoryConfig(dt=5e-3))
    unravel.simulate_trajectory(UP, decay(20.0), TrajectoryConfig(dt=2e-3, t_end=1.0))


def test_horizon_rejected():
    g = mastereq.tcl_generator(STRONG, "exact")
    with pytest.raises(PropagationError):
        unravel.simulate_trajectory(UP, g, TrajectoryConfig())
    unravel.simulate_trajectory(UP, g, TrajectoryConfig(t_end=6.0))


def test_output_grid():
    g = decay()
    r = unravel.simulate_trajectory(UP, g, TrajectoryConfig(t_end=1.0), output_times=[0, 0.5, 1])
    np.testing.assert_allclose(r.times, [0, 0.5, 1])
    with pytest.raises(ValueError):
        unravel.simulate_trajectory(UP, g, TrajectoryConfig(t_end=1.0), output_times=[0.0012])
    with pytest.raises(ValueError):
        unravel.simulate_trajectory(UP, g, TrajectoryConfig(t_end=1.0), output_times=[2.0])
    with pytest.raises(ValueError):
        unravel.simulate_trajectory(UP, g, TrajectoryConfig(t_end=1.0), output_times=[0.5, 0.2])


def test_initial_sampler():
    rho = np.diag([0.25, 0.75]).astype(complex)
    s = unravel.InitialSampler(rho, "doubled", 2)
    picks = [np.argmax(np.abs(s.draw(u)[0])) for u in np.linspace(0.001, 0.999, 1000)]
    assert np.mean(picks) == pytest.approx(0.75, abs=0.01)
    with pytest.raises(ValueError):
        unravel.InitialSampler(DoubledState(UP, DOWN), "lindblad", 2)
    with pytest.raises(ValueError):
        unravel.InitialSampler(np.eye(3) / 3, "doubled", 2)


def test_record_density_and_jump_csv(tmp_path):
    r = unravel.simulate_trajectory(UP, decay(1.0), TrajectoryConfig(t_end=10.0, seed=4),
                                    mode="lindblad")
    rho = r.density()
    assert rho.shape == (r.times.size, 2, 2)
    assert rho[0, 1, 1] == 1.0
    r.to_jump_csv(tmp_path / "j.csv")
    lines = (tmp_path / "j.csv").read_text().splitlines()
    assert lines[0] == "trajectory_index,t_jump,channel"
    assert len(lines) == 1 + len(r.jumps)


def test_norm_guard_abort():
    # an amplifying drift without jumps grows the norm without bound
    a = 5.0 * np.eye(2)
    g = TimeLocalGenerator(2, lambda t: a, lambda t: a)
    with pytest.raises(TrajectoryAbort) as err:
        unravel.simulate_trajectory(UP, g, TrajectoryConfig(dt=5e-3, t_end=10.0, seed=1))
    assert err.value.index == 0 and "norm" in err.value.reason
