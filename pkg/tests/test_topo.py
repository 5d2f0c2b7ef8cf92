import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from windae import topo, windgen


def lift_winding(re, im):
    """Independent oracle: unwrap the phase cumulatively and count net turns."""
    theta = np.unwrap(np.arctan2(im, re))
    return (theta[-1] - theta[0]) / (2 * np.pi)


def test_constant_sequence():
    assert topo.winding_number(np.ones(128), np.zeros(128)) == 0


def test_noiseless_five_segment_pattern():
    pat = windgen.WindingPattern((1, 1, 1, -1, 1))
    s = windgen.generate(pat, windgen.GenParams(noise_amplitude=0.0), 0)
    assert topo.winding_number(s.re, s.im) == 3
    assert topo.winding_residual(s.re, s.im) < 1e-10


def test_zero_modulus_rejected():
    re = np.ones(8)
    re[3] = 0.0
    with pytest.raises(topo.UndefinedPhaseError):
        topo.winding_number(re, np.zeros(8))


def test_agrees_with_unwrapping_oracle_on_noisy_samples():
    params = windgen.GenParams(samples_per_pattern=1)
    pats = windgen.enumerate_patterns(5)
    mismatches = 0
    for i in range(10_000):
        s = windgen.generate(pats[i % len(pats)], params, i // len(pats))
        ours = topo.winding_number(s.re, s.im)
        if ours != round(lift_winding(s.re, s.im)):
            mismatches += 1
    assert mismatches == 0


def test_residual_small_for_default_noise():
    params = windgen.GenParams(samples_per_pattern=100)
    res = np.array([topo.winding_residual(s.re, s.im) for s in windgen.generate_split(params, "test")])
    assert len(res) == 6300
    assert np.all(res < 0.5)
    assert np.mean(res < 0.1) >= 0.95


def _random_loop(data, n=40):
    # a closed loop whose steps stay strictly inside (-pi, pi)
    steps = data.draw(st.lists(st.floats(-3.0, 3.0), min_size=n - 1, max_size=n - 1))
    theta = np.concatenate([[0.0], np.cumsum(steps)])
    k = int(np.round(theta[-1] / (2 * np.pi)))
    # close the loop exactly by appending the return step(s)
    gap = 2 * np.pi * k - theta[-1]
    m = int(np.ceil(abs(gap) / 3.0)) + 1
    theta = np.concatenate([theta, theta[-1] + gap * np.arange(1, m + 1) / m])
    return np.cos(theta), np.sin(theta), k


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_matches_lift_when_steps_below_pi(data):
    re, im, k = _random_loop(data)
    assert topo.winding_number(re, im) == k
    assert topo.winding_number(re, im) == round(lift_winding(re, im))


@settings(max_examples=100, deadline=None)
@given(st.data(), st.floats(0, 2 * np.pi))
def test_global_phase_invariance(data, alpha):
    re, im, k = _random_loop(data)
    z = (re + 1j * im) * np.exp(1j * alpha)
    assert topo.winding_number(z.real, z.imag) == k


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_conjugation_negates(data):
    re, im, k = _random_loop(data)
    assert topo.winding_number(re, -im) == -k


@settings(max_examples=100, deadline=None)
@given(st.data(), st.integers(0, 200))
def test_rotation_invariance(data, shift):
    re, im, k = _random_loop(data)
    # drop the duplicated endpoint, rotate, re-close
    body = (re + 1j * im)[:-1]
    rot = np.roll(body, shift % len(body))
    rot = np.append(rot, rot[0])
    assert topo.winding_number(rot.real, rot.imag) == k


def test_half_turn_branch():
    # a single exact half-turn step counts as +pi
    steps = topo.phase_steps(np.array([1.0, -1.0]), np.array([0.0, 0.0]))
    assert np.all(steps == np.pi)


def test_output_is_int():
    assert isinstance(topo.winding_number(np.ones(4), np.zeros(4)), int)
