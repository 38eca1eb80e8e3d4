import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gapptrack.conjugate import GammaPosterior, InvGammaPosterior
from gapptrack.estimates import ParticleSnapshot, StepSnapshot
from gapptrack.metrics import GospaConfig, TruthStep, armse, gospa, siap
from gapptrack.world import GenParams
from oracles import brute_gospa


def _points(rng, n):
    return rng.uniform(0, 25, (n, 2))


def test_gospa_examples():
    assert gospa(np.zeros((0, 2)), np.zeros((0, 2))) == 0.0
    assert gospa([[1.0, 1.0]], np.zeros((0, 2))) == pytest.approx(math.sqrt(50.0), rel=1e-15)
    assert gospa([[0.0, 0.0]], [[3.0, 4.0]]) == pytest.approx(5.0)
    # beyond the cutoff a pair costs as much as one miss plus one false track
    assert gospa([[0.0, 0.0]], [[30.0, 0.0]]) == pytest.approx(10.0)


def test_gospa_matches_brute_force_up_to_four_by_four():
    rng = np.random.default_rng(0)
    for nx in range(5):
        for ny in range(5):
            for _ in range(20):
                x, y = _points(rng, nx), _points(rng, ny)
                assert gospa(x, y) == pytest.approx(brute_gospa(x, y), rel=1e-12, abs=1e-12)


sets = st.integers(0, 2**31 - 1).map(lambda s: _points(np.random.default_rng(s), int(np.random.default_rng(s).integers(0, 6))))


@settings(max_examples=200, deadline=None)
@given(x=sets, y=sets, z=sets)
def test_gospa_is_a_metric(x, y, z):
    assert gospa(x, y) == gospa(y, x)
    assert gospa(x, x) == 0.0
    assert gospa(x, z) <= gospa(x, y) + gospa(y, z) + 1e-9


@settings(max_examples=100, deadline=None)
@given(x=sets, y=sets, c=st.floats(0.5, 20), extra=st.floats(0.0, 20))
def test_gospa_grows_with_cutoff(x, y, c, extra):
    assert gospa(x, y, GospaConfig(cutoff=c)) <= gospa(x, y, GospaConfig(cutoff=c + extra)) + 1e-12


def test_gospa_config_validates():
    with pytest.raises(ValueError):
        GospaConfig(alpha=3.0)


def _particle(ids, positions, weight=1.0, classes=None, rate=(50.0, 10.0), noise=(3.0, 2.0), birth=(1.0, 10.0), clutter=(12.0, 1.0)):
    n = len(ids)
    cls = np.tile([1.0, 0.0], (n, 1)) if classes is None else np.asarray(classes, dtype=float)
    return ParticleSnapshot(
        weight=weight,
        ids=np.asarray(ids, dtype=np.int64),
        positions=np.asarray(positions, dtype=float).reshape(n, 2),
        position_vars=np.full((n, 2), 0.1),
        rate_shape=np.full(n, rate[0]),
        rate_rate=np.full(n, rate[1]),
        class_probs=cls,
        clutter=clutter,
        birth=birth,
        noise=noise,
    )


def _line(k):
    return np.array([[float(k), 2.0 * k]])


def _truth(k, n=1):
    return TruthStep(np.arange(n), np.vstack([_line(k) + [0.0, 50.0 * i] for i in range(n)]), np.zeros(n, dtype=int), np.full(n, 5.0))


def _steps(particles_at):
    return [StepSnapshot(k, np.arange(len(particles_at(k))), particles_at(k)) for k in range(100)]


def test_siap_perfect_output():
    truths = [_truth(k) for k in range(100)]
    rep = siap(truths, _steps(lambda k: [_particle([7], _line(k))]))
    assert (rep.continuity, rep.ambiguity, rep.spuriousness, rep.positional, rep.break_rate) == (1.0, 1.0, 0.0, 0.0, 0.0)


def test_one_id_change_in_a_hundred_steps():
    truths = [_truth(k) for k in range(100)]
    rep = siap(truths, _steps(lambda k: [_particle([1 if k < 50 else 2], _line(k))]))
    assert rep.break_rate == pytest.approx(0.01)
    assert rep.milli_breaks == pytest.approx(10.0)


def test_two_tracks_on_one_truth_double_the_ambiguity():
    truths = [_truth(k) for k in range(100)]
    rep = siap(truths, _steps(lambda k: [_particle([1, 2], np.vstack([_line(k), _line(k) + 0.5]))]))
    assert rep.ambiguity == pytest.approx(2.0)
    assert rep.continuity == 1.0 and rep.spuriousness == 0.0
    assert rep.positional == pytest.approx(math.sqrt(0.5) / 2)


def test_far_tracks_are_spurious():
    truths = [_truth(k) for k in range(10)]
    steps = [StepSnapshot(k, np.arange(1), [_particle([1, 2], np.vstack([_line(k), _line(k) + 500.0]))]) for k in range(10)]
    rep = siap(truths, steps)
    assert rep.spuriousness == pytest.approx(0.5) and rep.continuity == 1.0


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_weighted_siap_with_one_particle_is_unweighted(seed):
    rng = np.random.default_rng(seed)
    truths = [_truth(k, 2) for k in range(20)]
    tracks = {k: [_particle(rng.integers(0, 3, 2), truths[k].positions + rng.normal(0, 4, (2, 2)))] for k in range(20)}
    doubled = {k: [_particle(p.ids, p.positions, 0.5) for p in tracks[k] * 2] for k in range(20)}
    one = siap(truths, [StepSnapshot(k, np.zeros(1, int), tracks[k]) for k in range(20)])
    two = siap(truths, [StepSnapshot(k, np.arange(2), doubled[k]) for k in range(20)])
    for name in ("continuity", "ambiguity", "spuriousness", "positional", "break_rate"):
        a, b = getattr(one, name), getattr(two, name)
        assert (math.isnan(a) and math.isnan(b)) or a == pytest.approx(b, rel=1e-12)


def _params(**kw):
    base = dict(clutter_rate=12.0, birth_rate=0.1, noise_var=1.0)
    base.update(kw)
    return GenParams(**base)


def test_armse_of_a_point_mass_at_truth_vanishes():
    truths = [_truth(k) for k in range(5)]
    big = 1e12
    steps = [
        StepSnapshot(k, np.zeros(1, int), [_particle([1], _line(k), rate=(5.0 * big, big), birth=(0.1 * big, big), clutter=(12.0 * big, big), noise=(big, big))])
        for k in range(5)
    ]
    rep = armse(truths, steps, _params())
    for value in rep.to_dict().values():
        assert value == pytest.approx(0.0, abs=1e-5)


def test_armse_of_a_centred_gamma_is_its_std():
    eps, xi = 4.0, 40.0
    steps = [StepSnapshot(0, np.zeros(1, int), [_particle([1], _line(0), birth=(eps, xi))])]
    rep = armse([_truth(0)], steps, _params(birth_rate=eps / xi))
    assert rep.birth_rate == pytest.approx(math.sqrt(eps) / xi, rel=1e-12)


def test_posterior_mse_matches_sampling():
    rng = np.random.default_rng(0)
    gam = GammaPosterior(3.0, 2.0)
    draws = rng.gamma(3.0, 0.5, 1_000_000)
    assert gam.mse(1.2) == pytest.approx(np.mean((draws - 1.2) ** 2), rel=0.01)
    inv = InvGammaPosterior(6.0, 5.0)
    draws = 1.0 / rng.gamma(6.0, 1.0 / 5.0, 1_000_000)
    assert inv.mse(0.8) == pytest.approx(np.mean((draws - 0.8) ** 2), rel=0.01)
    assert math.isnan(InvGammaPosterior(1.5, 1.0).mse(1.0))


def test_classification_error_uses_truth_class_probability():
    truths = [_truth(0)]
    steps = [StepSnapshot(0, np.zeros(1, int), [_particle([1], _line(0), classes=[[0.64, 0.36]])])]
    assert armse(truths, steps, _params()).classification == pytest.approx(0.6)
