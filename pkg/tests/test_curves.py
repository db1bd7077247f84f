import numpy as np
import pytest

from rigsync.curves import (
    ControllerCurve,
    Key,
    RigAnimationClip,
    extract_keys,
    gaussian_kernel,
    gaussian_smooth,
    hermite_eval,
    rate_filter,
    reconstruct_dense,
)


def hermite_reference(k0: Key, k1: Key, frame: float) -> float:
    # independent form of the basis: (1+2t)(1-t)^2 etc.
    h = k1.frame - k0.frame
    t = (frame - k0.frame) / h
    return (
        (1 + 2 * t) * (1 - t) ** 2 * k0.value
        + t * (1 - t) ** 2 * h * k0.out_tangent
        + t * t * (3 - 2 * t) * k1.value
        + t * t * (t - 1) * h * k1.in_tangent
    )


def random_smooth_curve(rng, n):
    t = np.linspace(0.0, 1.0, n)
    curve = np.zeros(n)
    for _ in range(rng.integers(2, 5)):
        curve += rng.uniform(0.1, 1.0) * np.sin(2 * np.pi * rng.uniform(0.5, 3.0) * t + rng.uniform(0, 6.28))
    return curve + rng.uniform(-1, 1)


# --- hermite_eval ---

def test_hermite_constant_segment():
    assert hermite_eval(Key(0, 0.0, 0, 0), Key(10, 0.0, 0, 0), 5) == 0.0


def test_hermite_endpoint_exact():
    assert hermite_eval(Key(0, 0.0, 0, 0), Key(10, 1.0, 0, 0), 10) == 1.0


def test_hermite_zero_tangent_midpoint():
    # 3t^2 - 2t^3 at t=0.5
    assert hermite_eval(Key(0, 0.0, 0, 0), Key(10, 1.0, 0, 0), 5) == pytest.approx(0.5)


def test_hermite_matches_reference(rng):
    for _ in range(200):
        f0 = int(rng.integers(0, 50))
        f1 = f0 + int(rng.integers(1, 40))
        k0 = Key(f0, rng.normal(), rng.normal(), rng.normal())
        k1 = Key(f1, rng.normal(), rng.normal(), rng.normal())
        frame = rng.uniform(f0, f1)
        assert hermite_eval(k0, k1, frame) == pytest.approx(hermite_reference(k0, k1, frame), abs=1e-12)


def test_hermite_endpoints_exact_for_any_tangents(rng):
    for _ in range(100):
        k0 = Key(3, rng.normal(), rng.normal(), rng.normal() * 10)
        k1 = Key(17, rng.normal(), rng.normal() * 10, rng.normal())
        assert hermite_eval(k0, k1, 3) == k0.value
        assert hermite_eval(k0, k1, 17) == k1.value


def test_hermite_out_of_segment_rejected():
    k0, k1 = Key(5, 0.0), Key(10, 1.0)
    with pytest.raises(ValueError, match="outside segment"):
        hermite_eval(k0, k1, 4)
    with pytest.raises(ValueError, match="outside segment"):
        hermite_eval(k0, k1, 11)


def test_hermite_invalid_segment_rejected():
    with pytest.raises(ValueError, match="invalid segment"):
        hermite_eval(Key(10, 0.0), Key(10, 1.0), 10)
    with pytest.raises(ValueError, match="invalid segment"):
        hermite_eval(Key(11, 0.0), Key(10, 1.0), 10)


# --- reconstruct_dense ---

def test_reconstruct_single_key_holds_constant():
    out = reconstruct_dense([Key(3, 0.7, 0, 0)], 6)
    assert np.array_equal(out, np.full(6, 0.7))


def test_reconstruct_midpoint_smoothstep():
    out = reconstruct_dense([Key(0, 0.0, 0, 0), Key(2, 1.0, 0, 0)], 3)
    assert out == pytest.approx([0.0, 0.5, 1.0])


def test_reconstruct_passes_through_keys_and_holds_ends(rng):
    keys = [Key(2, 0.3, 0.1, -0.2), Key(9, -1.0, 0.4, 0.0), Key(14, 0.5, -0.3, 0.2)]
    out = reconstruct_dense(keys, 20)
    for k in keys:
        assert out[k.frame] == k.value
    assert np.all(out[:2] == 0.3)
    assert np.all(out[14:] == 0.5)


def test_reconstruct_rejects_bad_input():
    with pytest.raises(ValueError, match="at least one key"):
        reconstruct_dense([], 5)
    with pytest.raises(ValueError, match="strictly increasing"):
        reconstruct_dense([Key(3, 0.0), Key(3, 1.0)], 5)
    with pytest.raises(ValueError, match=r"\[0, 5\)"):
        reconstruct_dense([Key(5, 0.0)], 5)


# --- extract_keys ---

def test_extract_constant_gives_two_keys():
    keys = extract_keys(np.full(100, 0.4), 0.01)
    assert [k.frame for k in keys] == [0, 99]
    assert all(k.value == 0.4 for k in keys)


def test_extract_linear_ramp_two_keys_with_slope():
    ramp = np.linspace(0.0, 1.0, 50)
    keys = extract_keys(ramp, 0.01)
    assert len(keys) == 2
    for k in keys:
        assert k.in_tangent == pytest.approx(1 / 49)
        assert k.out_tangent == pytest.approx(1 / 49)
    assert np.abs(reconstruct_dense(keys, 50) - ramp).max() < 1e-12


def greedy_refinement_oracle(dense, tolerance):
    """Plain-loop reimplementation of the stated refinement rule."""
    n = len(dense)
    slopes = [0.0] * n
    slopes[0] = dense[1] - dense[0]
    slopes[-1] = dense[-1] - dense[-2]
    for i in range(1, n - 1):
        slopes[i] = (dense[i + 1] - dense[i - 1]) / 2.0

    frames = [0, n - 1]
    while True:
        recon = [0.0] * n
        for a, b in zip(frames, frames[1:]):
            k0 = Key(a, float(dense[a]), slopes[a], slopes[a])
            k1 = Key(b, float(dense[b]), slopes[b], slopes[b])
            for f in range(a, b):
                recon[f] = hermite_reference(k0, k1, f)
        recon[n - 1] = float(dense[n - 1])
        worst, worst_err = 0, -1.0
        for f in range(n):
            err = abs(recon[f] - dense[f])
            if err > worst_err:
                worst, worst_err = f, err
        if worst_err <= tolerance:
            return frames
        frames.append(worst)
        frames.sort()


def test_extract_sine_matches_refinement_oracle():
    dense = np.sin(np.linspace(0.0, 2 * np.pi, 120))
    keys = extract_keys(dense, 0.02)
    assert [k.frame for k in keys] == greedy_refinement_oracle(dense, 0.02)
    assert np.abs(reconstruct_dense(keys, 120) - dense).max() <= 0.02


def test_extract_round_trip_random_curves(rng):
    for _ in range(100):
        n = int(rng.integers(20, 200))
        dense = random_smooth_curve(rng, n)
        tol = float(rng.uniform(0.005, 0.05))
        keys = extract_keys(dense, tol)
        frames = [k.frame for k in keys]
        assert frames[0] == 0 and frames[-1] == n - 1
        assert all(b > a for a, b in zip(frames, frames[1:]))
        assert np.abs(reconstruct_dense(keys, n) - dense).max() <= tol


def test_extract_is_deterministic(rng):
    dense = random_smooth_curve(rng, 90)
    assert extract_keys(dense, 0.01) == extract_keys(dense, 0.01)


def test_extract_rejects_bad_input():
    with pytest.raises(ValueError):
        extract_keys([1.0], 0.01)
    with pytest.raises(ValueError):
        extract_keys([1.0, np.nan, 0.0], 0.01)
    with pytest.raises(ValueError):
        extract_keys([0.0, 1.0], 0.0)


# --- gaussian_smooth ---

def test_gaussian_constant_is_exact():
    for sigma in (0.5, 1.0, 2.0, 7.3):
        out = gaussian_smooth(np.full(40, 3.3), sigma)
        assert np.abs(out - 3.3).max() < 1e-9


def test_gaussian_sigma_zero_is_identity(rng):
    x = rng.normal(size=30)
    assert np.array_equal(gaussian_smooth(x, 0.0), x)


def test_gaussian_impulse_matches_analytic_kernel():
    sigma = 2.0
    n = 41
    x = np.zeros(n)
    x[n // 2] = 1.0
    out = gaussian_smooth(x, sigma)
    # analytic center weight of the truncated, normalized kernel
    radius = int(np.ceil(3 * sigma))
    taps = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    assert out[n // 2] == pytest.approx(1.0 / taps.sum(), abs=1e-12)
    assert gaussian_kernel(sigma).sum() == pytest.approx(1.0, abs=1e-9)
    assert out.sum() == pytest.approx(1.0, abs=1e-9)


def test_gaussian_never_widens_range(rng):
    for _ in range(50):
        x = rng.normal(size=int(rng.integers(5, 80)))
        out = gaussian_smooth(x, float(rng.uniform(0.2, 6.0)))
        assert out.min() >= x.min() - 1e-12
        assert out.max() <= x.max() + 1e-12


def test_gaussian_handles_radius_longer_than_signal():
    out = gaussian_smooth(np.array([1.0, 2.0, 3.0]), 10.0)
    assert out.shape == (3,)
    assert np.all(np.isfinite(out))


def test_gaussian_rejects_negative_sigma():
    with pytest.raises(ValueError):
        gaussian_smooth(np.zeros(5), -1.0)


# --- rate_filter ---

def test_rate_filter_rate_one_is_identity():
    keys = [Key(f, float(f)) for f in (0, 3, 5, 9)]
    assert rate_filter(keys, 1) == keys


def test_rate_filter_snaps_to_grid():
    keys = [Key(f, float(f)) for f in range(5)]
    assert [k.frame for k in rate_filter(keys, 2)] == [0, 2, 4]


def test_rate_filter_earliest_wins():
    # 3 -> 4 kept; 5 -> 4 dropped because 3 snapped there first; 7 kept as last
    keys = [Key(f, float(f)) for f in (0, 3, 5, 7)]
    assert [k.frame for k in rate_filter(keys, 4)] == [0, 4, 7]


def test_rate_filter_grid_property(rng):
    for _ in range(100):
        frames = np.sort(rng.choice(np.arange(120), size=int(rng.integers(2, 25)), replace=False))
        keys = [Key(int(f), float(rng.normal())) for f in frames]
        keys[0] = Key(0, keys[0].value)  # pipeline outputs always key frame 0
        rate = int(rng.choice([2, 4]))
        out = rate_filter(keys, rate)
        out_frames = [k.frame for k in out]
        assert all(b > a for a, b in zip(out_frames, out_frames[1:]))
        assert len(out) <= len(keys)
        assert all(f % rate == 0 for f in out_frames[:-1])
        assert out_frames[0] == keys[0].frame and out_frames[-1] == keys[-1].frame


def test_rate_filter_rejects_unsupported_rate():
    with pytest.raises(ValueError):
        rate_filter([Key(0, 0.0)], 3)


# --- domain type validation ---

def test_key_validation():
    with pytest.raises(ValueError):
        Key(-1, 0.0)
    with pytest.raises(ValueError):
        Key(0, float("nan"))
    with pytest.raises(ValueError):
        Key(0, 0.0, float("inf"), 0.0)


def test_curve_requires_some_data():
    with pytest.raises(ValueError):
        ControllerCurve("c")
    with pytest.raises(ValueError, match="strictly increasing"):
        ControllerCurve("c", keys=[Key(4, 0.0), Key(2, 1.0)])


def test_clip_validation():
    curve = ControllerCurve("c", dense=np.zeros(10))
    with pytest.raises(ValueError, match="frame_count"):
        RigAnimationClip("clip", 24.0, 1, 0, [])
    with pytest.raises(ValueError, match="fps"):
        RigAnimationClip("clip", 0.0, 10, 0, [])
    with pytest.raises(ValueError, match="expected 12"):
        RigAnimationClip("clip", 24.0, 12, 0, [curve])
    clip = RigAnimationClip("clip", 24.0, 10, 0, [curve])
    assert clip.controller("c") is curve
    with pytest.raises(KeyError):
        clip.controller("missing")
