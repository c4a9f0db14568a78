"""Wavelet scalograms: band definitions, transform oracle, windowing, cache."""

import math

import numpy as np
import pytest

from vadet.errors import InvalidInputError, ScaleTooLargeError, WindowTooShortError
from vadet.ingest import LabelSet, PassageRecord, build_binary_labels, label_uncertainty
from vadet.scalogram import (
    DEFAULT_CHANNEL_SPECS,
    MIN_WINDOW,
    Scalogram,
    WaveletSpec,
    canonical_family,
    cwt,
    is_complex_family,
    load_scalogram,
    mother_wavelet,
    normalize,
    save_scalogram,
    scale_grid,
    transform_passage,
    transform_signal,
    wavelet_taps,
    window_bounds,
)

# ---------------------------------------------------------------------------
# Reference implementation, written from the definition:
#   c[b] = (1/sqrt(a)) * sum_j x[b+j] * conj(psi(j/a)),  zero extension.
# The wavelet formulas are restated here independently of the module.


def ref_wavelet(family, x):
    x = np.asarray(x, dtype=np.float64)
    if family == "gaus1":
        return -2.0 * x * np.exp(-(x**2)) * (2.0 / np.pi) ** 0.25
    if family == "cgau1":
        return (
            (2.0 * np.pi) ** -0.25
            * (-1j - 2.0 * x)
            * np.exp(-1j * x - x**2)
        )
    if family == "fbsp":
        core = np.where(x == 0.0, 1.0, np.sin(np.pi * x) / np.where(x == 0.0, 1.0, np.pi * x))
        return core * np.exp(2j * np.pi * 1.5 * x)
    raise AssertionError(family)


def ref_cwt(signal, family, scales):
    signal = np.asarray(signal, dtype=np.complex128)
    rows = []
    for a in scales:
        half = int(math.floor(8.0 * a))
        j = np.arange(-half, half + 1)
        taps = np.conj(ref_wavelet(family, j / a)) / math.sqrt(a)
        padded = np.concatenate(
            [np.zeros(half, np.complex128), signal, np.zeros(half, np.complex128)]
        )
        windows = np.lib.stride_tricks.sliding_window_view(padded, 2 * half + 1)
        row = windows @ taps
        rows.append(np.abs(row) if family in ("cgau1", "fbsp") else np.real(row))
    return np.stack(rows)


# ---------------------------------------------------------------------------
# Families and specs


def test_family_aliases():
    assert canonical_family("cgau1") == canonical_family(canonical_family("cgau1"))
    assert is_complex_family("cgau1")
    assert is_complex_family("fbsp")
    assert not is_complex_family("gaus1")
    with pytest.raises(InvalidInputError):
        canonical_family("morlet")


def test_wavelet_spec_validation():
    with pytest.raises(InvalidInputError):
        WaveletSpec("gaus1", 6.5, 0.6)
    with pytest.raises(InvalidInputError):
        WaveletSpec("gaus1", 0.0, 6.5)
    with pytest.raises(InvalidInputError):
        WaveletSpec("gaus1", 1.0, 2.0, n_scales=1)


def test_default_channels():
    bands = [(s.family, s.scale_min, s.scale_max, s.n_scales) for s in DEFAULT_CHANNEL_SPECS]
    assert bands == [
        (canonical_family("cgau1"), 1.0, 8.0, 16),
        (canonical_family("cgau1"), 8.0, 50.0, 16),
        (canonical_family("gaus1"), 0.6, 6.5, 16),
        (canonical_family("gaus1"), 6.5, 35.0, 16),
        (canonical_family("fbsp"), 1.5, 10.0, 16),
        (canonical_family("fbsp"), 10.0, 40.0, 16),
    ]


def test_scale_grid_examples():
    g = scale_grid(WaveletSpec("gaus1", 0.6, 6.5, 16))
    assert g.shape == (16,)
    assert g[0] == 0.6 and g[-1] == 6.5
    np.testing.assert_allclose(np.diff(g), (6.5 - 0.6) / 15)
    g2 = scale_grid(WaveletSpec("cgau1", 1.0, 8.0, 16))
    np.testing.assert_allclose(g2, np.linspace(1.0, 8.0, 16))


# ---------------------------------------------------------------------------
# Mother wavelets: analytic properties independent of any sampling choice


@pytest.mark.parametrize("family", ["gaus1", "cgau1", "fbsp"])
def test_unit_energy(family):
    # quadrature of |psi|^2 over [-30, 30]
    x = np.linspace(-30.0, 30.0, 400001)
    psi = mother_wavelet(family, x)
    energy = np.trapezoid(np.abs(psi) ** 2, x)
    if family == "fbsp":
        # |psi|^2 = sinc^2 decays only like 1/x^2; add the analytic tail
        # 2 * int_30^inf sin^2(pi x)/(pi x)^2 dx ~= 1 / (pi^2 * 30)
        energy += 1.0 / (np.pi**2 * 30.0)
    assert energy == pytest.approx(1.0, abs=5e-4)


def test_gaus1_is_odd_and_zero_at_origin():
    x = np.linspace(-3, 3, 101)
    psi = mother_wavelet("gaus1", x)
    assert psi[50] == 0.0
    np.testing.assert_allclose(psi, -psi[::-1], atol=1e-15)


def test_cgau1_matches_derivative_definition():
    # first derivative of exp(-1j*x - x^2), scaled to unit energy
    x = np.linspace(-2.5, 2.5, 2001)
    h = x[1] - x[0]
    base = np.exp(-1j * x - x**2)
    numeric = (base[2:] - base[:-2]) / (2 * h)
    psi = mother_wavelet("cgau1", x[1:-1])
    np.testing.assert_allclose(psi, (2 * np.pi) ** -0.25 * numeric, atol=1e-5)


def test_fbsp_center_value_and_envelope():
    assert mother_wavelet("fbsp", np.array([0.0]))[0] == 1.0
    x = np.array([0.5, 1.0, 2.0])
    np.testing.assert_allclose(
        np.abs(mother_wavelet("fbsp", x)), np.abs(np.sinc(x)), atol=1e-15
    )


def test_wavelet_taps_layout():
    taps = wavelet_taps("gaus1", 2.5)
    assert taps.shape == (2 * 20 + 1,)  # floor(8 * 2.5) = 20
    assert taps[20] == 0.0  # gaus1 vanishes at the origin
    # 1/sqrt(a) scaling at a point where the wavelet is nonzero
    assert taps[21] == pytest.approx(
        mother_wavelet("gaus1", 1 / 2.5) / math.sqrt(2.5)
    )
    ctaps = wavelet_taps("cgau1", 1.0)
    assert ctaps[8] == np.conj(mother_wavelet("cgau1", np.array([0.0]))[0])


# ---------------------------------------------------------------------------
# Transform vs the reference


@pytest.mark.parametrize("spec", DEFAULT_CHANNEL_SPECS, ids=lambda s: f"{s.family}-{s.scale_min:g}")
def test_cwt_matches_reference(spec, rng):
    x = rng.standard_normal(700)
    got = cwt(x, spec.family, scale_grid(spec))
    short = {"complex-gaussian-derivative-1": "cgau1", "gaussian-derivative-1": "gaus1",
             "frequency-b-spline": "fbsp"}[spec.family]
    ref = ref_cwt(x, short, scale_grid(spec))
    assert np.linalg.norm(got - ref) <= 1e-6 * np.linalg.norm(ref)


def test_cwt_zero_signal():
    out = cwt(np.zeros(256), "gaus1", [1.0, 2.0, 4.0])
    assert out.shape == (3, 256)
    assert np.all(out == 0.0)


def test_cwt_constant_interior_vanishes_for_odd_wavelet():
    # gaus1 integrates to zero, so a constant signal gives ~0 away from edges
    out = cwt(np.full(600, 3.7), "gaus1", [4.0])
    half = int(math.floor(8.0 * 4.0))
    assert np.abs(out[0, half:-half]).max() < 1e-10


def test_cwt_impulse_row():
    n = 501
    x = np.zeros(n)
    x[250] = 1.0
    a = 3.0
    out = cwt(x, "cgau1", [a])
    # response at the impulse equals |psi(0)| / sqrt(a)
    expected = np.abs(mother_wavelet("cgau1", np.array([0.0]))[0]) / math.sqrt(a)
    assert out[0, 250] == pytest.approx(expected, rel=1e-12)
    # and the full row is the modulus of the scaled wavelet, reversed
    half = int(math.floor(8.0 * a))
    j = np.arange(-half, half + 1)
    np.testing.assert_allclose(
        out[0, 250 - half : 250 + half + 1],
        np.abs(mother_wavelet("cgau1", -j / a)) / math.sqrt(a),
        atol=1e-12,
    )


def test_cwt_amplitude_linearity(rng):
    x = rng.standard_normal(300)
    base = cwt(x, "gaus1", [2.0, 5.0])
    np.testing.assert_allclose(cwt(3.0 * x, "gaus1", [2.0, 5.0]), 3.0 * base, atol=1e-12)


def test_cwt_shift_covariance(rng):
    x = np.zeros(400)
    x[60:140] = rng.standard_normal(80)
    a = 2.0
    out1 = cwt(x, "fbsp", [a])
    out2 = cwt(np.roll(x, 37), "fbsp", [a])
    # compare interior columns unaffected by the zero boundary
    margin = int(math.floor(8.0 * a))
    np.testing.assert_allclose(
        out2[0, 60 + 37 - margin + margin : 140 + 37],
        out1[0, 60 : 140 - 37 + 37],
        atol=1e-10,
    )


def test_cwt_scale_too_large():
    with pytest.raises(ScaleTooLargeError):
        cwt(np.ones(10), "gaus1", [13.0])  # support 209 > 100
    out = cwt(np.ones(10), "gaus1", [6.0])  # support 97 <= 100
    assert out.shape == (1, 10)


def test_cwt_input_validation():
    with pytest.raises(InvalidInputError):
        cwt(np.array([]), "gaus1", [1.0])
    with pytest.raises(InvalidInputError):
        cwt(np.array([[1.0, 2.0]]), "gaus1", [1.0])
    with pytest.raises(InvalidInputError):
        cwt(np.array([1.0, np.nan]), "gaus1", [1.0])
    with pytest.raises(InvalidInputError):
        cwt(np.ones(16), "gaus1", [0.0])


# ---------------------------------------------------------------------------
# Normalization and windowing


def test_normalize_example():
    out = normalize(np.array([[0.0, 5.0], [10.0, 5.0]]))
    np.testing.assert_array_equal(out, [[0.0, 0.5], [1.0, 0.5]])


def test_normalize_constant_and_validation():
    assert np.all(normalize(np.full((3, 4), 7.7)) == 0.0)
    with pytest.raises(InvalidInputError):
        normalize(np.array([[1.0, np.inf]]))


def test_window_bounds_example():
    start, end = window_bounds([1000], 4000)
    assert (start, end) == (850, 1501)
    assert end - start == 651


def test_window_bounds_clamped():
    assert window_bounds([100, 400], 10000) == (0, 901)
    assert window_bounds([9800], 10000) == (9650, 10000)
    assert window_bounds([100], 120) == (0, 120)


# ---------------------------------------------------------------------------
# Whole-passage transform


def _passage_with_crossing(n, crossings, n_sensors=1, seed=0):
    rng = np.random.default_rng(seed)
    accel = rng.standard_normal((n, n_sensors))
    wheel = np.zeros((n, 2))
    passage = PassageRecord(
        id="p", accel=accel, wheel_load=wheel, sensor_offsets=np.full(n_sensors, 7.2)
    )
    idx = np.asarray(crossings, dtype=np.int64)
    if idx.ndim == 1:
        idx = np.repeat(idx[:, None], n_sensors, axis=1)
    labels = LabelSet(
        axle_velocities=np.full(idx.shape[0], 30.0),
        crossing_indices=idx,
        uncertainty=label_uncertainty(30.0, 7.2) * np.ones(idx.shape),
        targets=build_binary_labels(idx, n),
    )
    return passage, labels


def test_transform_signal_shape_and_range(rng):
    out = transform_signal(rng.standard_normal(300))
    assert out.shape == (300, 16, 6)
    assert out.dtype == np.float32
    for t in range(6):
        slab = out[:, :, t]
        assert slab.min() == 0.0
        assert slab.max() == 1.0


def test_transform_passage_window_layout():
    passage, labels = _passage_with_crossing(4000, [1000])
    sg, target, start = transform_passage(passage, labels, 0)
    assert start == 850
    assert sg.window_start == 850
    assert sg.tensor.shape == (651, 16, 6)
    assert target.shape == (651,)
    assert target.dtype == np.float32
    assert list(np.flatnonzero(target)) == [150]


def test_transform_passage_clamped_start():
    passage, labels = _passage_with_crossing(4000, [100])
    sg, target, start = transform_passage(passage, labels, 0)
    assert start == 0
    assert list(np.flatnonzero(target)) == [100]


def test_transform_passage_sensor_selection():
    passage, labels = _passage_with_crossing(4000, np.array([[1000, 2000]]), n_sensors=2)
    _, t0, s0 = transform_passage(passage, labels, 0)
    _, t1, s1 = transform_passage(passage, labels, 1)
    assert (s0, s1) == (850, 1850)
    assert list(np.flatnonzero(t0)) == [150]
    assert list(np.flatnonzero(t1)) == [150]
    with pytest.raises(InvalidInputError):
        transform_passage(passage, labels, 2)


def test_transform_passage_window_too_short():
    passage, labels = _passage_with_crossing(10, [3])
    with pytest.raises(WindowTooShortError):
        transform_passage(passage, labels, 0)
    assert MIN_WINDOW == 16


# ---------------------------------------------------------------------------
# Cache format


def test_scalogram_cache_roundtrip(tmp_path, rng):
    sg = Scalogram(tensor=rng.random((40, 16, 6), dtype=np.float32), window_start=123)
    path = tmp_path / "x.bin"
    save_scalogram(sg, path)
    loaded = load_scalogram(path)
    assert loaded.window_start == 123
    np.testing.assert_array_equal(loaded.tensor, sg.tensor)
    assert loaded.tensor.dtype == np.float32


def test_scalogram_cache_layout(tmp_path):
    tensor = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    save_scalogram(Scalogram(tensor=tensor, window_start=7), tmp_path / "y.bin")
    raw = (tmp_path / "y.bin").read_bytes()
    assert len(raw) == 16 + 24 * 4
    header = np.frombuffer(raw[:16], dtype="<i4")
    np.testing.assert_array_equal(header, [2, 3, 4, 7])
    body = np.frombuffer(raw[16:], dtype="<f4")
    np.testing.assert_array_equal(body, np.arange(24, dtype=np.float32))


def test_scalogram_cache_truncation_errors(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"\x01\x00")
    with pytest.raises(InvalidInputError):
        load_scalogram(p)
    sg = Scalogram(tensor=np.zeros((2, 3, 4), np.float32), window_start=0)
    save_scalogram(sg, p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(InvalidInputError):
        load_scalogram(p)


def test_scalogram_cache_deterministic_bytes(tmp_path, rng):
    sg = Scalogram(tensor=rng.random((5, 16, 6), dtype=np.float32), window_start=9)
    save_scalogram(sg, tmp_path / "a.bin")
    save_scalogram(sg, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
