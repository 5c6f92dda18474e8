import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relbohm.core import (
    QUANTITY_KINDS,
    SI_ELECTRON,
    Scales,
    discrete_norm,
    from_modes,
    make_grid,
    modal_norm,
    rescale,
    spectral_derivative,
    to_modes,
)


class TestScales:
    def test_compton_length_definition(self):
        s = Scales(rest_mass=2.0, light_speed=3.0, planck_reduced=5.0)
        assert s.compton_length == 5.0 / (2.0 * 3.0)
        assert s.compton_time == 5.0 / (2.0 * 9.0)

    @pytest.mark.parametrize("bad", [0.0, -1.0, np.inf, np.nan])
    def test_rejects_nonpositive(self, bad):
        with pytest.raises(ValueError):
            Scales(rest_mass=bad, light_speed=1.0, planck_reduced=1.0)

    def test_electron_compton_length(self):
        # reduced Compton wavelength of the electron, CODATA 2018
        assert SI_ELECTRON.compton_length == pytest.approx(3.8615926796e-13, rel=1e-9)


class TestRescale:
    def test_compton_length_is_one(self):
        assert rescale(SI_ELECTRON.compton_length, SI_ELECTRON, "length") == pytest.approx(1.0, rel=1e-15)

    def test_rest_energy_is_one(self):
        s = SI_ELECTRON
        e0 = s.rest_mass * s.light_speed**2
        assert rescale(e0, s, "energy") == pytest.approx(1.0, rel=1e-15)

    def test_momentum_linear(self):
        s = SI_ELECTRON
        p = 0.75 * s.rest_mass * s.light_speed
        assert rescale(p, s, "momentum") == pytest.approx(0.75, rel=1e-15)

    def test_velocity_and_wavenumber(self):
        s = SI_ELECTRON
        assert rescale(0.5 * s.light_speed, s, "velocity") == pytest.approx(0.5, rel=1e-15)
        assert rescale(2.0 / s.compton_length, s, "wavenumber") == pytest.approx(2.0, rel=1e-15)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown quantity kind"):
            rescale(1.0, SI_ELECTRON, "temperature")

    def test_unknown_direction(self):
        with pytest.raises(ValueError):
            rescale(1.0, SI_ELECTRON, "length", direction="sideways")

    @given(
        value=st.floats(min_value=-1e30, max_value=1e30, allow_nan=False).filter(lambda v: abs(v) > 1e-30),
        kind=st.sampled_from(QUANTITY_KINDS),
    )
    def test_round_trip(self, value, kind):
        there = rescale(value, SI_ELECTRON, kind)
        back = rescale(there, SI_ELECTRON, kind, direction="to-dimensional")
        assert back == pytest.approx(value, rel=1e-14)


class TestGrid:
    def test_wavenumbers_unit_lattice(self):
        g = make_grid(8, 2 * np.pi)
        assert sorted(np.round(g.wavenumbers).astype(int).tolist()) == [-4, -3, -2, -1, 0, 1, 2, 3]
        assert np.allclose(g.wavenumbers, [0, 1, 2, 3, -4, -3, -2, -1], atol=1e-15)

    def test_spacing(self):
        assert make_grid(1024, 40).spacing == 0.0390625

    def test_nyquist(self):
        g = make_grid(64, 10.0)
        assert g.nyquist == pytest.approx(np.pi * 64 / 10.0)
        assert np.max(np.abs(g.wavenumbers)) == pytest.approx(g.nyquist)

    @pytest.mark.parametrize("n", [7, 0, 4, 12, 1000])
    def test_power_of_two_required(self, n):
        with pytest.raises(ValueError):
            make_grid(n, 10)

    @pytest.mark.parametrize("length", [0.0, -1.0, np.inf])
    def test_length_positive(self, length):
        with pytest.raises(ValueError):
            make_grid(16, length)

    @given(n_exp=st.integers(3, 12), length=st.floats(1e-3, 1e4))
    def test_uniform_spacing(self, n_exp, length):
        g = make_grid(2**n_exp, length)
        d = np.diff(g.positions)
        assert np.all(np.abs(d - g.spacing) <= 1e-15 * max(1.0, length))
        j = np.abs(g.wavenumbers) * length / (2 * np.pi)
        assert np.allclose(j, np.round(j), atol=1e-9)
        assert np.array_equal(np.unique(np.round(j)), np.arange(g.point_count // 2 + 1))

    def test_immutable(self):
        g = make_grid(16, 1.0)
        with pytest.raises(ValueError):
            g.positions[0] = 3.0
        with pytest.raises(AttributeError):
            g.point_count = 32

    def test_equality_and_hash(self):
        assert make_grid(16, 2.0) == make_grid(16, 2.0)
        assert hash(make_grid(16, 2.0)) == hash(make_grid(16, 2.0))
        assert make_grid(16, 2.0) != make_grid(32, 2.0)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1), n_exp=st.integers(3, 11), length=st.floats(0.1, 1e3))
def test_parseval(seed, n_exp, length):
    g = make_grid(2**n_exp, length)
    rng = np.random.default_rng(seed)
    f = rng.normal(size=g.point_count) + 1j * rng.normal(size=g.point_count)
    assert modal_norm(to_modes(f, g), g) == pytest.approx(discrete_norm(f, g), rel=1e-12)
    assert np.allclose(from_modes(to_modes(f, g), g), f, atol=1e-12)


def test_spectral_derivative_of_sine():
    g = make_grid(64, 2 * np.pi)
    x = g.positions
    f = np.sin(3 * x)
    assert np.allclose(spectral_derivative(f, g), 3 * np.cos(3 * x), atol=1e-12)
    assert np.allclose(spectral_derivative(f, g, order=2), -9 * np.sin(3 * x), atol=1e-11)
