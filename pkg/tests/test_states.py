import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from relbohm.core import discrete_norm, make_grid, modal_norm, to_modes
from relbohm.dispersion import EXACT, NONRELATIVISTIC, DispersionModel, TruncationDivergenceWarning
from relbohm.states import (
    BoxSuperposition,
    GridState,
    NodeSingularityError,
    PlaneWave,
    TwoWave,
    box_energy,
    eval_grad_s,
    eval_psi,
    gaussian_packet,
    normalize,
)

TWO_MODE = {1: 1.0, 2: 1.0}


class TestEvalPsi:
    def test_plane_wave_rest_phase(self):
        assert eval_psi(PlaneWave(0.0, 1.0), 3.0, 7.0) == pytest.approx(np.exp(-7j), abs=1e-15)

    def test_plane_wave_phase(self):
        s = PlaneWave(0.75, 2.0)
        assert eval_psi(s, 1.0, 2.0) == pytest.approx(2.0 * np.exp(1j * (0.75 - 1.25 * 2.0)), abs=1e-14)

    def test_box_ground_state_peak(self):
        s = BoxSuperposition.from_modes(np.pi, {1: 1.0})
        assert eval_psi(s, np.pi / 2, 0.0) == pytest.approx(np.sqrt(2 / np.pi), abs=1e-15)

    def test_box_phase_uses_mode_energy(self):
        s = BoxSuperposition.from_modes(np.pi, {1: 1.0})
        t = 0.37
        assert eval_psi(s, 1.0, t) == pytest.approx(np.sqrt(2 / np.pi) * np.sin(1.0) * np.exp(-1j * np.sqrt(2) * t))

    def test_two_mode_node(self):
        # sin(u) + sin(2u) = sin(u) (1 + 2 cos u) vanishes at u = 2 pi / 3
        s = BoxSuperposition.from_modes(3.0, TWO_MODE)
        assert abs(eval_psi(s, 2.0, 0.0)) < 1e-15

    @settings(max_examples=30)
    @given(seed=st.integers(0, 2**32 - 1), length=st.floats(0.1, 1e3), t=st.floats(-1e3, 1e3))
    def test_box_boundaries(self, seed, length, t):
        rng = np.random.default_rng(seed)
        coeffs = {n: complex(*rng.normal(size=2)) for n in range(1, 6)}
        s = BoxSuperposition.from_modes(length, coeffs)
        assert abs(eval_psi(s, 0.0, t)) <= 1e-14
        assert abs(eval_psi(s, length, t)) <= 1e-14 * np.sqrt(2 / length) * 5 + 1e-14

    def test_box_out_of_domain(self):
        s = BoxSuperposition.from_modes(1.0, TWO_MODE)
        with pytest.raises(ValueError):
            eval_psi(s, 1.5, 0.0)
        with pytest.raises(ValueError):
            eval_psi(s, -0.1, 0.0)

    def test_grid_state_interpolates_nodes(self):
        g = make_grid(64, 20.0)
        s = gaussian_packet(g, 2.0, k0=0.5)
        assert np.allclose(eval_psi(s, g.positions), s.samples, atol=1e-13)

    def test_grid_state_off_grid(self):
        g = make_grid(256, 40.0)
        s = gaussian_packet(g, 2.0, k0=0.3)
        x = np.array([3.3, 20.05, 31.7])
        exact = np.exp(-((x - 20.0) ** 2) / 16.0 + 0.3j * x)
        assert np.allclose(eval_psi(s, x), exact, atol=1e-12)


class TestGradS:
    def test_plane_wave(self):
        x = np.linspace(-10, 10, 7)
        assert np.allclose(eval_grad_s(PlaneWave(0.75), x, 3.0), 0.75, atol=1e-15)

    def test_eigenstate_is_zero(self):
        s = BoxSuperposition.from_modes(5.0, {3: 1.0})
        x = np.linspace(0.1, 1.6, 9)
        assert np.all(eval_grad_s(s, x, 2.3) == pytest.approx(0.0, abs=1e-13))

    def test_two_wave_value(self):
        s = TwoWave(0.2, 0.4, 1.0, 0.0)
        assert eval_grad_s(s, 0.0, 0.0) == pytest.approx(0.3, abs=1e-15)

    @settings(max_examples=100)
    @given(k1=st.floats(-3, 3), k2=st.floats(-3, 3), b=st.floats(0, 3), delta=st.floats(0, 2 * np.pi),
           x=st.floats(-50, 50), t=st.floats(-50, 50), nonrel=st.booleans())
    def test_two_wave_closed_form(self, k1, k2, b, delta, x, t, nonrel):
        s = TwoWave(k1, k2, b, delta, 1.0, NONRELATIVISTIC if nonrel else EXACT)
        xi = s.relative_phase(x, t)
        # stay away from the node at b = 1, xi = pi
        if 1 + b * b + 2 * b * np.cos(xi) < 1e-3:
            return
        numeric = eval_grad_s(s, x, t)
        closed = s.closed_form_grad_s(x, t)
        assert numeric == pytest.approx(closed, rel=1e-10, abs=1e-12)

    def test_real_grid_state(self):
        g = make_grid(128, 30.0)
        s = gaussian_packet(g, 3.0)
        x = np.linspace(5.0, 25.0, 11)
        assert np.allclose(eval_grad_s(s, x), 0.0, atol=1e-12)

    def test_node_raises(self):
        s = BoxSuperposition.from_modes(3.0, TWO_MODE)
        with pytest.raises(NodeSingularityError):
            eval_grad_s(s, 2.0, 0.0)
        with pytest.raises(NodeSingularityError):
            eval_grad_s(s, 0.0, 0.0)


class TestBoxEnergy:
    def test_ground_state(self):
        assert box_energy(1, np.pi) == pytest.approx(np.sqrt(2), abs=1e-15)

    def test_cube(self):
        assert box_energy((1, 1, 1), np.pi) == pytest.approx(2.0, abs=1e-15)

    def test_large_box(self):
        assert box_energy(1, 100 * np.pi) == pytest.approx(1.0000500, abs=5e-8)
        assert box_energy(1, 100 * np.pi) == pytest.approx(np.sqrt(1 + 1e-4), abs=1e-15)

    def test_nonrelativistic_limit(self):
        n, length = 3, 1000 * np.pi
        k = n * np.pi / length
        assert box_energy(n, length) == pytest.approx(1 + k * k / 2, rel=1e-9)

    @pytest.mark.parametrize("mode", [0, -1, (1, 0, 1), 1.5, (1, 2)])
    def test_bad_mode(self, mode):
        with pytest.raises(ValueError):
            box_energy(mode, 1.0)

    def test_bad_length(self):
        with pytest.raises(ValueError):
            box_energy(1, 0.0)

    def test_truncated_beyond_band_warns(self):
        with pytest.warns(TruncationDivergenceWarning):
            box_energy(2, np.pi, DispersionModel(2))


class TestNormalize:
    def test_two_mode(self):
        s = normalize(BoxSuperposition(1.0, {1: 1.0, 2: 1.0}))
        assert np.allclose(s.coefficients, [2**-0.5, 2**-0.5])

    def test_idempotent(self):
        s = normalize(BoxSuperposition(1.0, {1: 3.0, 4: 4j}))
        assert normalize(s) == s

    def test_grid_gaussian(self):
        g = make_grid(256, 40.0)
        s = normalize(gaussian_packet(g, 2.0, amplitude=7.5 - 2j))
        assert discrete_norm(s.samples, g) == pytest.approx(1.0, rel=1e-14)
        assert modal_norm(to_modes(s.samples, g), g) == pytest.approx(1.0, rel=1e-12)

    def test_plane_wave_unchanged(self):
        s = PlaneWave(0.3, 5.0)
        assert normalize(s) is s

    def test_zero_state(self):
        with pytest.raises(ValueError):
            normalize(BoxSuperposition(1.0, {1: 0.0}))
        g = make_grid(16, 1.0)
        with pytest.raises(ValueError):
            normalize(GridState(g, np.zeros(16)))

    def test_box_is_normalized_in_space(self):
        s = BoxSuperposition.from_modes(2.0, {1: 1.0, 2: 1j, 5: -0.5})
        x = np.linspace(0, 2.0, 4001)
        rho = np.abs(eval_psi(s, x, 0.4)) ** 2
        assert trapezoid(rho, x) == pytest.approx(1.0, rel=1e-6)


class TestBoxSuperposition:
    def test_indices_sorted_and_energies(self):
        s = BoxSuperposition.from_modes(2.0, {3: 1.0, 1: 1.0})
        assert list(s.indices) == [1, 3]
        assert np.allclose(s.energies, [box_energy(1, 2.0), box_energy(3, 2.0)])

    @pytest.mark.parametrize("bad", [{0: 1.0}, {-2: 1.0}, {}])
    def test_bad_modes(self, bad):
        with pytest.raises(ValueError):
            BoxSuperposition(1.0, bad)

    def test_flow_terms_match_jet(self):
        s = BoxSuperposition.from_modes(1.3, {1: 1.0, 2: 0.5 - 0.2j, 4: 0.3j})
        x = np.linspace(0.0, 1.3, 57)
        t = 0.77
        jet = s.jet(x, t)
        rho, cur, re, cur2 = s.flow_terms(x, t, second=True)
        c = np.conj(jet.psi)
        assert np.allclose(rho, np.abs(jet.psi) ** 2, atol=1e-14)
        assert np.allclose(cur, np.imag(c * jet.dpsi), atol=1e-13)
        assert np.allclose(re, np.real(c * jet.dpsi), atol=1e-13)
        assert np.allclose(cur2, np.imag(c * jet.d2psi), atol=1e-12)

    def test_jet_derivatives(self):
        s = BoxSuperposition.from_modes(2.0, {1: 1.0, 3: 1j})
        x = np.linspace(0.2, 1.8, 9)
        h = 1e-5
        jet = s.jet(x, 0.3)
        fd = (s.jet(x + h, 0.3).psi - s.jet(x - h, 0.3).psi) / (2 * h)
        assert np.allclose(jet.dpsi, fd, atol=1e-8)
        phases = s.coefficients * np.exp(-1j * s.energies * 0.3)
        modes = np.sqrt(2 / 2.0) * np.sin(np.multiply.outer(x, s.wavenumbers))
        assert np.allclose(jet.hpsi, modes @ (s.energies * phases), atol=1e-14)

    def test_beat_period(self):
        s = BoxSuperposition.from_modes(1.0, TWO_MODE)
        assert s.beat_period() == pytest.approx(2 * np.pi / (box_energy(2, 1.0) - box_energy(1, 1.0)))
        assert BoxSuperposition.from_modes(1.0, {2: 1.0}).beat_period() is None


class TestGridState:
    def test_shape_checked(self):
        with pytest.raises(ValueError):
            GridState(make_grid(16, 1.0), np.ones(8))

    def test_samples_immutable(self):
        s = GridState(make_grid(16, 1.0), np.ones(16))
        with pytest.raises(ValueError):
            s.samples[0] = 2.0

    def test_gaussian_width(self):
        g = make_grid(512, 80.0)
        s = normalize(gaussian_packet(g, 3.0))
        rho = np.abs(s.samples) ** 2 * g.spacing
        mean = np.sum(rho * g.positions)
        assert np.sqrt(np.sum(rho * (g.positions - mean) ** 2)) == pytest.approx(3.0, rel=1e-10)

    def test_bad_sigma(self):
        with pytest.raises(ValueError):
            gaussian_packet(make_grid(16, 1.0), 0.0)

    def test_jet_consistent_with_grid_jet(self):
        g = make_grid(128, 30.0)
        s = gaussian_packet(g, 2.0, k0=0.7)
        a, b = s.jet(g.positions, 1.5), s.grid_jet(1.5)
        for u, v in zip(a, b):
            assert np.allclose(u, v, atol=1e-12)


def test_states_immutable():
    for s in (PlaneWave(1.0), TwoWave(0.1, 0.2), BoxSuperposition(1.0, {1: 1.0})):
        with pytest.raises(AttributeError):
            s.model = NONRELATIVISTIC


def test_no_warning_for_in_band_truncated_states():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        eval_psi(TwoWave(0.2, 0.4, model=DispersionModel(3)), 1.0, 2.0)
