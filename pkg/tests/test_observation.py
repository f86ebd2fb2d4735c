import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csiguard.channel import TimeChannel, init_channel, make_profile
from csiguard.observation import (
    PhaseDistortion,
    PilotGrid,
    draw_phase_distortion,
    observe,
    partial_dft,
    phase_error_matrix,
    snr_to_noise_var,
)


class TestPilotGrid:
    def test_num_pilots(self, grid114):
        assert grid114.num_pilots == 114

    def test_rejects_unsorted(self):
        with pytest.raises(ValueError):
            PilotGrid(8, (3, 1))

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            PilotGrid(8, (0, 8))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            PilotGrid(8, ())


class TestPartialDft:
    def test_first_column_is_ones(self, grid114):
        c = partial_dft(grid114, 8)
        assert np.allclose(c[:, 0], 1.0)

    def test_unit_magnitude(self, grid114):
        assert np.allclose(np.abs(partial_dft(grid114, 8)), 1.0, atol=1e-14)

    def test_full_dft_orthogonality(self):
        grid = PilotGrid(4, (0, 1, 2, 3))
        c = partial_dft(grid, 4)
        assert np.allclose(c @ c.conj().T, 4 * np.eye(4), atol=1e-12)

    def test_single_pilot_row_of_ones(self):
        grid = PilotGrid(16, (0,))
        assert np.allclose(partial_dft(grid, 5), 1.0)

    def test_rejects_too_many_paths(self, small_grid):
        with pytest.raises(ValueError):
            partial_dft(small_grid, 33)


class TestPhaseErrorMatrix:
    def test_zero_distortion_is_identity(self, small_grid):
        e = phase_error_matrix(PhaseDistortion(0.0, 0.0), small_grid)
        assert np.allclose(e, np.eye(small_grid.num_pilots))

    def test_pure_offset(self, small_grid):
        e = phase_error_matrix(PhaseDistortion(np.pi / 2, 0.0), small_grid)
        assert np.allclose(e, 1j * np.eye(small_grid.num_pilots))

    def test_pure_slope(self):
        m = 16
        grid = PilotGrid(m, tuple(range(m)))
        e = phase_error_matrix(PhaseDistortion(0.0, 2 * np.pi / m), grid)
        q = np.arange(m)
        assert np.allclose(np.diag(e), np.exp(2j * np.pi * q / m))

    @given(
        st.floats(min_value=-np.pi, max_value=np.pi - 1e-9),
        st.floats(min_value=-0.5, max_value=0.5),
    )
    @settings(max_examples=40)
    def test_unitary(self, offset, slope):
        grid = PilotGrid(32, tuple(range(0, 32, 3)))
        e = phase_error_matrix(PhaseDistortion(offset, slope), grid)
        assert np.allclose(e.conj().T @ e, np.eye(grid.num_pilots), atol=1e-12)

    def test_offset_wrapped(self):
        d = PhaseDistortion(3 * np.pi / 2, 0.0)
        assert -np.pi <= d.offset < np.pi
        assert d.offset == pytest.approx(-np.pi / 2)


class TestObserve:
    def test_noiseless_identity_phase(self, small_grid, rng):
        profile = make_profile(4, 1e-4, 0.5)
        h = init_channel(profile, rng)
        obs = observe(h, PhaseDistortion(0.0, 0.0), small_grid, 1e-30, rng)
        expected = partial_dft(small_grid, 4) @ h.taps
        assert np.allclose(obs.values, expected, atol=1e-10)
        assert obs.time_index == h.time_index

    def test_noise_variance(self, rng):
        grid = PilotGrid(16, tuple(range(8)))
        h = TimeChannel(taps=np.zeros(2, dtype=complex), time_index=0)
        noise_var = 0.37
        samples = np.concatenate(
            [
                observe(h, PhaseDistortion(0.0, 0.0), grid, noise_var, rng).values
                for _ in range(20_000)
            ]
        )
        assert np.mean(np.abs(samples) ** 2) == pytest.approx(noise_var, rel=0.02)

    def test_magnitude_invariant_to_distortion(self, small_grid, rng):
        profile = make_profile(4, 1e-4, 0.5)
        h = init_channel(profile, rng)
        base = observe(h, PhaseDistortion(0.0, 0.0), small_grid, 1e-30, rng)
        rotated = observe(h, PhaseDistortion(1.1, 0.21), small_grid, 1e-30, rng)
        assert np.allclose(np.abs(base.values), np.abs(rotated.values), atol=1e-12)

    def test_rejects_nonpositive_noise(self, small_grid, rng):
        h = TimeChannel(taps=np.zeros(2, dtype=complex), time_index=0)
        with pytest.raises(ValueError):
            observe(h, PhaseDistortion(0.0, 0.0), small_grid, 0.0, rng)


class TestDrawPhaseDistortion:
    def test_deterministic_given_seed(self):
        a = draw_phase_distortion(np.random.default_rng(3), 0.2)
        b = draw_phase_distortion(np.random.default_rng(3), 0.2)
        assert (a.offset, a.slope) == (b.offset, b.slope)

    def test_supports(self):
        rng = np.random.default_rng(0)
        draws = [draw_phase_distortion(rng, 0.15) for _ in range(100_000)]
        offsets = np.array([d.offset for d in draws])
        slopes = np.array([d.slope for d in draws])
        assert np.all(np.abs(slopes) <= 0.15)
        assert np.all((offsets >= -np.pi) & (offsets < np.pi))
        assert offsets.mean() == pytest.approx(0.0, abs=0.02)

    def test_rejects_bad_bound(self, rng):
        with pytest.raises(ValueError):
            draw_phase_distortion(rng, 0.0)


class TestSnr:
    @pytest.mark.parametrize("db,var", [(0.0, 1.0), (10.0, 0.1), (20.0, 0.01)])
    def test_values(self, db, var):
        assert snr_to_noise_var(db) == pytest.approx(var, rel=1e-12)
