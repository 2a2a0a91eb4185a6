import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonadiab.models import (
    GAP_FLOOR,
    MODEL_KINDS,
    DegeneracyError,
    adiabatic_point,
    adiabatic_table,
    adiabatize,
    diabatic_elements,
    diabatic_gradients,
    diabatic_hamiltonian,
    make_model,
)

ALL_MODELS = [make_model(kind) for kind in MODEL_KINDS]


def quadratic_eigenvalues(h11, h12, h22):
    # characteristic polynomial root solve, independent of the production path
    b = -(h11 + h22)
    c = h11 * h22 - h12 * h12
    disc = np.sqrt(b * b - 4.0 * c)
    return np.sort([(-b - disc) / 2.0, (-b + disc) / 2.0])


class TestDiabaticElements:
    def test_single_avoided_at_origin(self):
        H = diabatic_hamiltonian(make_model("single_avoided"), 0.0)
        assert H[0, 0] == pytest.approx(0.0, abs=1e-15)
        assert H[1, 1] == pytest.approx(0.0, abs=1e-15)
        assert H[0, 1] == pytest.approx(0.005)
        assert H[1, 0] == H[0, 1]

    def test_dual_avoided_at_origin(self):
        # by hand: H22(0) = -a + e0 = -0.1 + 0.05
        H = diabatic_hamiltonian(make_model("dual_avoided"), 0.0)
        assert H[0, 0] == pytest.approx(0.0, abs=1e-15)
        assert H[1, 1] == pytest.approx(-0.05)
        assert H[0, 1] == pytest.approx(0.015)

    def test_extended_coupling_far_left_limit(self):
        H = diabatic_hamiltonian(make_model("extended_coupling"), -200.0)
        assert H[0, 0] == pytest.approx(6.0e-4)
        assert H[1, 1] == pytest.approx(-6.0e-4)
        assert abs(H[0, 1]) < 1e-60

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown model kind"):
            make_model("triple_crossing")

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ValueError, match="does not take"):
            make_model("extended_coupling", e0=0.1)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=MODEL_KINDS)
    def test_elements_continuous_across_seams(self, model):
        # the piecewise formulas must agree at their joins
        for r0 in (-4.0, 0.0, 4.0):
            left = np.array(diabatic_elements(model, r0 - 1e-9))
            right = np.array(diabatic_elements(model, r0 + 1e-9))
            np.testing.assert_allclose(left, right, atol=1e-10)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=MODEL_KINDS)
    def test_gradients_match_finite_differences(self, model):
        # stay clear of the piecewise seams, where H is C1 but not C2 and
        # centered differences carry an O(h) error by construction
        R = np.linspace(-12.0, 12.0, 241)
        R = R[np.min(np.abs(R[:, None] - np.array([-4.0, 0.0, 4.0])), axis=1) > 0.3]
        h = 1e-6
        plus = np.array(diabatic_elements(model, R + h))
        minus = np.array(diabatic_elements(model, R - h))
        fd = (plus - minus) / (2.0 * h)
        analytic = np.array(diabatic_gradients(model, R))
        np.testing.assert_allclose(analytic, fd, rtol=1e-7, atol=1e-9)


class TestAdiabatize:
    def test_diagonal_matrix_passthrough(self):
        H = np.array([[-0.3, 0.0], [0.0, 0.7]])
        energies, vectors, sign = adiabatize(H)
        np.testing.assert_allclose(energies, [-0.3, 0.7])
        np.testing.assert_allclose(np.abs(vectors), np.eye(2), atol=1e-15)
        assert sign == 1

    def test_single_avoided_origin_eigenvalues(self):
        # traceless symmetric 2x2: eigenvalues are +-sqrt(H11^2 + H12^2)
        H = diabatic_hamiltonian(make_model("single_avoided"), 0.0)
        energies, vectors, _ = adiabatize(H)
        np.testing.assert_allclose(energies, [-0.005, 0.005], atol=1e-16)
        reference = np.linalg.eigvalsh(H)
        np.testing.assert_allclose(energies, reference, atol=1e-16)

    @given(
        h11=st.floats(-1.0, 1.0),
        h12=st.floats(-1.0, 1.0),
        h22=st.floats(-1.0, 1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_random_symmetric_matches_quadratic_formula(self, h11, h12, h22):
        H = np.array([[h11, h12], [h12, h22]])
        energies, vectors, _ = adiabatize(H)
        np.testing.assert_allclose(energies, quadratic_eigenvalues(h11, h12, h22), atol=1e-14)
        # eigen-residual and orthonormality
        for i in range(2):
            resid = H @ vectors[:, i] - energies[i] * vectors[:, i]
            assert np.linalg.norm(resid) < 1e-12
        np.testing.assert_allclose(vectors.T @ vectors, np.eye(2), atol=1e-14)

    def test_cold_start_sign_convention(self):
        for h11, h12, h22 in [(0.2, 0.1, -0.4), (-0.2, -0.3, 0.4), (0.5, -0.2, 0.1)]:
            _, vectors, _ = adiabatize(np.array([[h11, h12], [h12, h22]]))
            assert vectors[0, 0] >= 0.0


class TestAdiabaticPoint:
    def test_asymptotic_decoupling_single_avoided(self):
        model = make_model("single_avoided")
        for R in (-10.0, 10.0):
            pt = adiabatic_point(model, R)
            assert abs(pt.nacv) < 1e-8
            assert abs(pt.gradients[0]) < 1e-6

    def test_nacv_peaks_at_crossing(self):
        model = make_model("single_avoided")
        R = np.linspace(-5.0, 5.0, 1001)
        table = adiabatic_table(model, R, sweep_continuity=True)
        assert R[np.argmax(np.abs(table.nacv))] == pytest.approx(0.0, abs=1e-2)
        # single maximum: |d12| increases to the peak then decreases
        mag = np.abs(table.nacv)
        peak = int(np.argmax(mag))
        assert np.all(np.diff(mag[: peak + 1]) >= -1e-14)
        assert np.all(np.diff(mag[peak:]) <= 1e-14)

    @pytest.mark.parametrize("model", ALL_MODELS, ids=MODEL_KINDS)
    def test_hellmann_feynman_vs_finite_differences(self, model):
        # oracle: centered differences of the eigendecomposition itself,
        # sampled away from the piecewise seams of the diabatic elements
        h = 1e-5
        R = np.linspace(-9.7, 9.7, 97)
        R = R[np.min(np.abs(R[:, None] - np.array([-4.0, 0.0, 4.0])), axis=1) > 0.3]
        table = adiabatic_table(model, R, sweep_continuity=True)
        plus = adiabatic_table(model, R + h, sweep_continuity=True)
        minus = adiabatic_table(model, R - h, sweep_continuity=True)
        fd_grad = (plus.energies - minus.energies) / (2.0 * h)
        np.testing.assert_allclose(
            table.gradients, fd_grad, rtol=1e-6, atol=1e-10
        )
        # d12 from differentiated eigenvectors (sign-continuous along the sweep)
        dv1 = (plus.evec1 - minus.evec1) / (2.0 * h)
        v2 = np.stack([-table.evec1[:, 1], table.evec1[:, 0]], axis=-1)
        fd_nacv = -np.sum(v2 * dv1, axis=-1)  # <1|d2/dR> = -<2|d1/dR>
        np.testing.assert_allclose(table.nacv, fd_nacv, rtol=1e-6, atol=1e-8)

    def test_degeneracy_floor_raises(self):
        # force an exact degeneracy with a zero-coupling flat model
        model = make_model("extended_coupling", a=0.0, b=0.0)
        with pytest.raises(DegeneracyError):
            adiabatic_point(model, 1.0, gap_floor=GAP_FLOOR)

    def test_continuity_against_previous_point(self):
        model = make_model("single_avoided")
        prev = None
        vecs = []
        for R in np.linspace(-3.0, 3.0, 601):
            prev = adiabatic_point(model, R, prev=prev)
            vecs.append(prev.evec1)
        vecs = np.array(vecs)
        dots = np.sum(vecs[1:] * vecs[:-1], axis=-1)
        assert np.all(dots > 0.99)


class TestSurfaceInvariants:
    @pytest.mark.parametrize("model", ALL_MODELS, ids=MODEL_KINDS)
    def test_eigen_residual_and_trace(self, model):
        R = np.linspace(-20.0, 20.0, 4001)
        h11, h12, h22 = diabatic_elements(model, R)
        table = adiabatic_table(model, R, sweep_continuity=True)
        trace = h11 + h22
        np.testing.assert_allclose(
            table.energies.sum(axis=-1), trace, atol=1e-14
        )
        v1 = table.evec1
        v2 = np.stack([-v1[:, 1], v1[:, 0]], axis=-1)
        for vec, eps in ((v1, table.energies[:, 0]), (v2, table.energies[:, 1])):
            hx = h11 * vec[:, 0] + h12 * vec[:, 1]
            hy = h12 * vec[:, 0] + h22 * vec[:, 1]
            resid = np.hypot(hx - eps * vec[:, 0], hy - eps * vec[:, 1])
            assert resid.max() < 1e-12

    @pytest.mark.parametrize("kind", ["single_avoided", "dual_avoided"])
    def test_nacv_sweep_no_sign_flips(self, kind):
        # R = -20..20 in steps of 1e-3; the grid contains R = 0 exactly
        model = make_model(kind)
        R = (np.arange(40001) - 20000) * 1e-3
        table = adiabatic_table(model, R, sweep_continuity=True)
        sign = np.sign(table.nacv)
        assert np.all(sign[1:] * sign[:-1] >= 0)

    @pytest.mark.parametrize("kind", ["extended_coupling", "double_arch"])
    def test_nacv_smooth_through_extended_region(self, kind):
        model = make_model(kind)
        R = (np.arange(40001) - 20000) * 1e-3
        table = adiabatic_table(model, R, sweep_continuity=True)
        jumps = np.abs(np.diff(table.nacv))
        # no gauge-flip discontinuities: adjacent changes stay far below the peak
        assert jumps.max() < 5e-3 * np.abs(table.nacv).max()
