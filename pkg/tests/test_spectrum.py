"""Imaginary pair, spectral certificate, generalized null space."""

import numpy as np
import pytest

from soliton_lab.grid import CartGrid, PairField, pair_norm
from soliton_lab.ground_state import GroundState, RadialProfile, solve_ground_state
from soliton_lab.linop import build_matrix_hamiltonian
from soliton_lab.soliton import SolitonParams, grid_frame
from soliton_lab.spectrum import (
    NoImaginaryEigenvalue, compute_imaginary_pair, dense_block_spectrum,
    generalized_nullspace_check, verify_spectral_assumption,
)

from oracles import SIGMA_ALPHA1


@pytest.fixture(scope="module")
def gs1():
    return solve_ground_state(1.0)


@pytest.fixture(scope="module")
def grid():
    return CartGrid(64, 16.0)


@pytest.fixture(scope="module")
def pair1(gs1, grid):
    return compute_imaginary_pair(gs1, grid)


def test_sigma_matches_independent_oracle(pair1):
    # fourth-order block Arnoldi vs second-order product-eigensolve Richardson
    assert pair1.sigma == pytest.approx(SIGMA_ALPHA1, rel=1e-5)


def test_radial_eigen_residual(pair1):
    assert pair1.radial_residual < 1e-6


def test_duality_normalized(pair1):
    assert pair1.duality == pytest.approx(1.0, abs=1e-10)


def test_pair_is_conjugate_symmetric(pair1):
    assert pair1.F_plus.conj_deviation() < 1e-10
    dev = np.max(np.abs(pair1.F_minus.upper - np.conj(pair1.F_plus.upper)))
    assert dev < 1e-12


def test_eigenfunction_decays(pair1, grid):
    # exponential decay: the profile at r=8 sits orders below the core
    r = pair1.r
    amp = np.abs(pair1.u + 1j * pair1.v)
    i8 = np.argmin(np.abs(r - 8.0))
    assert amp[i8] < 1e-5 * amp.max()


def test_sigma_scaling_law(gs1):
    # sigma(alpha) = alpha^2 sigma(1) to 1e-4 (independent eigensolves)
    from soliton_lab.ground_state import rescale
    base = compute_imaginary_pair(gs1, CartGrid(32, 16.0), n_r=1600).sigma
    for a in (0.5, 2.0):
        gsa = rescale(gs1, a)
        grid_a = CartGrid(32, 16.0 / a)
        sig_a = compute_imaginary_pair(gsa, grid_a, n_r=1600).sigma
        assert sig_a / base == pytest.approx(a**2, rel=1e-4)


def test_eigenfunction_transport_under_scaling(gs1):
    # F+(W_alpha) equals the L2-isometric dilation of F+(W_1) once both are
    # normalized by the same grid quadrature (Eq-2.50-type transport)
    from soliton_lab.ground_state import rescale
    from soliton_lab.grid import i_sigma3, pair_inner
    a = 2.0
    grid_a = CartGrid(64, 8.0)
    pair_a = compute_imaginary_pair(rescale(gs1, a), grid_a, n_r=1600)
    pair_1 = compute_imaginary_pair(gs1, CartGrid(64, 16.0), n_r=2400)
    # transport: f_a(x) = a^{3/2} f_1(a x), sampled radially
    from soliton_lab.spectrum import _even_spline
    su = _even_spline(pair_1.r, pair_1.u)
    sv = _even_spline(pair_1.r, pair_1.v)
    rr = grid_a.radii()
    ft = a**1.5 * (su(a * rr) + 1j * sv(a * rr))
    Ft = PairField.from_upper(grid_a, ft)
    # normalize the transported pair by its own on-grid duality
    Fmt = PairField.from_upper(grid_a, np.conj(ft))
    dual = pair_inner(Fmt, i_sigma3(Ft)).real
    Ft = (1.0 / np.sqrt(dual)) * Ft
    dev = pair_norm(Ft - pair_a.F_plus) / pair_norm(pair_a.F_plus)
    assert dev < 1e-5


def test_no_imaginary_eigenvalue_error(gs1):
    # a substantially weakened profile has no imaginary pair: the solver
    # reports the failure instead of returning garbage
    prof = RadialProfile(r=gs1.profile.r, values=0.2 * gs1.profile.values,
                        decay_rate=gs1.profile.decay_rate)
    fake = GroundState(alpha=1.0, profile=prof, peak=0.2 * gs1.peak,
                       residual_norm=np.inf)
    with pytest.raises(NoImaginaryEigenvalue):
        compute_imaginary_pair(fake, CartGrid(16, 8.0), n_r=400)


# ----------------------------------------------------------------------------
# certificate


@pytest.fixture(scope="module")
def cert(gs1):
    return verify_spectral_assumption(gs1, lambda_max=5.0, lmax=4, n_r=640,
                                      r_max=20.0, scan_step=0.1)


def test_certificate_passes(cert):
    assert cert.verdict == "pass"
    assert cert.L_plus_evals_in_gap == []
    assert cert.L_minus_evals_in_gap == []


def test_zero_modes_filtered(cert):
    # L-(l=0) hosts phi, L+(l=1) hosts phi'; both filtered, both near zero
    assert abs(cert.filtered_zero_modes["L-(l=0)"]) < 1e-4
    assert abs(cert.filtered_zero_modes["L+(l=1)"]) < 1e-4


def test_edge_indicator_below_threshold(cert):
    assert cert.edge_resonance_indicator < cert.edge_resonance_threshold


def test_embedded_scan_no_dips(cert):
    # no refined dip is simultaneously deep and all-channel decaying
    flagged = [d for d in cert.refined_dips
               if d[1] < cert.embedded_dip_threshold and d[3] < 1e-4]
    assert flagged == []
    # and the box modes that do dip are visibly propagating
    tails = [d[3] for d in cert.refined_dips]
    assert min(tails) > 1e-3


def test_embedded_detector_flags_constructed_eigenvalue(gs1):
    # calibration: a decoupled deep well places an upper-channel bound state
    # inside the lower channel's essential spectrum -- a genuine embedded
    # eigenvalue the detector must flag (deep dip AND decaying tail)
    import scipy.sparse as sp
    from soliton_lab.grid import RadialGrid
    from soliton_lab.linop import radial_d2
    from soliton_lab.spectrum import _free_block_radial, scan_embedded_sector

    n, rmax = 640, 20.0
    rg = RadialGrid(n, rmax)
    r = rg.nodes
    D2 = radial_d2(n, rg.h, -1)
    well = np.diag(-8.0 * (r < 1.0))
    up = D2 - np.eye(n) - well
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = up
    H[n:, n:] = -up
    H0 = _free_block_radial(1.0, 0, rg)
    lam_grid = np.arange(1.1, 3.0, 0.1)
    scan, refined = scan_embedded_sector(sp.csc_matrix(H), sp.csc_matrix(H0),
                                         rg, lam_grid)
    flagged = [d for d in refined if d[1] < 1e-3 and d[2] < 1e-4]
    assert len(flagged) >= 1
    assert any(abs(lam - 2.0185) < 0.02 for lam, _, _ in flagged)


def test_certificate_stable_under_grid_changes(gs1, cert):
    # resolution x2 and domain +-25% leave the verdict unchanged
    for kwargs in ({"n_r": 1280, "r_max": 20.0},
                   {"n_r": 640, "r_max": 15.0},
                   {"n_r": 640, "r_max": 25.0}):
        c = verify_spectral_assumption(gs1, lambda_max=5.0, lmax=2,
                                       scan_step=0.2, **kwargs)
        assert c.verdict == cert.verdict == "pass"


def test_certificate_serializes(cert, tmp_path):
    import json
    d = cert.as_dict()
    (tmp_path / "cert.json").write_text(json.dumps(d))
    back = json.loads((tmp_path / "cert.json").read_text())
    assert back["verdict"] == "pass"
    assert back["sigma"] == pytest.approx(SIGMA_ALPHA1, rel=1e-3)


# ----------------------------------------------------------------------------
# generalized null space and spectrum symmetry


def test_nullspace_chains(gs1, grid):
    gf = grid_frame(SolitonParams(alpha=1.0), grid)
    H = build_matrix_hamiltonian(gf.W, SolitonParams(alpha=1.0))
    rep = generalized_nullspace_check(gf, H)
    assert rep["H@gamma"] < 1e-6
    assert rep["H@alpha-chain"] < 1e-5
    assert rep["H*@alpha"] < 1e-6
    assert rep["H*@gamma-chain"] < 1e-5
    assert rep["max_exact_family"] < 1e-5


def test_nullspace_residuals_improve_with_resolution(gs1):
    reps = {}
    for n in (32, 64):
        g = CartGrid(n, 16.0)
        gf = grid_frame(SolitonParams(alpha=1.0), g)
        H = build_matrix_hamiltonian(gf.W, SolitonParams(alpha=1.0))
        reps[n] = generalized_nullspace_check(gf, H)
    for key in ("H@d1", "H*@v1"):
        # alias-limited translation relations at least halve under doubling
        assert reps[64][key] < reps[32][key] / 2
    for key in ("H@gamma", "H*@alpha"):
        # exact-family relations are already at the refinement floor
        assert reps[64][key] < 1e-6


def test_block_spectrum_symmetry(gs1):
    w = dense_block_spectrum(gs1, ell=0, n_r=400, r_max=16.0)

    def match_dev(a, b):
        # nearest-neighbour multiset match (sorting complex pairs is not
        # stable against conjugate-pair roundoff)
        return max(float(np.min(np.abs(b - x))) for x in a)

    # exact sigma1-similarity: the spectrum is invariant under λ -> -λ
    assert match_dev(w, -w) < 1e-8 * np.max(np.abs(w))
    # real matrix: closed under conjugation
    assert match_dev(w, np.conj(w)) < 1e-8 * np.max(np.abs(w))
    # the only eigenvalues off the real axis are the +-i sigma pair and the
    # near-zero cluster: no complex quartets away from the axes
    off = w[(np.abs(w.real) > 0.05) & (np.abs(w.imag) > 0.05)]
    assert off.size == 0
    # +-i sigma present
    imag_pair = w[(np.abs(w.real) < 1e-6) & (w.imag > 1.0)]
    assert imag_pair.size >= 1
    assert np.min(np.abs(imag_pair.imag - SIGMA_ALPHA1)) < 0.05


def test_kernel_dimensions(gs1):
    # dim ker L+ (l=1) = 3 in 3-D (one radial kernel function x 3 spherical
    # directions); dim ker L- (l=0) = 1: per-sector the radial multiplicity
    # is one, certified by eigenvalue counts near zero
    import scipy.linalg as sla
    from soliton_lab.grid import RadialGrid
    from soliton_lab.linop import assemble_scalar_radial
    rg = RadialGrid(800, 20.0)
    Lm0 = assemble_scalar_radial(gs1, 0, rg, "-")
    evs = np.sort(np.abs(sla.eigvalsh(Lm0)))
    assert evs[0] < 1e-4 and evs[1] > 0.5
    Lp1 = assemble_scalar_radial(gs1, 1, rg, "+")
    evs = np.sort(np.abs(sla.eigvalsh(Lp1)))
    assert evs[0] < 1e-4 and evs[1] > 0.5
