"""Spectral analysis of the linearized Hamiltonian.

The imaginary pair ±iσ lives in the l=0 radial sector.  The main path
assembles the fourth-order 2x2-block radial Hamiltonian, locates +iσ with a
coarse dense eigensolve, and refines eigenvalue and eigenvector by sparse
shift-inverted Arnoldi at high radial resolution.  Eigenfunctions are lifted
to the Cartesian grid by quintic splines and normalized so that the duality
<F-, iσ3 F+> = 1 holds in grid quadrature, making the Riesz projections
P± = ±<., iσ3 F∓> F± exact projections as built.

The spectral certificate reproduces the numerical verification the theory
rests on: no L± eigenvalues in (0,1] beyond the symmetry-forced kernels, no
resonance at the edge, no embedded eigenvalues in the interior of the
essential spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import InterpolatedUnivariateSpline

from .grid import CartGrid, PairField, RadialGrid, i_sigma3, pair_inner, pair_norm
from .ground_state import GroundState
from .linop import (
    OperatorHandle, assemble_matrix_radial, assemble_scalar_radial,
    build_matrix_hamiltonian, radial_d2, sector_parity,
)
from .soliton import PARAM_NAMES, SolitonParams, SpectralFrame


class NoImaginaryEigenvalue(RuntimeError):
    """Radial eigensolve found no imaginary pair: discretization failure."""


@dataclass
class ImaginaryPair:
    sigma: float
    F_plus: PairField
    F_minus: PairField
    radial_residual: float
    grid_residual: float
    duality: float  # <F-, i sigma3 F+> after normalization (=1 by scaling)
    u: np.ndarray   # radial Re f+ samples
    v: np.ndarray   # radial Im f+ samples
    r: np.ndarray


def _sparse_block_H(gs: GroundState, rgrid: RadialGrid) -> sp.csc_matrix:
    H = assemble_matrix_radial(gs, 0, rgrid)
    return sp.csc_matrix(H)


def _coarse_sigma(gs: GroundState, n_r: int = 360, r_max: float | None = None) -> float:
    r_max = r_max or 16.0 / gs.alpha
    rg = RadialGrid(n_r, r_max)
    H = assemble_matrix_radial(gs, 0, rg)
    w = sla.eigvals(H)
    cand = w[(np.abs(w.real) < 0.05 * gs.alpha**2) & (w.imag > 0.1 * gs.alpha**2)]
    if cand.size == 0:
        raise NoImaginaryEigenvalue("no imaginary eigenvalue in the coarse solve")
    return float(cand.imag.max())


def compute_imaginary_pair(gs: GroundState, grid: CartGrid, n_r: int = 2400,
                           r_max: float | None = None) -> ImaginaryPair:
    """σ and the exponentially decaying pair F± = (f±, conj f±) at the base
    soliton of scale gs.alpha, lifted onto `grid`."""
    r_max = r_max or 18.0 / gs.alpha
    sig0 = _coarse_sigma(gs)
    rg = RadialGrid(n_r, r_max)
    H = _sparse_block_H(gs, rg)
    vals, vecs = spla.eigs(H, k=1, sigma=1j * sig0, which="LM")
    lam = vals[0]
    if lam.imag < 0:
        lam = np.conj(lam)
        vecs = np.conj(vecs)
    if not (abs(lam.real) < 1e-6 * gs.alpha**2 and lam.imag > 0):
        raise NoImaginaryEigenvalue(f"refined eigenvalue {lam} not imaginary")
    sigma = float(lam.imag)
    X = vecs[:, 0]
    n = rg.n_r
    p, q = X[:n], X[n:]
    # fix the conjugate-symmetric representative: rotate so q = conj(p)
    j = np.argmax(np.abs(p))
    ratio = np.conj(p[j]) / q[j]
    phase = np.sqrt(ratio / abs(ratio))
    p, q = p * phase, q * phase
    sym_err = np.max(np.abs(q - np.conj(p))) / np.max(np.abs(p))
    if sym_err > 1e-6:
        raise NoImaginaryEigenvalue(f"conjugate structure violated ({sym_err:.2e})")
    u = (p.real + q.real) / 2.0 / rg.nodes   # Re f+, back to u = V/r
    v = (p.imag - q.imag) / 2.0 / rg.nodes   # Im f+
    # canonical sign: Im f+ positive at its extremum (the ± freedom of the
    # conjugate-symmetric representative)
    if v[np.argmax(np.abs(v))] < 0:
        u, v, p, q = -u, -v, -p, -q
    rad_res = float(np.max(np.abs(H @ X - lam * X)) / np.max(np.abs(X)))

    # lift to the Cartesian grid
    su = _even_spline(rg.nodes, u)
    sv = _even_spline(rg.nodes, v)
    rr = grid.radii()
    fu = su(rr) + 1j * sv(rr)
    Fp = PairField.from_upper(grid, fu)
    Fm = PairField.from_upper(grid, np.conj(fu))
    # real rescale so <F-, i sigma3 F+> = 1 in grid quadrature
    dual = pair_inner(Fm, i_sigma3(Fp)).real
    if dual <= 0:
        # intrinsic sign of the +iσ representative has int Re Im < 0;
        # a non-positive duality signals a labeling fault
        raise NoImaginaryEigenvalue(f"duality constant {dual} not positive")
    c = 1.0 / np.sqrt(dual)
    Fp, Fm = c * Fp, c * Fm
    u, v = c * u, c * v

    HW = build_matrix_hamiltonian(
        PairField.from_upper(grid, gs.on_grid(grid).values),
        SolitonParams(alpha=gs.alpha))
    out = HW.apply(Fp)
    gres = pair_norm(PairField(grid, out.upper - 1j * sigma * Fp.upper,
                               out.lower - 1j * sigma * Fp.lower)) / pair_norm(Fp)
    dual_after = pair_inner(Fm, i_sigma3(Fp)).real
    return ImaginaryPair(sigma=sigma, F_plus=Fp, F_minus=Fm,
                         radial_residual=rad_res, grid_residual=float(gres),
                         duality=float(dual_after), u=u, v=v, r=rg.nodes)


def _even_spline(r, vals):
    rm = np.concatenate([-r[4::-1], r])
    vm = np.concatenate([vals[4::-1], vals])
    return InterpolatedUnivariateSpline(rm, vm, k=5, ext=1)


def attach_imaginary_pair(frame: SpectralFrame, pair: ImaginaryPair) -> SpectralFrame:
    """Attach F± to a frame, purifying the discretization's spurious
    tangent-space content: the exact H has <F±, Ξ_f> = 0, so the P0-component
    of the lifted eigenfunctions (alias-level, ~1e-4 on production grids) is
    removed and the duality renormalized."""
    Fp, Fm = pair.F_plus, pair.F_minus

    xi = [frame.cotangent[f] for f in PARAM_NAMES]
    tan = [frame.tangent[f] for f in PARAM_NAMES]

    def remove_p0(F):
        b = np.array([pair_inner(F, x).real for x in xi])
        c = np.linalg.solve(frame.gram, b)
        up, lo = F.upper.copy(), F.lower.copy()
        for cg, tg in zip(c, tan):
            up -= cg * tg.upper
            lo -= cg * tg.lower
        return PairField(F.grid, up, lo)

    Fp = remove_p0(Fp)
    Fm = remove_p0(Fm)
    dual = pair_inner(Fm, i_sigma3(Fp)).real
    c = 1.0 / np.sqrt(dual)
    Fp = PairField(Fp.grid, c * Fp.upper, c * Fp.lower)
    Fm = PairField(Fm.grid, c * Fm.upper, c * Fm.lower)
    frame.sigma = pair.sigma
    frame.F_plus = Fp
    frame.F_minus = Fm
    frame.imag_duality = pair_inner(Fm, i_sigma3(Fp)).real
    return frame


# ----------------------------------------------------------------------------
# the spectral certificate


@dataclass
class SpectralCertificate:
    L_plus_evals_in_gap: list
    L_minus_evals_in_gap: list
    filtered_zero_modes: dict
    edge_resonance_indicator: float
    edge_resonance_threshold: float
    embedded_scan: list          # (lambda, detector ratio) coarse samples
    refined_dips: list           # (lambda*, ratio, sector, tail fraction)
    embedded_dip_threshold: float
    sigma: float
    lmax: int
    params: dict
    verdict: str = "fail"

    def as_dict(self) -> dict:
        return {
            "L_plus_evals_in_gap": [float(x) for x in self.L_plus_evals_in_gap],
            "L_minus_evals_in_gap": [float(x) for x in self.L_minus_evals_in_gap],
            "filtered_zero_modes": {k: float(x) for k, x in self.filtered_zero_modes.items()},
            "edge_resonance_indicator": float(self.edge_resonance_indicator),
            "edge_resonance_threshold": float(self.edge_resonance_threshold),
            "embedded_scan": [[float(a), float(b)] for a, b in self.embedded_scan],
            "refined_dips": [[float(a), float(b), int(c), float(d)]
                             for a, b, c, d in self.refined_dips],
            "embedded_dip_threshold": float(self.embedded_dip_threshold),
            "sigma": float(self.sigma),
            "lmax": self.lmax,
            "params": self.params,
            "verdict": self.verdict,
        }


def _free_block_radial(alpha: float, ell: int, rgrid: RadialGrid) -> np.ndarray:
    """diag(Δ_l - α², -Δ_l + α²) on v-coordinates (the free comparison
    operator of the embedded-eigenvalue detector)."""
    r = rgrid.nodes
    D2 = radial_d2(rgrid.n_r, rgrid.h, sector_parity(ell))
    lap = D2 - np.diag(ell * (ell + 1) / r**2)
    n = rgrid.n_r
    H = np.zeros((2 * n, 2 * n))
    H[:n, :n] = lap - alpha**2 * np.eye(n)
    H[n:, n:] = -lap + alpha**2 * np.eye(n)
    return H


def _weighted_resolvent_norm(L: np.ndarray, lam: float, r: np.ndarray) -> float:
    """||W (L - lam)^{-1} W||_2 with the weight W = (1+r^2)^{-1}, estimated
    by a few power iterations on the dense solve."""
    w = 1.0 / (1.0 + r * r)
    lu, piv = sla.lu_factor(L - lam * np.eye(L.shape[0]))
    x = np.sin(np.arange(L.shape[0]) + 1.0)
    x /= np.linalg.norm(x)
    s = 0.0
    for _ in range(30):
        y = w * sla.lu_solve((lu, piv), w * x)
        z = w * sla.lu_solve((lu, piv), w * y, trans=1)
        s_new = np.sqrt(np.linalg.norm(z))
        if abs(s_new - s) < 1e-6 * max(s_new, 1e-300):
            s = s_new
            break
        s = s_new
        x = z / np.linalg.norm(z)
    return float(s)


def smallest_singular_value(A: sp.spmatrix, iters: int = 40,
                            return_vector: bool = False):
    """s_min via inverse power iteration on A^T A using a sparse LU of A;
    optionally also the minimizing (right-singular) vector."""
    n = A.shape[0]
    lu = spla.splu(sp.csc_matrix(A))
    luT = spla.splu(sp.csc_matrix(A.T))
    x = np.sin(np.arange(n) + 1.0)
    x /= np.linalg.norm(x)
    mu = 0.0
    for _ in range(iters):
        y = luT.solve(lu.solve(x))   # (A^T A)^{-1} x
        nrm = np.linalg.norm(y)
        mu_new = nrm
        x = y / nrm
        if abs(mu_new - mu) < 1e-10 * mu_new:
            mu = mu_new
            break
        mu = mu_new
    s = float(1.0 / np.sqrt(mu))
    return (s, x) if return_vector else s




def scan_embedded_sector(H: sp.spmatrix, H0: sp.spmatrix, rgrid: RadialGrid,
                         lam_grid, gamma: float = 0.5):
    """Embedded-eigenvalue detector for one radial sector.

    Returns the coarse (λ, ratio) samples and the refined local minima as
    (λ*, ratio*, tail_fraction) triples.  ratio = s_min((H-λ)W)/s_min((H0-λ)W)
    over exponentially localized inputs (W = floored e^{-γr}); the free
    reference cancels the weight-induced floor.  The finite box turns the
    essential spectrum into exact discrete modes whose dips are as deep as
    genuine embedded eigenvalues, so a dip only counts when its near-kernel
    vector decays in *every* channel: embedded eigenfunctions do, while box
    modes keep a propagating channel with an O(1e-2) outer-shell amplitude.
    """
    r = rgrid.nodes
    r_max = rgrid.r_max
    n2 = H.shape[0]
    w1 = np.exp(-gamma * np.minimum(r, 0.6 * r_max))
    w = np.concatenate([w1] * (n2 // rgrid.n_r))
    W = sp.diags(w, format="csc")
    eye = sp.identity(n2, format="csc")

    def ratio(lam):
        smin = smallest_singular_value((H - lam * eye) @ W)
        sref = smallest_singular_value((H0 - lam * eye) @ W)
        return smin / sref

    vals = np.array([ratio(lam) for lam in lam_grid])
    scan = [(float(l), float(v)) for l, v in zip(lam_grid, vals)]

    # every eigenvalue of the boxed operator inside the window dips the
    # ratio to zero; enumerate them directly by windowed shift-inverted
    # Arnoldi and classify each eigenvector by its outer-shell amplitude
    refined = []
    outer = np.tile(r, n2 // rgrid.n_r) > 0.75 * r_max
    lo, hi = float(lam_grid[0]), float(lam_grid[-1])
    centers = np.arange(lo, hi + 1e-12, 0.8) + 0.4
    seen = []
    for c in centers:
        try:
            vals_c, vecs_c = spla.eigs(H, k=12, sigma=c, which="LM")
        except Exception:
            continue
        for lam, vec in zip(vals_c, vecs_c.T):
            if abs(lam.imag) > 1e-8 or not (lo - 0.05 <= lam.real <= hi + 0.05):
                continue
            if any(abs(lam.real - z) < 1e-6 for z in seen):
                continue
            seen.append(lam.real)
            psi = np.abs(vec)
            tail = float(np.max(psi[outer]) / np.max(psi))
            refined.append((float(lam.real), float(ratio(lam.real)), tail))
    refined.sort()
    return scan, refined


def _zero_mode_filter(evals, evecs, reference, zero_window: float = 1e-3,
                      overlap_min: float = 0.99):
    """Split eigenvalues near zero whose eigenvectors align with the known
    symmetry kernel `reference` (discretized) from genuine gap eigenvalues."""
    ref = reference / np.linalg.norm(reference)
    keep, filtered = [], []
    for lam, vec in zip(evals, evecs.T):
        if abs(lam) < zero_window:
            ov = abs(np.dot(ref, vec / np.linalg.norm(vec)))
            if ov > overlap_min:
                filtered.append((lam, ov))
                continue
        keep.append(lam)
    return np.array(keep), filtered


def verify_spectral_assumption(gs: GroundState, lambda_max: float = 5.0,
                               lmax: int = 4, n_r: int = 800,
                               r_max: float | None = None,
                               scan_step: float = 0.1,
                               dip_threshold: float = 1e-3,
                               edge_threshold: float = 0.4) -> SpectralCertificate:
    """Populate the spectral certificate at scale gs.alpha (default 1):

    * dense eigensolve of L± per sector l <= lmax; eigenvalues in (0, α²]
      are violations after filtering the symmetry-forced kernels
      (L- l=0: φ; L+ l=1: φ');
    * edge-resonance indicator: growth exponent of the weighted resolvent
      norm at α² - ε for ε in {1e-2, 1e-3, 1e-4} (declared resonant when the
      fitted exponent reaches ~1/2);
    * embedded-eigenvalue scan over (α², λ_max]: smallest singular value of
      the exponentially conjugated (H - λ) per sector.
    """
    a2 = gs.alpha**2
    r_max = r_max or 20.0 / gs.alpha
    rg = RadialGrid(n_r, r_max)
    r = rg.nodes
    phi = gs.profile(r)
    dphi = gs.profile._spline().derivative()(r)

    gap_plus, gap_minus = [], []
    filtered = {}
    for ell in range(lmax + 1):
        for which, bucket in (("+", gap_plus), ("-", gap_minus)):
            L = assemble_scalar_radial(gs, ell, rg, which)
            evals, evecs = sla.eigh(L)
            sel = (evals > 0) & (evals <= a2 + 1e-12)
            cand, cvecs = evals[sel], evecs[:, sel]
            if which == "-" and ell == 0:
                cand_all, cvecs_all = evals, evecs
                near = np.abs(cand_all) < 1e-3 * a2
                kept, filt = _zero_mode_filter(cand_all[near], cvecs_all[:, near], r * phi)
                filtered["L-(l=0)"] = filt[0][0] if filt else np.nan
                cand = np.concatenate([cand[np.abs(cand) >= 1e-3 * a2], kept[kept > 0]])
            if which == "+" and ell == 1:
                cand_all, cvecs_all = evals, evecs
                near = np.abs(cand_all) < 1e-3 * a2
                kept, filt = _zero_mode_filter(cand_all[near], cvecs_all[:, near], r * dphi)
                filtered["L+(l=1)"] = filt[0][0] if filt else np.nan
                cand = np.concatenate([cand[np.abs(cand) >= 1e-3 * a2], kept[kept > 0]])
            bucket.extend(float(x) for x in cand)

    # edge resonance: sample the weighted resolvent norm below the edge
    eps = np.array([1e-2, 1e-3, 1e-4])
    growth = []
    for which in ("+", "-"):
        L0 = assemble_scalar_radial(gs, 0, rg, which)
        s = [_weighted_resolvent_norm(L0, a2 - e, r) for e in eps]
        p = np.polyfit(np.log(eps), np.log(s), 1)[0]
        growth.append(-p)  # growth exponent: s ~ eps^{-p}
    edge_indicator = float(max(growth))

    # embedded eigenvalues: localized near-kernel detector.  s_min of
    # (H-λ)W over exponentially localized inputs (W = floored e^{-γr})
    # carries a weight-induced floor; dividing by the same quantity for the
    # free operator H0 (which has no embedded point spectrum) cancels the
    # floor, so genuine embedded eigenvalues show up as deep dips of the
    # ratio while the essential spectrum stays O(1).
    scan, refined = [], []
    lam_grid = np.arange(a2 + scan_step, lambda_max + 1e-9, scan_step)
    for ell in range(lmax + 1):
        H = sp.csc_matrix(assemble_matrix_radial(gs, ell, rg))
        H0 = sp.csc_matrix(_free_block_radial(gs.alpha, ell, rg))
        sc, rf = scan_embedded_sector(H, H0, rg, lam_grid,
                                      gamma=0.5 * gs.alpha)
        scan.extend(sc)
        refined.extend((a, b, ell, c) for a, b, c in rf)

    ok_gap = (len(gap_plus) == 0) and (len(gap_minus) == 0)
    ok_edge = edge_indicator < edge_threshold
    # a refined dip counts as an embedded eigenvalue when its near-kernel
    # vector decays in every channel (tail below 1e-4 of the core)
    dips = [lam for lam, s, _, tail in refined
            if s < dip_threshold and tail < 1e-4]
    ok_embedded = len(dips) == 0
    cert = SpectralCertificate(
        L_plus_evals_in_gap=gap_plus,
        L_minus_evals_in_gap=gap_minus,
        filtered_zero_modes=filtered,
        edge_resonance_indicator=edge_indicator,
        edge_resonance_threshold=edge_threshold,
        embedded_scan=scan,
        refined_dips=refined,
        embedded_dip_threshold=dip_threshold,
        sigma=_coarse_sigma(gs),
        lmax=lmax,
        params={"n_r": n_r, "r_max": r_max, "scan_step": scan_step,
                "alpha": gs.alpha, "lambda_max": lambda_max},
        verdict="pass" if (ok_gap and ok_edge and ok_embedded) else "fail",
    )
    return cert


# ----------------------------------------------------------------------------
# generalized null space


def generalized_nullspace_check(frame: SpectralFrame, H: OperatorHandle) -> dict:
    """Residuals of the primal and adjoint generalized-kernel chains:

      H ∂_Γ W = 0          H ∂_α W = -2i ∂_Γ W
      H ∂_{D_k} W = 0      H ∂_{v_k} W = -2i ∂_{D_k} W
      H*Ξ_α = 0            H*Ξ_Γ = -2i Ξ_α
      H*Ξ_{v_k} = 0        H*Ξ_{D_k} = -2i Ξ_{v_k}

    Relative residuals are reported per relation; the D/v translation
    relations are limited on the 3-D grid by product-rule aliasing (their
    sharp versions live on the radial assemblies; see tests)."""
    t, xi = frame.tangent, frame.cotangent
    scale = pair_norm(frame.W)

    def rnorm(F):
        return pair_norm(F) / scale

    def dev(F, G, c):
        return pair_norm(PairField(F.grid, F.upper - c * G.upper,
                                   F.lower - c * G.lower)) / scale

    out = {
        "H@gamma": rnorm(H.apply(t["gamma"])),
        "H@alpha-chain": dev(H.apply(t["alpha"]), t["gamma"], -2j),
        "H*@alpha": rnorm(H.apply_adjoint(xi["alpha"])),
        "H*@gamma-chain": dev(H.apply_adjoint(xi["gamma"]), xi["alpha"], -2j),
    }
    for k in (1, 2, 3):
        out[f"H@d{k}"] = rnorm(H.apply(t[f"d{k}"]))
        out[f"H@v{k}-chain"] = dev(H.apply(t[f"v{k}"]), t[f"d{k}"], -2j)
        out[f"H*@v{k}"] = rnorm(H.apply_adjoint(xi[f"v{k}"]))
        out[f"H*@d{k}-chain"] = dev(H.apply_adjoint(xi[f"d{k}"]), xi[f"v{k}"], -2j)
    out["max_exact_family"] = max(out[k] for k in
                                  ("H@gamma", "H@alpha-chain", "H*@alpha", "H*@gamma-chain"))
    return out


def dense_block_spectrum(gs: GroundState, ell: int = 0, n_r: int = 500,
                         r_max: float = 16.0) -> np.ndarray:
    """Eigenvalues of the dense radial block Hamiltonian (for the symmetry
    quadruple diagnostics)."""
    rg = RadialGrid(n_r, r_max / gs.alpha)
    H = assemble_matrix_radial(gs, ell, rg)
    return sla.eigvals(H)
