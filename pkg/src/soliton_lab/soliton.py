"""Solitons w(π), their tangent/cotangent frames, and the symmetry group.

Parameter order used for all 8-vectors and 8x8 matrices throughout the
package:  (α, Γ, v1, v2, v3, D1, D2, D3).

Conventions that the tests pin down numerically (see also the acceptance
suite):

* all eight tangent vectors are *true* parameter derivatives of
  w(π) = e^{i(Γ+v·x)} φ(x-D, α); in particular ∂_{D_k}w = -e^{iθ}(∂_kφ)(x-D).
  Only with true derivatives does the adjoint chain
  H*Ξ_Γ = -2iΞ_α, H*Ξ_{D_k} = -2iΞ_{v_k} hold with these signs.
* the cotangent vectors follow the scaling/phase–translation/boost duality
  Ξ_α = iσ₃∂_ΓW, Ξ_Γ = iσ₃∂_αW, Ξ_{v_k} = iσ₃∂_{D_k}W, Ξ_{D_k} = iσ₃∂_{v_k}W.
* the 8x8 pairing matrix G_{fg} = <∂_g W, Ξ_f> is diagonal with entries
  ±‖W‖²/(2α) (α, Γ) and ±‖W‖²/2 (v, D); frames carry the measured G rather
  than hard-coded constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import (
    CartGrid, Field, PairField, i_sigma3, pair_inner, spectral_shift,
)
from .ground_state import GroundState, rescale

PARAM_NAMES = ("alpha", "gamma", "v1", "v2", "v3", "d1", "d2", "d3")


@dataclass(frozen=True)
class SolitonParams:
    alpha: float
    gamma: float = 0.0
    v: tuple = (0.0, 0.0, 0.0)
    d: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        object.__setattr__(self, "v", tuple(float(c) for c in self.v))
        object.__setattr__(self, "d", tuple(float(c) for c in self.d))

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.gamma, *self.v, *self.d])

    @classmethod
    def from_vector(cls, vec) -> "SolitonParams":
        vec = np.asarray(vec, dtype=float)
        return cls(alpha=float(vec[0]), gamma=float(vec[1]),
                   v=tuple(vec[2:5]), d=tuple(vec[5:8]))


@dataclass
class ModulationPath:
    """Sampled modulation path t -> π(t) with derivative estimates."""

    times: np.ndarray
    params: np.ndarray  # (N, 8) rows in PARAM_NAMES order

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.params = np.asarray(self.params, dtype=float)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("time nodes must be strictly increasing")
        if self.params.shape != (self.times.size, 8):
            raise ValueError("params must be (N, 8)")

    @classmethod
    def constant(cls, pi: SolitonParams, t0: float = 0.0, t1: float = 1.0,
                 n: int = 2) -> "ModulationPath":
        ts = np.linspace(t0, t1, n)
        return cls(ts, np.tile(pi.as_vector(), (n, 1)))

    def at(self, t: float) -> SolitonParams:
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise ExtrapolationBeyondPath(
                f"t={t} outside [{self.times[0]}, {self.times[-1]}]")
        cols = [np.interp(t, self.times, self.params[:, j]) for j in range(8)]
        return SolitonParams.from_vector(cols)

    def derivative(self) -> np.ndarray:
        """Centered-difference samples of π̇ at the nodes, (N, 8)."""
        return np.gradient(self.params, self.times, axis=0)

    def pidot_l1(self) -> float:
        """‖π̇‖_{L¹} ledger by trapezoid over the Euclidean rate."""
        rates = np.linalg.norm(self.derivative(), axis=1)
        return float(np.trapezoid(rates, self.times))

    def accumulated(self, t: float) -> tuple[float, np.ndarray]:
        """Trapezoid accumulants (∫₀ᵗ(α²-|v|²), 2∫₀ᵗv) entering w_π(t)."""
        ts = self.times
        sel = ts <= t + 1e-14
        tt = np.append(ts[sel], t)
        al = np.interp(tt, ts, self.params[:, 0])
        vv = np.stack([np.interp(tt, ts, self.params[:, 2 + k]) for k in range(3)], axis=1)
        phase = np.trapezoid(al**2 - np.sum(vv**2, axis=1), tt)
        disp = 2.0 * np.trapezoid(vv, tt, axis=0)
        return float(phase), disp


class ExtrapolationBeyondPath(ValueError):
    pass


@dataclass
class SpectralFrame:
    """Tangent/cotangent frame at a soliton W; the spectrum module fills in
    the imaginary pair (sigma, F±) and its duality constants."""

    pi: SolitonParams
    W: PairField
    tangent: dict            # name -> PairField  (∂_f W)
    cotangent: dict          # name -> PairField  (Ξ_f)
    gram: np.ndarray         # G[f, g] = <∂_g W, Ξ_f>, measured
    w_norm_sq: float         # <W, W> = 2 ||w||_2^2
    sigma: float | None = None
    F_plus: PairField | None = None
    F_minus: PairField | None = None
    # duality <F-, i σ3 F+> after normalization (F± scaled so this is 1)
    imag_duality: float | None = None

    def pairings(self, R: PairField) -> np.ndarray:
        """The eight orthogonality residuals <R, Ξ_f>."""
        return np.array([pair_inner(R, self.cotangent[f]).real for f in PARAM_NAMES])


# ----------------------------------------------------------------------------
# constructing solitons and frames


def _phase_and_core(pi: SolitonParams, gs: GroundState, grid: CartGrid):
    if abs(gs.alpha - pi.alpha) > 1e-13 * pi.alpha:
        gs = rescale(gs, pi.alpha)
    x, y, z = grid.coords()
    dx, dy, dz = x - pi.d[0], y - pi.d[1], z - pi.d[2]
    r = np.sqrt(dx * dx + dy * dy + dz * dz)
    theta = pi.gamma + pi.v[0] * x + pi.v[1] * y + pi.v[2] * z
    return gs, np.exp(1j * theta), r, (dx, dy, dz)


def make_soliton(pi: SolitonParams, gs: GroundState, grid: CartGrid) -> PairField:
    """w(π) = e^{i(Γ + v·x)} φ(x-D, α) as a conjugate-symmetric pair."""
    gs, phase, r, _ = _phase_and_core(pi, gs, grid)
    w = phase * gs.profile(r)
    return PairField.from_upper(grid, w)


def soliton_from_grid_profile(pi: SolitonParams, phi_grid: Field) -> PairField:
    """Soliton built from a grid-native radial profile field (e.g. the
    Petviashvili-refined discrete ground state) instead of the spline lift;
    pi.alpha must match the profile and D must be a lattice vector so the
    translation is an exact sample shift."""
    grid = phi_grid.grid
    x, y, z = grid.coords()
    h = grid.spacing
    shifted = phi_grid.values
    if any(abs(c) > 0 for c in pi.d):
        for c in pi.d:
            if abs(c / h - round(c / h)) > 1e-12:
                raise ValueError("grid-profile solitons need lattice D")
        shifts = [int(round(c / h)) for c in pi.d]
        shifted = np.roll(shifted, shifts, axis=(0, 1, 2))
    theta = pi.gamma + pi.v[0] * x + pi.v[1] * y + pi.v[2] * z
    return PairField.from_upper(grid, np.exp(1j * theta) * shifted)


def tangent_frame(pi: SolitonParams, gs: GroundState, grid: CartGrid,
                  alpha_step: float = 1e-4) -> SpectralFrame:
    """The eight tangent and cotangent pair fields plus the measured Gram
    matrix.  ∂_α is a centered difference of rescaled ground states (step
    1e-4·α); the analytic generator α⁻¹φ + x·∇φ is exercised by tests as a
    cross-check."""
    gs_here, phase, r, (dx, dy, dz) = _phase_and_core(pi, gs, grid)
    prof = gs_here.profile(r)
    w = phase * prof
    W = PairField.from_upper(grid, w)

    x, y, z = grid.coords()
    tangent: dict[str, PairField] = {}
    tangent["gamma"] = PairField.from_upper(grid, 1j * w)
    # d/dalpha by centered differencing of rescaled profiles
    da = alpha_step * pi.alpha
    hi = rescale(gs_here, pi.alpha + da).profile(r)
    lo = rescale(gs_here, pi.alpha - da).profile(r)
    tangent["alpha"] = PairField.from_upper(grid, phase * (hi - lo) / (2 * da))
    for k, xk in enumerate((x, y, z)):
        tangent[f"v{k+1}"] = PairField.from_upper(grid, 1j * xk * w)
    # true derivative in D_k: -e^{iθ} (∂_k φ)(x-D)
    dspl = gs_here.profile._spline().derivative()
    rr = np.maximum(r, 1e-30)
    dprof = dspl(r)
    for k, dk in enumerate((dx, dy, dz)):
        tangent[f"d{k+1}"] = PairField.from_upper(grid, -phase * dprof * dk / rr)

    cotangent = {
        "alpha": i_sigma3(tangent["gamma"]),
        "gamma": i_sigma3(tangent["alpha"]),
        "v1": i_sigma3(tangent["d1"]),
        "v2": i_sigma3(tangent["d2"]),
        "v3": i_sigma3(tangent["d3"]),
        "d1": i_sigma3(tangent["v1"]),
        "d2": i_sigma3(tangent["v2"]),
        "d3": i_sigma3(tangent["v3"]),
    }

    G = np.empty((8, 8))
    for i, f in enumerate(PARAM_NAMES):
        for j, g in enumerate(PARAM_NAMES):
            G[i, j] = pair_inner(tangent[g], cotangent[f]).real
    return SpectralFrame(pi=pi, W=W, tangent=tangent, cotangent=cotangent,
                         gram=G, w_norm_sq=pair_inner(W, W).real)


def grid_frame(pi: SolitonParams, grid: CartGrid,
               alpha_step: float = 1e-4) -> SpectralFrame:
    """Frame built on Petviashvili-refined grid profiles.

    The discrete equation -Δ_h φ_h + α²φ_h = φ_h³ holds to ~1e-13, so the
    generalized-kernel chains of the discrete H(W) hold at that level instead
    of the sampling-alias floor of the spline lift.  D must be a lattice
    vector (profile translations are exact sample rolls)."""
    from .ground_state import discrete_ground_state_cached

    phi_h = discrete_ground_state_cached(pi.alpha, grid)
    W = soliton_from_grid_profile(pi, phi_h)
    x, y, z = grid.coords()
    theta = pi.gamma + pi.v[0] * x + pi.v[1] * y + pi.v[2] * z
    phase = np.exp(1j * theta)
    h = grid.spacing
    shifts = [int(round(c / h)) for c in pi.d]
    prof = np.roll(phi_h.values.real, shifts, axis=(0, 1, 2))

    tangent: dict[str, PairField] = {}
    tangent["gamma"] = PairField.from_upper(grid, 1j * W.upper)
    da = alpha_step * pi.alpha
    hi = np.roll(discrete_ground_state_cached(pi.alpha + da, grid).values.real,
                 shifts, axis=(0, 1, 2))
    lo = np.roll(discrete_ground_state_cached(pi.alpha - da, grid).values.real,
                 shifts, axis=(0, 1, 2))
    tangent["alpha"] = PairField.from_upper(grid, phase * (hi - lo) / (2 * da))
    for k, xk in enumerate((x, y, z)):
        tangent[f"v{k+1}"] = PairField.from_upper(grid, 1j * xk * W.upper)
    from .grid import spectral_gradient
    grads = spectral_gradient(Field(grid, prof.astype(np.complex128)))
    for k in range(3):
        tangent[f"d{k+1}"] = PairField.from_upper(grid, -phase * grads[k].values)

    cotangent = {
        "alpha": i_sigma3(tangent["gamma"]),
        "gamma": i_sigma3(tangent["alpha"]),
        "v1": i_sigma3(tangent["d1"]),
        "v2": i_sigma3(tangent["d2"]),
        "v3": i_sigma3(tangent["d3"]),
        "d1": i_sigma3(tangent["v1"]),
        "d2": i_sigma3(tangent["v2"]),
        "d3": i_sigma3(tangent["v3"]),
    }
    G = np.empty((8, 8))
    for i, f in enumerate(PARAM_NAMES):
        for j, g in enumerate(PARAM_NAMES):
            G[i, j] = pair_inner(tangent[g], cotangent[f]).real
    return SpectralFrame(pi=pi, W=W, tangent=tangent, cotangent=cotangent,
                         gram=G, w_norm_sq=pair_inner(W, W).real)


# ----------------------------------------------------------------------------
# symmetry transformations


@dataclass(frozen=True)
class SymmetryTransform:
    """Galilean boost + translation + phase + rescaling, applied at time t:
    (g f)(x) = e^{i(Γ + v·x - t|v|²)} α f(α(x - 2tv - D)) with f evaluated at
    internal time α²t by the caller."""

    gamma: float = 0.0
    v: tuple = (0.0, 0.0, 0.0)
    d: tuple = (0.0, 0.0, 0.0)
    alpha: float = 1.0
    t: float = 0.0


def _dilate_band_limited(f: Field, alpha: float) -> Field:
    """f(αx) for α = 2^m via exact index maps on band-limited samples."""
    n = f.grid.n
    if alpha == 1.0:
        return f.copy()
    m = np.log2(alpha)
    if abs(m - round(m)) > 1e-12:
        raise ValueError("grid dilation supports power-of-two alpha only")
    m = int(round(m))
    vals = f.values
    if m > 0:
        for _ in range(m):
            idx = (2 * np.arange(n) - n // 2) % n
            vals = vals[np.ix_(idx, idx, idx)]
    else:
        import scipy.fft as sfft
        for _ in range(-m):
            # f(x/2): spectral upsample by 2 then take the centered window
            fh = sfft.fftn(vals)
            big = np.zeros((2 * n,) * 3, dtype=complex)
            sl = np.r_[0:n // 2, 2 * n - n // 2:2 * n]
            big[np.ix_(sl, sl, sl)] = fh * 8
            up = sfft.ifftn(big)
            lo = n // 2
            vals = up[lo:lo + n, lo:lo + n, lo:lo + n]
    return Field(f.grid, vals)


def symmetry_apply(g: SymmetryTransform, F: PairField) -> PairField:
    """Apply the symmetry transformation to a pair field (upper component
    transformed by the formula, lower kept conjugate)."""
    grid = F.grid
    f = Field(grid, F.upper)
    shift = tuple(2.0 * g.t * vc + dc for vc, dc in zip(g.v, g.d))
    if g.alpha != 1.0:
        f = _dilate_band_limited(f, g.alpha)
        f = Field(grid, g.alpha * f.values)
        # f(α(x - shift)) = (dilated f)(x - shift)
    if any(abs(s) > 0 for s in shift):
        f = spectral_shift(f, shift)
    x, y, z = grid.coords()
    theta = g.gamma + g.v[0] * x + g.v[1] * y + g.v[2] * z - g.t * sum(c * c for c in g.v)
    return PairField.from_upper(grid, np.exp(1j * theta) * f.values)


def compose(g2: SymmetryTransform, g1: SymmetryTransform) -> SymmetryTransform:
    """Composition g2 ∘ g1 at t=0 for unit-scaling transforms."""
    if g1.alpha != 1.0 or g2.alpha != 1.0 or g1.t != 0 or g2.t != 0:
        raise NotImplementedError("composition implemented for alpha=1, t=0")
    d = tuple(d1 + d2 for d1, d2 in zip(g1.d, g2.d))
    v = tuple(v1 + v2 for v1, v2 in zip(g1.v, g2.v))
    # inner phase picks up -v1.D2 from evaluating g1's plane wave at x - D2
    gamma = g2.gamma + g1.gamma - sum(vc * dc for vc, dc in zip(g1.v, g2.d))
    return SymmetryTransform(gamma=gamma, v=v, d=d)


# ----------------------------------------------------------------------------
# nonuniformly moving solitons


def moving_soliton(path: ModulationPath, t: float, gs: GroundState,
                   grid: CartGrid) -> PairField:
    """w_π(t) = e^{iθ}φ(x - y(t), α(t)) with the accumulated phase/position
    integrals; equals w(α, Γ+∫(α²-|v|²), v, D+2∫v) exactly."""
    pi_t = path.at(t)
    phase_acc, disp_acc = path.accumulated(t)
    pi_eff = SolitonParams(
        alpha=pi_t.alpha,
        gamma=pi_t.gamma + phase_acc,
        v=pi_t.v,
        d=tuple(np.asarray(pi_t.d) + disp_acc),
    )
    return make_soliton(pi_eff, gs, grid)


def effective_params(path: ModulationPath, t: float) -> SolitonParams:
    """The instantaneous w(π_eff) parameters of the moving soliton at t."""
    pi_t = path.at(t)
    phase_acc, disp_acc = path.accumulated(t)
    return SolitonParams(alpha=pi_t.alpha, gamma=pi_t.gamma + phase_acc,
                         v=pi_t.v, d=tuple(np.asarray(pi_t.d) + disp_acc))
