"""Riesz projections P0, P± and the continuous-spectrum complement Pc.

Built from a SpectralFrame that carries its measured Gram matrix and
imaginary-pair duality, so idempotency and mutual annihilation hold by
construction up to the frame's own residuals; the classic normalization
drift (the α⁻³ and 1/(4α)-type constants) never enters.

  P0 f  = Σ_g c_g(f) ∂_g W,   G c(f) = <f, Ξ_·>        (8x8 Gram solve)
  P- f  = <f, iσ3 F+> F-      (duality <F-, iσ3 F+> normalized to 1)
  P+ f  = -<f, iσ3 F-> F+     (the iσ3 pairing is antisymmetric)
  Pc    = I - P0 - P+ - P-
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PairField, i_sigma3, pair_inner
from .soliton import PARAM_NAMES, SpectralFrame


@dataclass
class ProjectionSet:
    frame: SpectralFrame

    def __post_init__(self):
        if self.frame.F_plus is None or self.frame.F_minus is None:
            raise ValueError("frame lacks the imaginary pair; attach it first")
        self._xi = [self.frame.cotangent[f] for f in PARAM_NAMES]
        self._tan = [self.frame.tangent[f] for f in PARAM_NAMES]
        self._G = self.frame.gram
        Fp, Fm = self.frame.F_plus, self.frame.F_minus
        self._isFp = i_sigma3(Fp)
        self._isFm = i_sigma3(Fm)
        self._dual = pair_inner(Fm, self._isFp).real   # = 1 after normalization
        self.zero_pairing_scale = float(np.max(np.abs(np.diag(self._G))))

    def p0(self, f: PairField) -> PairField:
        b = np.array([pair_inner(f, xi).real for xi in self._xi])
        c = np.linalg.solve(self._G, b)
        out = PairField.zeros(f.grid)
        up, lo = out.upper, out.lower
        for cg, tg in zip(c, self._tan):
            up += cg * tg.upper
            lo += cg * tg.lower
        return PairField(f.grid, up, lo)

    def p_minus(self, f: PairField) -> PairField:
        b = pair_inner(f, self._isFp) / self._dual
        return PairField(f.grid, b * self.frame.F_minus.upper,
                         b * self.frame.F_minus.lower)

    def p_plus(self, f: PairField) -> PairField:
        b = -pair_inner(f, self._isFm) / self._dual
        return PairField(f.grid, b * self.frame.F_plus.upper,
                         b * self.frame.F_plus.lower)

    def p_im(self, f: PairField) -> PairField:
        a, b = self.p_plus(f), self.p_minus(f)
        return PairField(f.grid, a.upper + b.upper, a.lower + b.lower)

    def p_c(self, f: PairField) -> PairField:
        rest = self.p0(f) + self.p_im(f)
        return PairField(f.grid, f.upper - rest.upper, f.lower - rest.lower)

    def unstable_coefficient(self, f: PairField) -> complex:
        """Coefficient of F- (the growing direction) in f."""
        return pair_inner(f, self._isFp) / self._dual

    def stable_coefficient(self, f: PairField) -> complex:
        return -pair_inner(f, self._isFm) / self._dual


def apply_projection(which: str, ps: ProjectionSet, f: PairField) -> PairField:
    table = {"0": ps.p0, "+": ps.p_plus, "-": ps.p_minus, "c": ps.p_c,
             "im": ps.p_im}
    if which not in table:
        raise ValueError(f"unknown projection {which!r}")
    return table[which](f)


def orthogonality_residuals(ps: ProjectionSet, f: PairField) -> np.ndarray:
    """The eight pairings <f, Ξ_g>; zero iff P0 f = 0."""
    return np.array([pair_inner(f, xi).real for xi in ps._xi])
