"""Reduced-order model construction by biorthogonal eigenvector projection.

The reduced dynamics keep a subset of the full-order eigenvalues; complex
pairs are stored as 2x2 real rotation-scaling blocks so everything exported to
the control modules is real.  The nonlinear residual is evaluated by lifting
to the full state, evaluating, and projecting back.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .numerics import NumericsError, SpectralDecomposition, eig_biorthogonal

_REAL_TOL = 1e-9


class RomError(ValueError):
    """Raised for invalid reduction requests."""


@dataclass(frozen=True)
class ModeInfo:
    eigenvalue: complex
    frequency: float  # |Im lambda|
    damping_ratio: float  # -Re / |lambda|
    kind: str  # "oscillatory" | "real-gust"
    gust_participation: float


@dataclass(frozen=True)
class SelectionCriteria:
    """Mode-retention policy.

    n: reduced dimension; n_real: how many real (gust-coupling) modes to
    keep — plant-specific, e.g. two for the 3-DOF section.  When an output
    map is given, participation is residue-weighted (input coupling times
    output observability) which is normalisation-invariant.
    """

    n: int
    n_real: int = 2
    output_map: np.ndarray | None = None

    def __post_init__(self):
        if self.n < self.n_real or (self.n - self.n_real) % 2:
            raise RomError(
                f"cannot fit {self.n_real} real modes plus conjugate pairs into n = {self.n}"
            )


def _participation(decomp: SpectralDecomposition, B_gf: np.ndarray,
                   output_map: np.ndarray | None) -> np.ndarray:
    p_in = np.linalg.norm(decomp.left_basis @ np.atleast_2d(B_gf.T).T, axis=1)
    if output_map is None:
        return p_in
    p_out = np.linalg.norm(np.atleast_2d(output_map) @ decomp.right_basis, axis=0)
    return p_in * p_out


def select_modes(
    decomp: SpectralDecomposition,
    B_gf: np.ndarray,
    criteria: SelectionCriteria,
    B_cf: np.ndarray | None = None,
) -> list[int]:
    """Indices of retained modes: lowest-frequency oscillatory pairs first,
    real modes ranked by gust participation.  Conjugate pairs are always
    selected together."""
    N = decomp.dim
    if criteria.n > N:
        raise RomError(f"requested reduced dimension {criteria.n} exceeds N = {N}")
    eigs = decomp.eigenvalues
    part = _participation(decomp, B_gf, criteria.output_map)
    ctrl = (
        _participation(decomp, B_cf, criteria.output_map)
        if B_cf is not None
        else np.zeros(N)
    )

    pair_leads = [i for i in range(N) if eigs[i].imag > _REAL_TOL]
    reals = [i for i in range(N) if abs(eigs[i].imag) <= _REAL_TOL]
    pair_leads.sort(key=lambda i: (eigs[i].imag, -part[i], i))
    # rank reals by participation (control participation breaks ties)
    reals.sort(key=lambda i: (-part[i], -ctrl[i], i))

    n_pairs = (criteria.n - criteria.n_real) // 2
    if n_pairs > len(pair_leads) or criteria.n_real > len(reals):
        raise RomError(
            f"spectrum has {len(pair_leads)} pairs and {len(reals)} real modes; "
            f"cannot satisfy n = {criteria.n}, n_real = {criteria.n_real}"
        )
    idx: list[int] = []
    for i in pair_leads[:n_pairs]:
        idx.extend([i, i + 1])  # conjugate stored adjacent by eig_biorthogonal
    idx.extend(sorted(reals[: criteria.n_real]))
    return idx


def realify(eigenvalues: np.ndarray, phi: np.ndarray, psi: np.ndarray):
    """Similarity transform from complex modal form to real block-diagonal
    form.  Conjugate pairs (lead with +Im) map to [[s, w], [-w, s]] blocks;
    real modes pass through.  Returns (A_real, Phi_real, Psi_real)."""
    n = eigenvalues.shape[0]
    A = np.zeros((n, n))
    Phi = np.zeros((phi.shape[0], n))
    Psi = np.zeros((n, psi.shape[1]))
    k = 0
    while k < n:
        lam = eigenvalues[k]
        if abs(lam.imag) <= _REAL_TOL:
            A[k, k] = lam.real
            Phi[:, k] = phi[:, k].real
            Psi[k, :] = psi[k, :].real
            k += 1
            continue
        if k + 1 >= n or abs(eigenvalues[k + 1] - np.conj(lam)) > 1e-6 * max(1.0, abs(lam)):
            raise RomError(f"spectrum not closed under conjugation at eigenvalue {lam}")
        s, w = lam.real, lam.imag
        A[k : k + 2, k : k + 2] = [[s, w], [-w, s]]
        Phi[:, k] = phi[:, k].real
        Phi[:, k + 1] = phi[:, k].imag
        Psi[k, :] = 2.0 * psi[k, :].real
        Psi[k + 1, :] = -2.0 * psi[k, :].imag
        k += 2
    return A, Phi, Psi


@dataclass(frozen=True)
class ReducedOrderModel:
    """Real block-modal reduced model with lift-evaluate-project nonlinearity."""

    n: int
    A: np.ndarray  # (n, n) block-diagonal modal form
    B_c: np.ndarray  # (n, m)
    B_g: np.ndarray  # (n, p)
    Phi: np.ndarray  # (N, n) real right basis
    Psi: np.ndarray  # (n, N) real left basis
    C_out: np.ndarray  # (q, n) physical output reconstruction
    modes: tuple[ModeInfo, ...]
    output_labels: tuple[str, ...]
    f_nl_full: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)
    source_hash: str = ""

    @property
    def m(self) -> int:
        return self.B_c.shape[1]

    @property
    def p(self) -> int:
        return self.B_g.shape[1]

    def eval_f_nr(self, x: np.ndarray) -> np.ndarray:
        """Projected nonlinear residual F_NR(x) = Psi F_NL(Phi x)."""
        if self.f_nl_full is None:
            return np.zeros(self.n)
        return self.Psi @ self.f_nl_full(self.Phi @ np.asarray(x, dtype=float))

    def rhs(self, x, u_c, u_d, nonlinear=True):
        dx = self.A @ x + self.B_c @ np.atleast_1d(u_c) + self.B_g @ np.atleast_1d(u_d)
        if nonlinear and self.f_nl_full is not None:
            dx = dx + self.eval_f_nr(x)
        return dx

    def outputs(self, x: np.ndarray) -> np.ndarray:
        return self.C_out @ x


def _full_matrices(fom):
    """(A, B_c, B_g, C, f_nl) from a full aerofoil model or a plant bundle."""
    if hasattr(fom, "A_f"):
        return fom.A_f, fom.B_cf, fom.B_gf, fom.C_phys, getattr(fom, "eval_nonlinear", None)
    return fom.A, fom.B_c, fom.B_g, fom.C_out, getattr(fom, "eval_f_nr", None)


def build_nrom(fom, modes: list[int], decomp: SpectralDecomposition | None = None,
               source_hash: str = "") -> ReducedOrderModel:
    """Project a full-order model onto the given mode indices.

    ``fom`` is a full aerofoil model (A_f, B_cf, B_gf, C_phys) or an external
    plant bundle (A, B_c, B_g, C_out); either way it carries output labels and
    optionally a full-state nonlinearity."""
    A_full, B_cf_full, B_gf_full, C_full, f_nl = _full_matrices(fom)
    if decomp is None:
        decomp = eig_biorthogonal(A_full)
    eigs = decomp.eigenvalues[modes]
    phi = decomp.right_basis[:, modes]
    psi = decomp.left_basis[modes, :]
    A, Phi, Psi = realify(eigs, phi, psi)

    B_c = Psi @ B_cf_full
    B_g = Psi @ B_gf_full
    C_out = C_full @ Phi

    part = np.linalg.norm(psi @ np.atleast_2d(B_gf_full.T).T, axis=1)
    infos = []
    for lam, pp in zip(eigs, part):
        kind = "oscillatory" if abs(lam.imag) > _REAL_TOL else "real-gust"
        infos.append(
            ModeInfo(
                eigenvalue=complex(lam),
                frequency=abs(lam.imag),
                damping_ratio=float(-lam.real / abs(lam)) if abs(lam) > 0 else 0.0,
                kind=kind,
                gust_participation=float(pp),
            )
        )

    return ReducedOrderModel(
        n=len(modes),
        A=A,
        B_c=B_c,
        B_g=B_g,
        Phi=Phi,
        Psi=Psi,
        C_out=C_out,
        modes=tuple(infos),
        output_labels=tuple(fom.output_labels),
        f_nl_full=f_nl,
        source_hash=source_hash,
    )


def default_rom(fom, n: int = 8, n_real: int = 2,
                source_hash: str = "") -> ReducedOrderModel:
    """Standard reduction path: residue-weighted selection on the physical
    outputs."""
    A_full, B_cf_full, B_gf_full, C_full, _ = _full_matrices(fom)
    decomp = eig_biorthogonal(A_full)
    crit = SelectionCriteria(n=n, n_real=n_real, output_map=C_full)
    modes = select_modes(decomp, B_gf_full, crit, B_cf=B_cf_full)
    return build_nrom(fom, modes, decomp=decomp, source_hash=source_hash)
