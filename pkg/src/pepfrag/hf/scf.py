"""Restricted and unrestricted Hartree-Fock."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import expm, expm_frechet
from scipy.optimize import minimize

from ..molio import ATOMIC_NUMBER, Molecule, electron_count
from .basis import BasisSet, build_basis
from .integrals import IntegralSet, compute_integrals, nuclear_repulsion

log = logging.getLogger(__name__)

ORTH_CUTOFF = 1e-7


class ScfError(ValueError):
    pass


@dataclass(frozen=True)
class ScfOptions:
    energy_tol: float = 1e-9
    gradient_tol: float = 1e-6
    max_iter: int = 200
    diis: bool = True
    diis_size: int = 8
    diis_start: int = 2
    level_shift: float = 0.2
    # iterations without a new lowest DIIS error before the level shift engages
    stall_window: int = 12
    damping: float = 0.0
    direct: bool | None = None
    # "sad" (superposition of atomic densities) or "core" (bare-nucleus Hamiltonian)
    initial_guess: str = "sad"
    # direct energy minimisation over orbital rotations once shifted DIIS stalls too
    second_order: bool = True

    @classmethod
    def from_mapping(cls, data: dict | None) -> "ScfOptions":
        data = dict(data or {})
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown SCF options: {sorted(unknown)}")
        return cls(**data)


@dataclass
class ScfResult:
    method: str
    total_energy: float
    electronic_energy: float
    nuclear_repulsion: float
    converged: bool
    iterations: int
    orbital_energies: list[float]
    final_gradient_norm: float
    orbital_energies_beta: list[float] | None = None
    s_squared: float | None = None
    energy_history: list[float] = field(default_factory=list, repr=False)
    density: np.ndarray | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "total_energy": self.total_energy,
            "electronic_energy": self.electronic_energy,
            "nuclear_repulsion": self.nuclear_repulsion,
            "converged": self.converged,
            "iterations": self.iterations,
            "final_gradient_norm": self.final_gradient_norm,
            "s_squared": self.s_squared,
        }


def orthogonalizer(S: np.ndarray, cutoff: float = ORTH_CUTOFF) -> np.ndarray:
    """Symmetric S^-1/2, or canonical orthogonalisation if S is near-singular."""
    w, U = np.linalg.eigh(S)
    if w.min() > cutoff:
        return (U / np.sqrt(w)) @ U.T
    keep = w > cutoff
    log.warning("dropping %d near-dependent basis combinations", int((~keep).sum()))
    return U[:, keep] / np.sqrt(w[keep])


class _Diis:
    def __init__(self, size: int):
        self.size = size
        self.focks: list[np.ndarray] = []
        self.errors: list[np.ndarray] = []

    def extrapolate(self, fock: np.ndarray, error: np.ndarray) -> np.ndarray:
        self.focks.append(fock.copy())
        self.errors.append(error.ravel().copy())
        if len(self.focks) > self.size:
            self.focks.pop(0)
            self.errors.pop(0)
        m = len(self.focks)
        if m < 2:
            return fock
        B = np.empty((m + 1, m + 1))
        B[-1, :] = B[:, -1] = -1.0
        B[-1, -1] = 0.0
        E = np.array(self.errors)
        B[:m, :m] = E @ E.T
        rhs = np.zeros(m + 1)
        rhs[-1] = -1.0
        try:
            c = np.linalg.solve(B, rhs)[:m]
        except np.linalg.LinAlgError:
            c = np.linalg.lstsq(B, rhs, rcond=None)[0][:m]
        return np.einsum("i,i...->...", c, np.array(self.focks))


@lru_cache(maxsize=None)
def atomic_density(sym: str) -> np.ndarray:
    """Spherically averaged density of a neutral atom in its STO-3G basis.

    Fractional-occupation HF: electrons fill orbitals in energy order and
    the outermost partially filled level is shared equally across its
    near-degenerate orbitals.
    """
    z = ATOMIC_NUMBER[sym]
    atom = Molecule(sym, ((z, (0.0, 0.0, 0.0)),))
    ints = compute_integrals(atom, build_basis(atom), direct=False)
    H = ints.core_hamiltonian
    X = orthogonalizer(ints.S)
    F = H
    P = np.zeros_like(H)
    for _ in range(100):
        eps, C = _diagonalize(F, X)
        occ = np.zeros(len(eps))
        left = float(z)
        k = 0
        while left > 1e-12:
            group = [k]
            while group[-1] + 1 < len(eps) and eps[group[-1] + 1] - eps[k] < 1e-4:
                group.append(group[-1] + 1)
            share = min(2.0 * len(group), left)
            occ[group] = share / len(group)
            left -= share
            k = group[-1] + 1
        P_new = (C * occ) @ C.T
        if np.abs(P_new - P).max() < 1e-10:
            P = P_new
            break
        P = 0.5 * (P + P_new) if _ else P_new
        J, K = ints.jk(P)
        F = H + J[0] - 0.5 * K[0]
    return P


def sad_density(m: Molecule, b: BasisSet) -> np.ndarray:
    """Block-diagonal sum of atomic densities (total, both spins)."""
    P = np.zeros((b.n, b.n))
    pos = 0
    for sym in m.symbols:
        Pa = atomic_density(sym)
        k = Pa.shape[0]
        P[pos:pos + k, pos:pos + k] = Pa
        pos += k
    return P


def _diagonalize(F: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    e, Cp = np.linalg.eigh(X.T @ F @ X)
    return e, X @ Cp


def _occupations(m: Molecule) -> tuple[int, int]:
    n = electron_count(m)
    unpaired = m.multiplicity - 1
    n_alpha = (n + unpaired) // 2
    return n_alpha, n - n_alpha


def _minimize_orbitals(C0s, occ, weight, fock, energy, residual, energy_tol, gradient_tol,
                       max_rounds=20):
    """Minimise the HF energy over occupied-virtual rotations C = C0 exp(K).

    L-BFGS on rotation parameters, diagonally preconditioned by orbital
    energy gaps. Rounds re-centre the reference orbitals and repeat until
    two successive round energies agree within ``energy_tol`` and the
    commutator norm meets ``gradient_tol``. Returns (density, last energy
    change between rounds).
    """
    spins = len(C0s)

    def split(x, shapes):
        out, pos = [], 0
        for nv, no in shapes:
            out.append(x[pos:pos + nv * no].reshape(nv, no))
            pos += nv * no
        return out

    P = None
    e_prev = None
    d_e = np.inf
    for _ in range(max_rounds):
        F0 = fock(np.array([weight * C[:, :k] @ C[:, :k].T for C, k in zip(C0s, occ)]))
        # canonicalise within the occupied and virtual blocks of the current Fock matrices
        eps_s = []
        for s in range(spins):
            k = occ[s]
            Co, Cv = C0s[s][:, :k], C0s[s][:, k:]
            eo, Uo = np.linalg.eigh(Co.T @ F0[s] @ Co)
            ev, Uv = np.linalg.eigh(Cv.T @ F0[s] @ Cv)
            C0s[s] = np.hstack([Co @ Uo, Cv @ Uv])
            eps_s.append((eo, ev))
        shapes = [(C.shape[1] - k, k) for C, k in zip(C0s, occ)]
        scale = np.concatenate([
            np.sqrt(2.0 * weight * np.maximum(ev[:, None] - eo[None, :], 0.1)).ravel()
            for eo, ev in eps_s
        ])

        def fun(x):
            kappas = split(x / scale, shapes)
            Cs, Us, Ks = [], [], []
            for C0, kap, k in zip(C0s, kappas, occ):
                n = C0.shape[1]
                K = np.zeros((n, n))
                K[k:, :k] = kap
                K[:k, k:] = -kap.T
                U = expm(K)
                Cs.append(C0 @ U)
                Us.append(U)
                Ks.append(K)
            Pn = np.array([weight * C[:, :k] @ C[:, :k].T for C, k in zip(Cs, occ)])
            Fn = fock(Pn)
            e = energy(Pn, Fn)
            grads = []
            for s, (C0, C, K, k) in enumerate(zip(C0s, Cs, Ks, occ)):
                dU = np.zeros_like(K)
                # dE/dP = F and P = weight * Co Co^T
                dU[:, :k] = C0.T @ (2.0 * weight * Fn[s] @ C[:, :k])
                dK = expm_frechet(K.T, dU, compute_expm=False)
                grads.append((dK[k:, :k] - dK[:k, k:].T).ravel())
            return e, np.concatenate(grads) / scale

        x0 = np.zeros(int(sum(nv * no for nv, no in shapes)))
        res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                       options={"maxiter": 500, "ftol": 1e-16, "gtol": 1e-9 * min(1.0, gradient_tol * 1e3)})
        kappas = split(res.x / scale, shapes)
        for s, (kap, k) in enumerate(zip(kappas, occ)):
            n = C0s[s].shape[1]
            K = np.zeros((n, n))
            K[k:, :k] = kap
            K[:k, k:] = -kap.T
            C0s[s] = C0s[s] @ expm(K)
        P = np.array([weight * C[:, :k] @ C[:, :k].T for C, k in zip(C0s, occ)])
        F = fock(P)
        e = energy(P, F)
        if e_prev is not None:
            d_e = abs(e - e_prev)
            if d_e <= energy_tol and residual(F, P) <= gradient_tol:
                break
        e_prev = e
    return P, d_e


def _run(m: Molecule, ints: IntegralSet, opts: ScfOptions, unrestricted: bool) -> ScfResult:
    S = ints.S
    H = ints.core_hamiltonian
    X = orthogonalizer(S)
    enuc = nuclear_repulsion(m)
    n_alpha, n_beta = _occupations(m)
    nmo = X.shape[1]
    if n_alpha > nmo:
        raise ScfError(f"{m.name!r}: {n_alpha} occupied orbitals exceed {nmo} basis functions")
    spins = 2 if unrestricted else 1
    occ = [n_alpha, n_beta] if unrestricted else [n_alpha]
    # density per spin channel; RHF carries the full (doubly occupied) density
    weight = 1.0 if unrestricted else 2.0

    def densities(Cs):
        return np.array([weight * C[:, :k] @ C[:, :k].T for C, k in zip(Cs, occ)])

    def fock(P):
        J, K = ints.jk(P)
        if unrestricted:
            Jt = J[0] + J[1]
            return np.array([H + Jt - K[0], H + Jt - K[1]])
        return np.array([H + J[0] - 0.5 * K[0]])

    def energy(P, F):
        return 0.5 * float(sum(np.vdot(P[s], H + F[s]) for s in range(spins)))

    def commutators(F, P):
        return np.array([F[s] @ P[s] @ S - S @ P[s] @ F[s] for s in range(spins)])

    def residual(F, P):
        err = commutators(F, P)
        return float(np.sqrt(sum(np.linalg.norm(err[s]) ** 2 for s in range(spins))))

    if opts.initial_guess == "sad":
        P0 = sad_density(m, ints.basis)
        # scale to the electron count in case of a net charge
        n_elec = n_alpha + n_beta
        P0 *= n_elec / float(np.vdot(P0, S))
        P = np.array([P0 * (k / n_elec) for k in occ]) if unrestricted else P0[None]
    elif opts.initial_guess == "core":
        eps, C = _diagonalize(H, X)
        P = densities([C] * spins)
    else:
        raise ValueError(f"unknown initial guess {opts.initial_guess!r}")
    diis = _Diis(opts.diis_size) if opts.diis else None
    e_old = None
    history: list[float] = []
    converged = False
    best_err = np.inf
    since_best = 0
    shift = 0.0
    grad = np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        F = fock(P)
        e_elec = energy(P, F)
        err = commutators(F, P)
        grad = residual(F, P)
        history.append(e_elec + enuc)
        d_e = np.inf if e_old is None else abs(e_elec - e_old)
        log.debug("iter %3d  E=%.12f  dE=%.3e  |FPS-SPF|=%.3e", it, e_elec + enuc, d_e, grad)
        if d_e <= opts.energy_tol and grad <= opts.gradient_tol:
            converged = True
            break
        e_old = e_elec

        if grad < best_err * 0.999:
            best_err = grad
            since_best = 0
        else:
            since_best += 1
        if since_best >= opts.stall_window:
            if shift == 0.0 and opts.level_shift > 0:
                log.info("%s: DIIS stalled at iteration %d, applying %.2f Ha level shift",
                         m.name, it, opts.level_shift)
                shift = opts.level_shift
                since_best = 0
                if diis is not None:
                    diis = _Diis(opts.diis_size)
            elif opts.second_order:
                break

        F_use = F
        if diis is not None and it >= opts.diis_start:
            ortho_err = np.array([X.T @ err[s] @ X for s in range(spins)])
            F_use = diis.extrapolate(F, ortho_err)
        if shift:
            # raise virtual levels: F + shift * (S - S P S / weight)
            F_use = np.array([F_use[s] + shift * (S - S @ P[s] @ S / weight) for s in range(spins)])

        Cs = []
        for s in range(spins):
            _, Cs_s = _diagonalize(F_use[s], X)
            Cs.append(Cs_s)
        P_new = densities(Cs)
        if opts.damping:
            P_new = (1.0 - opts.damping) * P_new + opts.damping * P
        P = P_new

    if not converged and opts.second_order:
        log.info("%s: switching to direct orbital minimisation at iteration %d", m.name, it)
        Cs = [_diagonalize(F[s], X)[1] for s in range(spins)]
        P, d_e = _minimize_orbitals(Cs, occ, weight, fock, energy, residual,
                                    opts.energy_tol, opts.gradient_tol)
        F = fock(P)
        e_elec = energy(P, F)
        grad = residual(F, P)
        history.append(e_elec + enuc)
        it += 1
        converged = grad <= opts.gradient_tol and d_e <= opts.energy_tol
        log.debug("after minimisation E=%.12f dE=%.3e |FPS-SPF|=%.3e", e_elec + enuc, d_e, grad)

    # orbital energies from the final (undamped, unshifted) Fock matrices
    F = fock(P)
    eig = [np.linalg.eigvalsh(X.T @ F[s] @ X) for s in range(spins)]
    s2 = None
    if unrestricted:
        Ca = _diagonalize(F[0], X)[1][:, :n_alpha]
        Cb = _diagonalize(F[1], X)[1][:, :n_beta]
        ov = Ca.T @ S @ Cb
        sz = 0.5 * (n_alpha - n_beta)
        s2 = float(sz * (sz + 1) + n_beta - np.sum(ov * ov))

    if not converged:
        log.warning("%s: SCF not converged after %d iterations (|FPS-SPF|=%.2e)",
                    m.name, opts.max_iter, grad)
    electronic = e_elec
    total = electronic + enuc
    return ScfResult(
        method="UHF" if unrestricted else "RHF",
        total_energy=total,
        electronic_energy=electronic,
        nuclear_repulsion=enuc,
        converged=converged,
        iterations=it,
        orbital_energies=eig[0].tolist(),
        orbital_energies_beta=eig[1].tolist() if unrestricted else None,
        final_gradient_norm=grad,
        s_squared=s2,
        energy_history=history,
        density=P,
    )


def scf_rhf(m: Molecule, b: BasisSet | None = None, opts: ScfOptions | None = None,
            integrals: IntegralSet | None = None) -> ScfResult:
    opts = opts or ScfOptions()
    n = electron_count(m)
    if n % 2 or m.multiplicity != 1:
        raise ScfError(
            f"{m.name!r}: RHF needs a closed-shell singlet ({n} electrons, "
            f"multiplicity {m.multiplicity}); use scf_uhf"
        )
    b = b or build_basis(m)
    ints = integrals or compute_integrals(m, b, direct=opts.direct)
    return _run(m, ints, opts, unrestricted=False)


def scf_uhf(m: Molecule, b: BasisSet | None = None, opts: ScfOptions | None = None,
            integrals: IntegralSet | None = None) -> ScfResult:
    opts = opts or ScfOptions()
    b = b or build_basis(m)
    ints = integrals or compute_integrals(m, b, direct=opts.direct)
    return _run(m, ints, opts, unrestricted=True)


def run_scf(m: Molecule, opts: ScfOptions | None = None) -> ScfResult:
    """RHF for closed-shell singlets, UHF otherwise."""
    if electron_count(m) % 2 == 0 and m.multiplicity == 1:
        return scf_rhf(m, opts=opts)
    return scf_uhf(m, opts=opts)
