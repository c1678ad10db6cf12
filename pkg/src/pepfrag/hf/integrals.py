"""One- and two-electron integrals over s/p Cartesian Gaussians.

All integrals use the McMurchie-Davidson scheme: each Gaussian product is
expanded in Hermite Gaussians (coefficients E), and Coulomb-type integrals
reduce to the auxiliary Hermite integrals R_tuv built from the Boys function.
Only l <= 1 is needed for STO-3G on H, C, N, O, S, which keeps every array
small and fixed-size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ..molio import ANGSTROM_TO_BOHR, Molecule, MoleculeError
from .basis import BasisSet
from .boys import BOYS_TABLE, boys_fast_into

# ERIs are kept as a packed unique-quartet list up to this many functions and
# recomputed on demand (integral-direct) above it.
PACKED_ERI_LIMIT = 128
SCHWARZ_CUTOFF = 1e-12
# primitive pairs with |c_a c_b| exp(-mu R_AB^2) below PAIR_CUTOFF are dropped;
# primitive quartets whose prefactor-weighted bound is below QUARTET_CUTOFF
# are skipped
PAIR_CUTOFF = 1e-18
QUARTET_CUTOFF = 1e-15

# Kernel shells carry 1 (s), 3 (p) or 4 (sp) Cartesian components. Component
# type 0 is s, 1..3 are px, py, pz.
_CART = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.int64)
# Hermite (t, u, v) triples with t + u + v <= 2 ordered by degree; a pair of
# total angular momentum L uses the first _N_HERM[L] of them.
_HERM = np.array(
    [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1),
     (2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)],
    dtype=np.int64,
)
_N_HERM = np.array([1, 4, 10], dtype=np.int64)


@numba.njit(cache=True, nogil=True)
def _ctype(ncomp, c):
    if ncomp == 1:
        return 0
    if ncomp == 3:
        return c + 1
    return c


@numba.njit(cache=True, nogil=True)
def _lmax(ncomp):
    return 0 if ncomp == 1 else 1


@numba.njit(cache=True, nogil=True)
def _hermite_e(la, lb, xpa, xpb, o2p, k, E):
    """E[i, j, t] for i <= la (<= 1), j <= lb, one Cartesian direction."""
    E[:, :, :] = 0.0
    E[0, 0, 0] = k
    for j in range(lb):
        for t in range(j + 2):
            v = xpb * E[0, j, t] + (t + 1) * E[0, j, t + 1]
            if t > 0:
                v += o2p * E[0, j, t - 1]
            E[0, j + 1, t] = v
    for i in range(la):
        for j in range(lb + 1):
            for t in range(i + j + 2):
                v = xpa * E[i, j, t] + (t + 1) * E[i, j, t + 1]
                if t > 0:
                    v += o2p * E[i, j, t - 1]
                E[i + 1, j, t] = v


@numba.njit(cache=True, nogil=True)
def _hermite_r(L, alpha, x, y, z, R, Rn, F):
    """R[t, u, v] = R^0_tuv(alpha, (x, y, z)) for t + u + v <= L."""
    boys_fast_into(L, alpha * (x * x + y * y + z * z), F, BOYS_TABLE)
    fac = 1.0
    for n in range(L + 1):
        Rn[n, 0, 0, 0] = fac * F[n]
        fac *= -2.0 * alpha
    for s in range(1, L + 1):
        for n in range(L - s + 1):
            for t in range(s + 1):
                for u in range(s - t + 1):
                    v = s - t - u
                    if t > 0:
                        val = x * Rn[n + 1, t - 1, u, v]
                        if t > 1:
                            val += (t - 1) * Rn[n + 1, t - 2, u, v]
                    elif u > 0:
                        val = y * Rn[n + 1, t, u - 1, v]
                        if u > 1:
                            val += (u - 1) * Rn[n + 1, t, u - 2, v]
                    else:
                        val = z * Rn[n + 1, t, u, v - 1]
                        if v > 1:
                            val += (v - 1) * Rn[n + 1, t, u, v - 2]
                    Rn[n, t, u, v] = val
    for t in range(L + 1):
        for u in range(L + 1 - t):
            for v in range(L + 1 - t - u):
                R[t, u, v] = Rn[0, t, u, v]


@numba.njit(cache=True, nogil=True)
def _one_electron(centers, ncomp, exps, coefs, offsets, charges, nuclei, n):
    S = np.zeros((n, n))
    T = np.zeros((n, n))
    V = np.zeros((n, n))
    ns = ncomp.shape[0]
    Ex = np.zeros((2, 4, 6))
    Ey = np.zeros((2, 4, 6))
    Ez = np.zeros((2, 4, 6))
    R = np.zeros((3, 3, 3))
    Rn = np.zeros((3, 3, 3, 3))
    F = np.zeros(3)
    s1 = np.zeros((3, 2, 4))
    sd = np.empty(3)
    td = np.empty(3)
    P = np.empty(3)
    for A in range(ns):
        na = ncomp[A]
        la = _lmax(na)
        for B in range(A + 1):
            nb = ncomp[B]
            lb = _lmax(nb)
            for pa in range(3):
                a = exps[A, pa]
                for pb in range(3):
                    b = exps[B, pb]
                    p = a + b
                    mu = a * b / p
                    o2p = 0.5 / p
                    for d in range(3):
                        P[d] = (a * centers[A, d] + b * centers[B, d]) / p
                    _hermite_e(la, lb + 2, P[0] - centers[A, 0], P[0] - centers[B, 0], o2p,
                               math.exp(-mu * (centers[A, 0] - centers[B, 0]) ** 2), Ex)
                    _hermite_e(la, lb + 2, P[1] - centers[A, 1], P[1] - centers[B, 1], o2p,
                               math.exp(-mu * (centers[A, 1] - centers[B, 1]) ** 2), Ey)
                    _hermite_e(la, lb + 2, P[2] - centers[A, 2], P[2] - centers[B, 2], o2p,
                               math.exp(-mu * (centers[A, 2] - centers[B, 2]) ** 2), Ez)
                    sq = math.sqrt(math.pi / p)
                    for i in range(la + 1):
                        for j in range(lb + 3):
                            s1[0, i, j] = Ex[i, j, 0] * sq
                            s1[1, i, j] = Ey[i, j, 0] * sq
                            s1[2, i, j] = Ez[i, j, 0] * sq
                    for ca in range(na):
                        ta = _ctype(na, ca)
                        ia = _CART[ta]
                        for cb in range(nb):
                            tb = _ctype(nb, cb)
                            ib = _CART[tb]
                            cc = coefs[A, min(ta, 1), pa] * coefs[B, min(tb, 1), pb]
                            for d in range(3):
                                i = ia[d]
                                j = ib[d]
                                sd[d] = s1[d, i, j]
                                t = 4.0 * b * b * s1[d, i, j + 2] - 2.0 * b * (2 * j + 1) * s1[d, i, j]
                                if j >= 2:
                                    t += j * (j - 1) * s1[d, i, j - 2]
                                td[d] = -0.5 * t
                            row = offsets[A] + ca
                            col = offsets[B] + cb
                            S[row, col] += cc * sd[0] * sd[1] * sd[2]
                            T[row, col] += cc * (td[0] * sd[1] * sd[2] + sd[0] * td[1] * sd[2]
                                                 + sd[0] * sd[1] * td[2])
                    L = la + lb
                    for c in range(charges.shape[0]):
                        _hermite_r(L, p, P[0] - nuclei[c, 0], P[1] - nuclei[c, 1],
                                   P[2] - nuclei[c, 2], R, Rn, F)
                        pref = -charges[c] * 2.0 * math.pi / p
                        for ca in range(na):
                            ta = _ctype(na, ca)
                            ia = _CART[ta]
                            for cb in range(nb):
                                tb = _ctype(nb, cb)
                                ib = _CART[tb]
                                cc = coefs[A, min(ta, 1), pa] * coefs[B, min(tb, 1), pb]
                                acc = 0.0
                                for t in range(ia[0] + ib[0] + 1):
                                    for u in range(ia[1] + ib[1] + 1):
                                        for v in range(ia[2] + ib[2] + 1):
                                            acc += (Ex[ia[0], ib[0], t] * Ey[ia[1], ib[1], u]
                                                    * Ez[ia[2], ib[2], v] * R[t, u, v])
                                V[offsets[A] + ca, offsets[B] + cb] += pref * cc * acc
    for i in range(n):
        for j in range(i):
            S[j, i] = S[i, j]
            T[j, i] = T[i, j]
            V[j, i] = V[i, j]
    return S, T, V


@numba.njit(cache=True, nogil=True)
def _shell_pairs(centers, ncomp, exps, coefs):
    """Primitive-pair data for every kernel-shell pair A >= B.

    Per pair: the shells, the number of retained primitive pairs, exponent
    sums p, centres P, a magnitude weight for screening, and the Hermite
    expansion H[pair, prim, ca*nb+cb, herm] with contraction coefficients and
    the Gaussian-product prefactor folded in.
    """
    ns = ncomp.shape[0]
    npair = ns * (ns + 1) // 2
    pA = np.empty(npair, dtype=np.int64)
    pB = np.empty(npair, dtype=np.int64)
    nprim = np.zeros(npair, dtype=np.int64)
    pp = np.ones((npair, 9))
    pP = np.zeros((npair, 9, 3))
    pw = np.zeros((npair, 9))
    pH = np.zeros((npair, 9, 16, 10))
    Ex = np.zeros((2, 2, 4))
    Ey = np.zeros((2, 2, 4))
    Ez = np.zeros((2, 2, 4))
    k = 0
    for A in range(ns):
        for B in range(A + 1):
            pA[k] = A
            pB[k] = B
            na = ncomp[A]
            nb = ncomp[B]
            la = _lmax(na)
            lb = _lmax(nb)
            nh = _N_HERM[la + lb]
            q = 0
            for pa in range(3):
                a = exps[A, pa]
                for pb in range(3):
                    b = exps[B, pb]
                    p = a + b
                    mu = a * b / p
                    r2 = 0.0
                    for d in range(3):
                        r2 += (centers[A, d] - centers[B, d]) ** 2
                    cmax = 0.0
                    for la_ in range(la + 1):
                        for lb_ in range(lb + 1):
                            cm = abs(coefs[A, la_, pa] * coefs[B, lb_, pb])
                            if cm > cmax:
                                cmax = cm
                    w = cmax * math.exp(-mu * r2)
                    if w < PAIR_CUTOFF:
                        continue
                    o2p = 0.5 / p
                    pp[k, q] = p
                    pw[k, q] = w
                    for d in range(3):
                        pP[k, q, d] = (a * centers[A, d] + b * centers[B, d]) / p
                    _hermite_e(la, lb, pP[k, q, 0] - centers[A, 0], pP[k, q, 0] - centers[B, 0],
                               o2p, math.exp(-mu * (centers[A, 0] - centers[B, 0]) ** 2), Ex)
                    _hermite_e(la, lb, pP[k, q, 1] - centers[A, 1], pP[k, q, 1] - centers[B, 1],
                               o2p, math.exp(-mu * (centers[A, 1] - centers[B, 1]) ** 2), Ey)
                    _hermite_e(la, lb, pP[k, q, 2] - centers[A, 2], pP[k, q, 2] - centers[B, 2],
                               o2p, math.exp(-mu * (centers[A, 2] - centers[B, 2]) ** 2), Ez)
                    for ca in range(na):
                        ta = _ctype(na, ca)
                        ia = _CART[ta]
                        for cb in range(nb):
                            tb = _ctype(nb, cb)
                            ib = _CART[tb]
                            cc = coefs[A, min(ta, 1), pa] * coefs[B, min(tb, 1), pb]
                            for h in range(nh):
                                t = _HERM[h, 0]
                                u = _HERM[h, 1]
                                v = _HERM[h, 2]
                                if t > ia[0] + ib[0] or u > ia[1] + ib[1] or v > ia[2] + ib[2]:
                                    continue
                                pH[k, q, ca * nb + cb, h] = (cc * Ex[ia[0], ib[0], t]
                                                             * Ey[ia[1], ib[1], u]
                                                             * Ez[ia[2], ib[2], v])
                    q += 1
            nprim[k] = q
            k += 1
    return pA, pB, nprim, pp, pP, pw, pH


@numba.njit(cache=True, nogil=True)
def _quartet(P, Q, ncomp, pA, pB, nprim, pp, pP, pw, pH, out, R, Rn, F, M, G, cut):
    """Contracted ERI block (ab|cd) for kernel-shell pairs P=(a,b), Q=(c,d).

    ``out[ca*nb+cb, cc*nd+cd]``. Primitive quartets whose weighted bound is
    below ``cut`` are skipped; the Schwarz diagonal passes 0 so that its
    bounds stay exact.
    """
    na = ncomp[pA[P]]
    nb = ncomp[pB[P]]
    nc = ncomp[pA[Q]]
    nd = ncomp[pB[Q]]
    nbra = na * nb
    nket = nc * nd
    Lb = _lmax(na) + _lmax(nb)
    Lk = _lmax(nc) + _lmax(nd)
    hb = _N_HERM[Lb]
    hk = _N_HERM[Lk]
    L = Lb + Lk
    for x in range(nbra):
        for y in range(nket):
            out[x, y] = 0.0
    for kp in range(nprim[P]):
        p = pp[P, kp]
        for kq in range(nprim[Q]):
            q = pp[Q, kq]
            pref = 2.0 * math.pi ** 2.5 / (p * q * math.sqrt(p + q))
            if pref * pw[P, kp] * pw[Q, kq] < cut:
                continue
            alpha = p * q / (p + q)
            _hermite_r(L, alpha, pP[P, kp, 0] - pP[Q, kq, 0], pP[P, kp, 1] - pP[Q, kq, 1],
                       pP[P, kp, 2] - pP[Q, kq, 2], R, Rn, F)
            for h1 in range(hb):
                t1 = _HERM[h1, 0]
                u1 = _HERM[h1, 1]
                v1 = _HERM[h1, 2]
                for h2 in range(hk):
                    t2 = _HERM[h2, 0]
                    u2 = _HERM[h2, 1]
                    v2 = _HERM[h2, 2]
                    sgn = -pref if (t2 + u2 + v2) % 2 == 1 else pref
                    M[h1, h2] = sgn * R[t1 + t2, u1 + u2, v1 + v2]
            for h1 in range(hb):
                for y in range(nket):
                    acc = 0.0
                    for h2 in range(hk):
                        acc += M[h1, h2] * pH[Q, kq, y, h2]
                    G[h1, y] = acc
            for x in range(nbra):
                for y in range(nket):
                    acc = 0.0
                    for h1 in range(hb):
                        acc += pH[P, kp, x, h1] * G[h1, y]
                    out[x, y] += acc


@numba.njit(cache=True, nogil=True)
def _workspace():
    return (np.zeros((16, 16)), np.zeros((5, 5, 5)), np.zeros((5, 5, 5, 5)),
            np.zeros(5), np.zeros((10, 10)), np.zeros((10, 16)))


@numba.njit(cache=True, nogil=True)
def _schwarz(ncomp, pA, pB, nprim, pp, pP, pw, pH):
    npair = pA.shape[0]
    Qs = np.empty(npair)
    out, R, Rn, F, M, G = _workspace()
    for P in range(npair):
        _quartet(P, P, ncomp, pA, pB, nprim, pp, pP, pw, pH, out, R, Rn, F, M, G, 0.0)
        m = 0.0
        for x in range(ncomp[pA[P]] * ncomp[pB[P]]):
            if abs(out[x, x]) > m:
                m = abs(out[x, x])
        Qs[P] = math.sqrt(m)
    return Qs


@numba.njit(cache=True, nogil=True)
def _pack(i, j, k, l):
    if i < j:
        i, j = j, i
    if k < l:
        k, l = l, k
    ij = i * (i + 1) // 2 + j
    kl = k * (k + 1) // 2 + l
    if ij < kl:
        ij, kl = kl, ij
    return ij * (ij + 1) // 2 + kl


@numba.njit(cache=True, nogil=True)
def _eri_packed(n, ncomp, offsets, pA, pB, nprim, pp, pP, pw, pH, Qs, cutoff):
    npair_f = n * (n + 1) // 2
    eri = np.zeros(npair_f * (npair_f + 1) // 2)
    npair = pA.shape[0]
    out, R, Rn, F, M, G = _workspace()
    for P in range(npair):
        A = pA[P]
        B = pB[P]
        na = ncomp[A]
        nb = ncomp[B]
        for Q in range(P + 1):
            if Qs[P] * Qs[Q] < cutoff:
                continue
            C = pA[Q]
            D = pB[Q]
            nc = ncomp[C]
            nd = ncomp[D]
            _quartet(P, Q, ncomp, pA, pB, nprim, pp, pP, pw, pH, out, R, Rn, F, M, G,
                     QUARTET_CUTOFF)
            for ca in range(na):
                for cb in range(nb):
                    x = ca * nb + cb
                    for cc in range(nc):
                        for cd in range(nd):
                            eri[_pack(offsets[A] + ca, offsets[B] + cb,
                                      offsets[C] + cc, offsets[D] + cd)] = out[x, cc * nd + cd]
    return eri


@numba.njit(cache=True, nogil=True)
def _scatter_jk(i, j, k, l, v, D, J, K):
    # accumulate one unique quartet into J and K for every density
    if i == j:
        v *= 0.5
    if k == l:
        v *= 0.5
    if (i == k and j == l) or (i == l and j == k):
        v *= 0.5
    for d in range(D.shape[0]):
        dkl = D[d, k, l] + D[d, l, k]
        dij = D[d, i, j] + D[d, j, i]
        J[d, i, j] += dkl * v
        J[d, j, i] += dkl * v
        J[d, k, l] += dij * v
        J[d, l, k] += dij * v
        K[d, i, k] += D[d, j, l] * v
        K[d, i, l] += D[d, j, k] * v
        K[d, j, k] += D[d, i, l] * v
        K[d, j, l] += D[d, i, k] * v
        K[d, k, i] += D[d, l, j] * v
        K[d, l, i] += D[d, k, j] * v
        K[d, k, j] += D[d, l, i] * v
        K[d, l, j] += D[d, k, i] * v


@numba.njit(cache=True, nogil=True)
def _jk_packed(eri, D):
    nd, n, _ = D.shape
    J = np.zeros((nd, n, n))
    K = np.zeros((nd, n, n))
    idx = 0
    for i in range(n):
        for j in range(i + 1):
            for k in range(i + 1):
                lmax = j if k == i else k
                for l in range(lmax + 1):
                    v = eri[idx]
                    idx += 1
                    if v != 0.0:
                        _scatter_jk(i, j, k, l, v, D, J, K)
    return J, K


@numba.njit(cache=True, nogil=True)
def _jk_direct(ncomp, offsets, pA, pB, nprim, pp, pP, pw, pH, Qs, cutoff, D):
    nd, n, _ = D.shape
    J = np.zeros((nd, n, n))
    K = np.zeros((nd, n, n))
    npair = pA.shape[0]
    out, R, Rn, F, M, G = _workspace()
    for P in range(npair):
        A = pA[P]
        B = pB[P]
        na = ncomp[A]
        nb = ncomp[B]
        for Q in range(P + 1):
            if Qs[P] * Qs[Q] < cutoff:
                continue
            C = pA[Q]
            Dd = pB[Q]
            nc = ncomp[C]
            ndd = ncomp[Dd]
            _quartet(P, Q, ncomp, pA, pB, nprim, pp, pP, pw, pH, out, R, Rn, F, M, G,
                     QUARTET_CUTOFF)
            # visit each unique quartet once: drop mirrored components inside
            # diagonal shell pairs and the lower triangle of diagonal quartets
            for ca in range(na):
                for cb in range(nb):
                    if A == B and cb > ca:
                        continue
                    x = ca * nb + cb
                    i = offsets[A] + ca
                    j = offsets[B] + cb
                    for cc in range(nc):
                        for cd in range(ndd):
                            if C == Dd and cd > cc:
                                continue
                            y = cc * ndd + cd
                            if P == Q and y > x:
                                continue
                            v = out[x, y]
                            if v != 0.0:
                                _scatter_jk(i, j, offsets[C] + cc, offsets[Dd] + cd, v, D, J, K)
    return J, K


@numba.njit(cache=True, nogil=True)
def _unpack(eri, n):
    full = np.empty((n, n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    full[i, j, k, l] = eri[_pack(i, j, k, l)]
    return full


def nuclear_repulsion(m: Molecule) -> float:
    """Sum over atom pairs of Z_A Z_B / R_AB, distances in Bohr."""
    z = m.numbers.astype(float)
    xyz = m.coords * ANGSTROM_TO_BOHR
    total = 0.0
    for a in range(len(z)):
        for b in range(a):
            r = float(np.linalg.norm(xyz[a] - xyz[b]))
            if r == 0.0:
                raise MoleculeError(f"atoms {a} and {b} coincide")
            total += z[a] * z[b] / r
    return total


@dataclass
class IntegralSet:
    """Overlap, kinetic, nuclear-attraction matrices and two-electron access.

    ``eri`` is the packed unique-quartet list (index via ``_pack``) or None
    in integral-direct mode, where ``jk`` recomputes quartets each call.
    """

    S: np.ndarray
    T: np.ndarray
    V: np.ndarray
    eri: np.ndarray | None
    basis: BasisSet
    _pairs: tuple
    _schwarz: np.ndarray

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def core_hamiltonian(self) -> np.ndarray:
        return self.T + self.V

    @property
    def direct(self) -> bool:
        return self.eri is None

    def jk(self, densities: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Coulomb and exchange matrices for a stack of densities (nd, n, n)."""
        D = np.ascontiguousarray(densities, dtype=np.float64)
        if D.ndim == 2:
            D = D[None]
        if self.eri is not None:
            return _jk_packed(self.eri, D)
        _, ncomp, _, _, offsets = self.basis.packed()
        return _jk_direct(ncomp, offsets, *self._pairs, self._schwarz, SCHWARZ_CUTOFF, D)

    def eri_full(self) -> np.ndarray:
        """Dense (ij|kl) tensor; small bases only."""
        if self.eri is None:
            raise ValueError("integral-direct mode keeps no ERI list")
        return _unpack(self.eri, self.n)

    def eri_element(self, i: int, j: int, k: int, l: int) -> float:
        if self.eri is None:
            raise ValueError("integral-direct mode keeps no ERI list")
        return float(self.eri[_pack(i, j, k, l)])


def compute_integrals(m: Molecule, b: BasisSet, direct: bool | None = None) -> IntegralSet:
    centers, ncomp, exps, coefs, offsets = b.packed()
    charges = m.numbers.astype(np.float64)
    nuclei = np.ascontiguousarray(m.coords * ANGSTROM_TO_BOHR)
    n = b.n
    S, T, V = _one_electron(centers, ncomp, exps, coefs, offsets, charges, nuclei, n)
    pairs = _shell_pairs(centers, ncomp, exps, coefs)
    Qs = _schwarz(ncomp, *pairs)
    if direct is None:
        direct = n > PACKED_ERI_LIMIT
    eri = None if direct else _eri_packed(n, ncomp, offsets, *pairs, Qs, SCHWARZ_CUTOFF)
    return IntegralSet(S, T, V, eri, b, pairs, Qs)
