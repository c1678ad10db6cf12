"""STO-3G contracted Gaussian basis for H, C, N, O and S."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..molio import ANGSTROM_TO_BOHR, Molecule, symbol

# Basis Set Exchange STO-3G. Per element: list of (l, exponents, coefficients);
# SP shells are split into an s and a p shell sharing exponents.
_SP_1 = ((-0.09996723, 0.39951283, 0.70011547), (0.15591627, 0.60768372, 0.39195739))
_1S = (0.15432897, 0.53532814, 0.44463454)

STO3G: dict[str, list[tuple[int, tuple[float, ...], tuple[float, ...]]]] = {
    "H": [(0, (3.42525091, 0.62391373, 0.16885540), _1S)],
    "C": [
        (0, (71.6168370, 13.0450960, 3.5305122), _1S),
        (0, (2.9412494, 0.6834831, 0.2222899), _SP_1[0]),
        (1, (2.9412494, 0.6834831, 0.2222899), _SP_1[1]),
    ],
    "N": [
        (0, (99.1061690, 18.0523120, 4.8856602), _1S),
        (0, (3.7804559, 0.8784966, 0.2857144), _SP_1[0]),
        (1, (3.7804559, 0.8784966, 0.2857144), _SP_1[1]),
    ],
    "O": [
        (0, (130.7093200, 23.8088610, 6.4436083), _1S),
        (0, (5.0331513, 1.1695961, 0.3803890), _SP_1[0]),
        (1, (5.0331513, 1.1695961, 0.3803890), _SP_1[1]),
    ],
    "S": [
        (0, (533.1257359, 97.10951830, 26.28162542), (0.1543289673, 0.5353281423, 0.4446345422)),
        (0, (33.32975173, 7.745117521, 2.518952599), (-0.09996722919, 0.39951282610, 0.70011546890)),
        (1, (33.32975173, 7.745117521, 2.518952599), (0.1559162750, 0.6076837186, 0.3919573931)),
        (0, (2.0291942740, 0.5661400518, 0.2215833792), (-0.2196203690, 0.2255954336, 0.9003984260)),
        (1, (2.0291942740, 0.5661400518, 0.2215833792), (0.01058760429, 0.59516700530, 0.46200101200)),
    ],
}

# Cartesian components per angular momentum, in basis-function order.
CARTESIAN = {0: ((0, 0, 0),), 1: ((1, 0, 0), (0, 1, 0), (0, 0, 1))}


def table_checksum() -> str:
    """SHA-256 over a canonical JSON dump of the embedded parameter table."""
    blob = json.dumps(STO3G, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


class UnsupportedElementError(ValueError):
    pass


def _primitive_norm(exps: np.ndarray, l: int) -> np.ndarray:
    return (2.0 * exps / np.pi) ** 0.75 * (4.0 * exps) ** (l / 2.0)


def _normalized_coefficients(exps: np.ndarray, coefs: np.ndarray, l: int) -> np.ndarray:
    c = coefs * _primitive_norm(exps, l)
    p = exps[:, None] + exps[None, :]
    # self-overlap of one Cartesian component (x^l e^{-ar^2}), l <= 1
    ovl = (np.pi / p) ** 1.5 * (0.5 / p) ** l
    return c / np.sqrt(c @ ovl @ c)


@dataclass(frozen=True)
class Shell:
    atom: int
    l: int
    center: np.ndarray  # Bohr
    exps: np.ndarray
    coefs: np.ndarray   # primitive norms folded in; contracted function normalised

    @property
    def size(self) -> int:
        return len(CARTESIAN[self.l])


@dataclass(frozen=True)
class BasisSet:
    shells: tuple[Shell, ...]
    labels: tuple[str, ...]

    @property
    def n(self) -> int:
        return sum(s.size for s in self.shells)

    @property
    def offsets(self) -> np.ndarray:
        sizes = [s.size for s in self.shells]
        return np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)

    def packed(self):
        """Flat arrays consumed by the compiled integral kernels.

        An s shell followed by a p shell on the same atom with identical
        exponents is merged into one four-component SP kernel shell
        (s, px, py, pz) so both share their Hermite integrals. ``coefs`` is
        indexed [kernel shell, l, primitive].
        """
        groups: list[list[Shell]] = []
        for s in self.shells:
            prev = groups[-1] if groups else None
            if (prev is not None and len(prev) == 1 and prev[0].l == 0 and s.l == 1
                    and prev[0].atom == s.atom and np.array_equal(prev[0].exps, s.exps)):
                prev.append(s)
            else:
                groups.append([s])
        ns = len(groups)
        centers = np.empty((ns, 3))
        ncomp = np.empty(ns, dtype=np.int64)
        exps = np.empty((ns, 3))
        coefs = np.zeros((ns, 2, 3))
        offsets = np.empty(ns, dtype=np.int64)
        pos = 0
        for k, g in enumerate(groups):
            centers[k] = g[0].center
            exps[k] = g[0].exps
            offsets[k] = pos
            ncomp[k] = sum(s.size for s in g)
            for s in g:
                coefs[k, s.l] = s.coefs
            pos += ncomp[k]
        return centers, ncomp, exps, coefs, offsets


def build_basis(m: Molecule) -> BasisSet:
    shells = []
    labels = []
    xyz = m.coords * ANGSTROM_TO_BOHR
    for a, z in enumerate(m.numbers):
        sym = symbol(int(z))
        if sym not in STO3G:
            raise UnsupportedElementError(f"no STO-3G parameters for element {sym}")
        n_s = n_p = 0
        for l, exps, coefs in STO3G[sym]:
            e = np.array(exps)
            shells.append(Shell(a, l, xyz[a].copy(), e, _normalized_coefficients(e, np.array(coefs), l)))
            if l == 0:
                n_s += 1
                labels.append(f"{a}{sym} {n_s}s")
            else:
                n_p += 1
                labels += [f"{a}{sym} {n_p + 1}p{c}" for c in "xyz"]
    return BasisSet(tuple(shells), tuple(labels))
