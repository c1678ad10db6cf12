"""On-disk energy cache keyed by exact geometry and method.

Keys hash a canonical text form of the input: Bohr coordinates rounded to
1e-6, atomic numbers in atom order, method, basis, charge and multiplicity.
Rigid translations and rotations are deliberately *not* canonicalised away.
The canonical text is stored next to the value and compared on read, so a
hash collision would show up as a miss rather than a wrong energy.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from filelock import FileLock

from .molio import ANGSTROM_TO_BOHR, Molecule

log = logging.getLogger(__name__)

GEOMETRY_DECIMALS = 6


def canonical_form(m: Molecule, method: str, basis: str = "STO-3G") -> str:
    rows = []
    for z, xyz in zip(m.numbers, m.coords * ANGSTROM_TO_BOHR):
        # + 0.0 folds -0.0 into 0.0 so the text is sign-stable
        coords = " ".join(f"{round(float(c), GEOMETRY_DECIMALS) + 0.0:.{GEOMETRY_DECIMALS}f}"
                          for c in xyz)
        rows.append(f"{int(z)} {coords}")
    head = f"{method.upper()}|{basis.upper()}|charge={m.net_charge}|mult={m.multiplicity}"
    return head + "\n" + "\n".join(rows)


def cache_key(m: Molecule, method: str, basis: str = "STO-3G") -> str:
    return hashlib.sha256(canonical_form(m, method, basis).encode()).hexdigest()


def default_method(m: Molecule) -> str:
    from .molio import electron_count

    return "RHF" if electron_count(m) % 2 == 0 and m.multiplicity == 1 else "UHF"


@dataclass(frozen=True)
class CacheRecord:
    key: str
    canonical: str
    energy: float
    converged: bool
    iterations: int = 0
    final_gradient_norm: float = 0.0
    method: str = ""
    label: str = ""
    s_squared: float | None = None
    timestamp: float = 0.0

    @classmethod
    def from_dict(cls, data: dict) -> "CacheRecord":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


class EnergyCache:
    """Directory of one JSON file per key.

    Writes go through a temporary file and ``os.replace`` under a lock, so a
    reader sees either no record or a complete one. Writing the same key
    twice is harmless.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)
        self._lock = FileLock(str(self.path / ".lock"))
        self.hits = 0
        self.misses = 0

    def _file(self, key: str) -> Path:
        return self.path / f"{key}.json"

    def get(self, key: str, canonical: str | None = None) -> CacheRecord | None:
        f = self._file(key)
        try:
            record = CacheRecord.from_dict(json.loads(f.read_text()))
        except FileNotFoundError:
            self.misses += 1
            return None
        except (OSError, ValueError, TypeError, KeyError) as exc:
            log.warning("ignoring corrupt cache record %s: %s", f.name, exc)
            self.misses += 1
            return None
        if record.key != key or (canonical is not None and record.canonical != canonical):
            log.warning("cache record %s does not match its key; treating as a miss", f.name)
            self.misses += 1
            return None
        self.hits += 1
        return record

    def put(self, record: CacheRecord) -> CacheRecord:
        if not record.timestamp:
            record = CacheRecord(**{**asdict(record), "timestamp": time.time()})
        blob = json.dumps(asdict(record), indent=1, sort_keys=True)
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=self.path, suffix=".tmp")
            try:
                with os.fdopen(fd, "w") as fh:
                    fh.write(blob)
                os.replace(tmp, self._file(record.key))
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
        return record

    def lookup(self, m: Molecule, method: str, basis: str = "STO-3G") -> CacheRecord | None:
        canon = canonical_form(m, method, basis)
        return self.get(hashlib.sha256(canon.encode()).hexdigest(), canon)

    def __len__(self) -> int:
        return sum(1 for _ in self.path.glob("*.json"))
