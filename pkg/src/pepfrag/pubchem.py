"""Minimal PubChem PUG REST client with an on-disk response cache.

Records are fetched as SDF, 3D conformer first, then the 2D record with
``is_3d`` cleared. Once a record is on disk it is served from there with no
network traffic. ``PEPFRAG_OFFLINE=1`` forbids network access outright.
"""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote

import requests
from filelock import FileLock

log = logging.getLogger(__name__)

BASE_URL = "https://pubchem.ncbi.nlm.nih.gov/rest/pug"
TIMEOUT = 30.0


class PubChemError(RuntimeError):
    def __init__(self, message: str, status: int | None = None,
                 retry_after: float | None = None):
        super().__init__(message)
        self.status = status
        self.retry_after = retry_after


class UnknownIdentifierError(PubChemError):
    pass


class RateLimitedError(PubChemError):
    pass


class OfflineError(PubChemError):
    pass


@dataclass(frozen=True)
class FetchResult:
    identifier: str
    cid: int
    sdf: bytes
    is_3d: bool
    from_cache: bool

    @property
    def warning(self) -> str | None:
        return None if self.is_3d else f"CID {self.cid}: no 3D conformer, using the 2D record"


def offline() -> bool:
    return os.environ.get("PEPFRAG_OFFLINE", "").strip().lower() in ("1", "true", "yes")


def _retry_after(resp) -> float | None:
    value = resp.headers.get("Retry-After") if resp is not None else None
    try:
        return float(value) if value is not None else None
    except ValueError:
        return None


def _normalize(identifier: str | int) -> str:
    text = str(identifier).strip()
    if not text:
        raise UnknownIdentifierError("empty PubChem identifier")
    return text


def _cache_name(identifier: str) -> str:
    if identifier.isdigit():
        return f"cid-{int(identifier)}"
    slug = re.sub(r"[^a-z0-9]+", "-", identifier.lower()).strip("-")
    return f"name-{slug}"


class PubChemClient:
    def __init__(self, cache_dir: str | Path, session: requests.Session | None = None,
                 base_url: str = BASE_URL, allow_network: bool | None = None):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.session = session or requests.Session()
        self.base_url = base_url.rstrip("/")
        self.allow_network = (not offline()) if allow_network is None else allow_network
        self._lock = FileLock(str(self.cache_dir / ".lock"))
        self.requests_made = 0

    # -- transport --------------------------------------------------------

    def _get(self, path: str) -> requests.Response | None:
        """GET ``path``; None for 404. Other failures raise PubChemError subclasses."""
        if not self.allow_network:
            raise OfflineError("network access disabled (PEPFRAG_OFFLINE)")
        url = f"{self.base_url}/{path}"
        self.requests_made += 1
        try:
            resp = self.session.get(url, timeout=TIMEOUT)
        except requests.RequestException as exc:
            raise PubChemError(f"GET {url} failed: {exc}") from exc
        if resp.status_code == 404:
            return None
        if resp.status_code in (429, 503):
            raise RateLimitedError(f"PubChem throttled the request ({resp.status_code})",
                                   resp.status_code, _retry_after(resp))
        if resp.status_code == 400:
            # PUG REST answers 400 for malformed or out-of-range identifiers
            raise UnknownIdentifierError(f"PubChem rejected {path!r}", 400)
        if resp.status_code >= 400:
            raise PubChemError(f"GET {url}: HTTP {resp.status_code}", resp.status_code,
                               _retry_after(resp))
        return resp

    def _resolve_cid(self, identifier: str) -> int:
        if identifier.isdigit():
            cid = int(identifier)
            if cid <= 0:
                raise UnknownIdentifierError(f"invalid CID {identifier}")
            return cid
        resp = self._get(f"compound/name/{quote(identifier, safe='')}/cids/TXT")
        cids = [] if resp is None else [int(t) for t in resp.text.split() if t.isdigit()]
        if not cids:
            raise UnknownIdentifierError(f"no PubChem compound named {identifier!r}", 404)
        return cids[0]

    def _download(self, cid: int) -> tuple[bytes, bool]:
        for record_type in ("3d", "2d"):
            resp = self._get(f"compound/cid/{cid}/record/SDF?record_type={record_type}")
            if resp is not None:
                if record_type == "2d":
                    log.warning("CID %d: no 3D conformer, falling back to the 2D record", cid)
                return resp.content, record_type == "3d"
        raise UnknownIdentifierError(f"CID {cid} not found", 404)

    # -- cache ------------------------------------------------------------

    def _paths(self, identifier: str) -> tuple[Path, Path]:
        stem = _cache_name(identifier)
        return self.cache_dir / f"{stem}.sdf", self.cache_dir / f"{stem}.json"

    def _write(self, path: Path, data: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)

    def fetch(self, identifier: str | int) -> FetchResult:
        ident = _normalize(identifier)
        if ident.isdigit() and int(ident) <= 0:
            raise UnknownIdentifierError(f"invalid CID {ident}")
        sdf_path, meta_path = self._paths(ident)
        if sdf_path.exists() and meta_path.exists():
            try:
                meta = json.loads(meta_path.read_text())
                return FetchResult(ident, int(meta["cid"]), sdf_path.read_bytes(),
                                   bool(meta["is_3d"]), True)
            except (OSError, ValueError, KeyError) as exc:
                log.warning("re-fetching %s: cache entry unreadable (%s)", ident, exc)
        cid = self._resolve_cid(ident)
        sdf, is_3d = self._download(cid)
        with self._lock:
            self._write(sdf_path, sdf)
            self._write(meta_path, json.dumps({"identifier": ident, "cid": cid,
                                               "is_3d": is_3d}).encode())
        return FetchResult(ident, cid, sdf, is_3d, False)


def fetch_pubchem(identifier: str | int, cache_dir: str | Path,
                  session: requests.Session | None = None) -> FetchResult:
    return PubChemClient(cache_dir, session).fetch(identifier)
