"""Persistent, relocatable store of tuning results.

A store is a plain directory: one JSON file per entry named
``<fingerprint8>-<shape8>.result.json`` plus an ``index.json``. Entries
are human-diffable and the whole directory can be rsynced or committed
somewhere outside the deployment. Writes go through a temp file and an
atomic rename, so a crashed writer leaves either the old entry or none,
never a torn file.

Concurrency: many readers, one writer. Writers hold an advisory lock
file; a lock older than 60 s is treated as abandoned and taken over.
Readers never lock.

Overwrites are monotone: an existing entry is only replaced when the new
result is at least as fast, unless the caller forces it. A noisy re-tune
therefore cannot clobber a good cached result.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .configspace import ShapeKey, canonical_json
from .errors import CacheError, CacheLockTimeout, CacheVersionError
from .executor import EnvFingerprint
from .search import TuningResult

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
STALE_LOCK_S = 60.0
LOCK_ACQUIRE_TIMEOUT_S = 10.0

DEFAULT_STORE = Path.home() / ".cache" / "ktune"


def default_store_root() -> Path:
    env = os.environ.get("KTUNE_CACHE_DIR")
    return Path(env) if env else DEFAULT_STORE


@dataclass(frozen=True)
class CacheKey:
    fingerprint_digest: str
    shape_digest: str

    @property
    def short(self) -> str:
        return f"{self.fingerprint_digest[:8]}-{self.shape_digest[:8]}"

    def index_key(self) -> str:
        return f"{self.fingerprint_digest}:{self.shape_digest}"


@dataclass(frozen=True)
class CacheEntry:
    key: CacheKey
    result: TuningResult
    created_at: str  # ISO-8601 UTC
    framework_version: str
    format_version: int

    @classmethod
    def create(cls, result: TuningResult) -> "CacheEntry":
        key = CacheKey(result.fingerprint.digest(), result.shape.digest)
        return cls(
            key=key,
            result=result,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            framework_version=__version__,
            format_version=FORMAT_VERSION,
        )

    def to_json_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "created_at": self.created_at,
            "framework_version": self.framework_version,
            "fingerprint": self.result.fingerprint.to_json_dict(),
            "shape": self.result.shape.dims,
            "result": self.result.to_json_dict(),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CacheEntry":
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise CacheVersionError(version, FORMAT_VERSION)
        result = TuningResult.from_json_dict(doc["result"])
        fp = EnvFingerprint.from_json_dict(doc["fingerprint"])
        shape = ShapeKey.from_dims(doc["shape"])
        if fp != result.fingerprint or shape.digest != result.shape.digest:
            raise CacheError("entry header disagrees with the embedded result")
        return cls(
            key=CacheKey(fp.digest(), shape.digest),
            result=result,
            created_at=str(doc.get("created_at", "")),
            framework_version=str(doc.get("framework_version", "")),
            format_version=version,
        )

    def canonical(self) -> str:
        return canonical_json(self.to_json_dict())

    def best_or_inf(self) -> float:
        return self.result.best_median_ms if self.result.best_median_ms is not None else float("inf")


def load_entry(path) -> CacheEntry:
    """Read one entry/result file (also used by `report transfer`)."""
    with open(path, "r", encoding="utf-8") as fh:
        return CacheEntry.from_json_dict(json.load(fh))


class CacheStore:
    """One directory of tuning results keyed by (fingerprint, shape)."""

    def __init__(self, root: Path | str):
        self.root = Path(root)

    # -- internals -----------------------------------------------------------

    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _lock_path(self) -> Path:
        return self.root / ".lock"

    def _read_index(self) -> dict[str, str]:
        try:
            with open(self._index_path(), "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            return {}
        except (json.JSONDecodeError, OSError) as e:
            log.warning("unreadable index %s (%s); falling back to a scan", self._index_path(), e)
            return {}
        entries = doc.get("entries", {})
        return dict(entries) if isinstance(entries, dict) else {}

    def _atomic_write(self, path: Path, text: str):
        fd, tmp = tempfile.mkstemp(dir=str(self.root), prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            try:
                os.unlink(tmp)
            except OSError:
                pass
            raise

    def _write_index(self, index: dict[str, str]):
        self._atomic_write(
            self._index_path(),
            json.dumps({"format_version": FORMAT_VERSION, "entries": index}, indent=1, sort_keys=True),
        )

    def _load_entry_file(self, path: Path) -> CacheEntry | None:
        """None (plus a warning) when the file is corrupt or missing."""
        try:
            return load_entry(path)
        except FileNotFoundError:
            log.warning("cache index points at missing file %s", path)
            return None
        except (CacheError, KeyError, ValueError, TypeError) as e:
            log.warning("corrupt cache entry %s: %s", path, e)
            return None

    def _writer_lock(self):
        return _WriterLock(self._lock_path())

    def _candidate_paths(self, key: CacheKey):
        index = self._read_index()
        named = index.get(key.index_key())
        if named:
            yield self.root / named
        # Fallback scan: covers a crash between entry write and index update
        # and the (unlikely) 8-hex prefix collision.
        if self.root.is_dir():
            for path in sorted(self.root.glob(f"{key.short}*.result.json")):
                if named and path.name == named:
                    continue
                yield path

    def _path_for(self, key: CacheKey, index: dict[str, str]) -> Path:
        base = f"{key.short}.result.json"
        taken = set(index.values())
        if index.get(key.index_key()) == base or base not in taken:
            return self.root / base
        n = 2
        while f"{key.short}-{n}.result.json" in taken:
            n += 1
        return self.root / f"{key.short}-{n}.result.json"

    # -- operations ----------------------------------------------------------

    def lookup(self, fingerprint: EnvFingerprint, shape: ShapeKey) -> CacheEntry | None:
        """Exact-match lookup; corrupt entries count as misses."""
        key = CacheKey(fingerprint.digest(), shape.digest)
        for path in self._candidate_paths(key):
            entry = self._load_entry_file(path)
            if entry is not None and entry.key == key:
                return entry
        return None

    def store(self, entry: CacheEntry, force: bool = False) -> Path | None:
        """Persist `entry`; returns its path, or None when the monotone
        overwrite rule kept the existing (better or identical) entry."""
        self.root.mkdir(parents=True, exist_ok=True)
        with self._writer_lock():
            existing = self.lookup(entry.result.fingerprint, entry.result.shape)
            if existing is not None and not force:
                if existing.canonical() == entry.canonical():
                    return None
                if entry.best_or_inf() > existing.best_or_inf():
                    log.info(
                        "keeping cached %s (%.6g ms <= %.6g ms)",
                        entry.key.short,
                        existing.best_or_inf(),
                        entry.best_or_inf(),
                    )
                    return None
            index = self._read_index()
            path = self._path_for(entry.key, index)
            self._atomic_write(path, json.dumps(entry.to_json_dict(), indent=1))
            index[entry.key.index_key()] = path.name
            self._write_index(index)
            return path

    def invalidate(self, key: CacheKey) -> bool:
        with self._writer_lock():
            index = self._read_index()
            name = index.pop(key.index_key(), None)
            removed = False
            if name:
                try:
                    (self.root / name).unlink()
                    removed = True
                except FileNotFoundError:
                    pass
                self._write_index(index)
            return removed

    def entries(self) -> list[CacheEntry]:
        """All readable entries, index order first, then stray files."""
        if not self.root.is_dir():
            return []
        seen: set[str] = set()
        out: list[CacheEntry] = []
        index = self._read_index()
        for name in sorted(index.values()):
            entry = self._load_entry_file(self.root / name)
            if entry is not None:
                out.append(entry)
                seen.add(name)
        for path in sorted(self.root.glob("*.result.json")):
            if path.name in seen:
                continue
            entry = self._load_entry_file(path)
            if entry is not None:
                out.append(entry)
        return out

    def find(self, prefix: str) -> list[CacheEntry]:
        """Entries whose short key or digests start with `prefix`."""
        out = []
        for entry in self.entries():
            k = entry.key
            if (
                k.short.startswith(prefix)
                or k.fingerprint_digest.startswith(prefix)
                or k.index_key().startswith(prefix)
            ):
                out.append(entry)
        return out

    # -- bundles ---------------------------------------------------------------

    def export_bundle(self, out_path, keys: list[CacheKey] | None = None) -> int:
        """Write selected entries (default: all) into one bundle document."""
        chosen = self.entries()
        if keys is not None:
            wanted = {k.index_key() for k in keys}
            by_key = {e.key.index_key(): e for e in chosen}
            missing = sorted(wanted - set(by_key))
            if missing:
                raise CacheError(f"no entry for key {missing[0]}")
            chosen = [by_key[k] for k in sorted(wanted)]
        doc = {
            "format_version": FORMAT_VERSION,
            "entries": [e.to_json_dict() for e in chosen],
        }
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1)
        return len(chosen)

    def import_bundle(self, bundle_path, force: bool = False) -> int:
        """Merge a bundle; returns how many entries changed the store.
        Re-importing the same bundle is a no-op (count 0)."""
        with open(bundle_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise CacheVersionError(version, FORMAT_VERSION)
        imported = 0
        for raw in doc.get("entries", []):
            entry = CacheEntry.from_json_dict(raw)
            if self.store(entry, force=force) is not None:
                imported += 1
        return imported


class _WriterLock:
    """Advisory lock file with stale takeover. Writers only."""

    def __init__(self, path: Path):
        self.path = path

    def __enter__(self):
        deadline = time.monotonic() + LOCK_ACQUIRE_TIMEOUT_S
        while True:
            try:
                fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(fd, f"{os.getpid()} {time.time()}\n".encode())
                os.close(fd)
                return self
            except FileExistsError:
                try:
                    age = time.time() - self.path.stat().st_mtime
                except FileNotFoundError:
                    continue  # holder just released; retry immediately
                if age > STALE_LOCK_S:
                    log.warning("taking over stale cache lock %s (age %.0f s)", self.path, age)
                    try:
                        self.path.unlink()
                    except FileNotFoundError:
                        pass
                    continue
                if time.monotonic() > deadline:
                    raise CacheLockTimeout(
                        f"could not acquire {self.path} within {LOCK_ACQUIRE_TIMEOUT_S:g} s"
                    ) from None
                time.sleep(0.05)

    def __exit__(self, *exc):
        try:
            self.path.unlink()
        except FileNotFoundError:
            pass
        return False
