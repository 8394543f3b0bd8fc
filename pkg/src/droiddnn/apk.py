"""Read-only APK (PKZIP) container access.

The central directory is treated as authoritative; local headers are only
consulted to locate the start of each entry's data, since aligned APKs often
carry padding in the local extra field.
"""

from __future__ import annotations

import logging
import posixpath
import struct
import zlib
from dataclasses import dataclass, field

from .errors import CorruptEntry, EntryNotFound, MalformedContainer, UnsupportedCompression

log = logging.getLogger(__name__)

EOCD_SIG = 0x06054B50
CDIR_SIG = 0x02014B50
LOCAL_SIG = 0x04034B50
LOCAL_MAGIC = b"PK\x03\x04"

STORED = 0
DEFLATED = 8
_METHOD_NAMES = {STORED: "stored", DEFLATED: "deflate"}

_EOCD = struct.Struct("<IHHHHIIH")
_CDIR = struct.Struct("<IHHHHHHIIIHHHHHII")
_LOCAL = struct.Struct("<IHHHHHIIIHH")

_MAX_COMMENT = 0xFFFF


@dataclass(frozen=True)
class EntryMeta:
    name: str
    compressed_size: int
    uncompressed_size: int
    method: int
    crc32: int
    local_header_offset: int
    flags: int = 0

    @property
    def method_name(self) -> str:
        return _METHOD_NAMES.get(self.method, f"method-{self.method}")

    @property
    def is_dir(self) -> bool:
        return self.name.endswith("/")


@dataclass(frozen=True)
class ApkArchive:
    entries: tuple[EntryMeta, ...]
    data: bytes = field(repr=False)
    eocd_offset: int
    warnings: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {e.name: e for e in self.entries})

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def get(self, name: str) -> EntryMeta | None:
        return self._index.get(normalize_name(name))  # type: ignore[attr-defined]

    def __contains__(self, name: str) -> bool:
        return self.get(name) is not None

    def read(self, name: str) -> bytes:
        return read_entry(self, name)


def normalize_name(name: str) -> str:
    """Canonical form used for lookups: forward slashes, no leading ``/`` or ``./``."""
    name = name.replace("\\", "/")
    trailing = name.endswith("/")
    parts = [p for p in name.split("/") if p not in ("", ".")]
    out = "/".join(parts)
    if trailing and out:
        out += "/"
    return out


def _find_eocd(data: bytes) -> int:
    lo = max(0, len(data) - _EOCD.size - _MAX_COMMENT)
    pos = len(data) - _EOCD.size
    while pos >= lo:
        pos = data.rfind(b"PK\x05\x06", lo, pos + 4)
        if pos < 0:
            break
        comment_len = struct.unpack_from("<H", data, pos + 20)[0]
        if pos + _EOCD.size + comment_len <= len(data):
            return pos
        pos -= 1
    raise MalformedContainer("no end-of-central-directory record")


def open_apk(data: bytes) -> ApkArchive:
    """Index the central directory of *data* without decompressing anything."""
    if not data:
        raise MalformedContainer("empty input")
    data = bytes(data)
    if len(data) < _EOCD.size:
        raise MalformedContainer("input shorter than an end-of-central-directory record")
    eocd = _find_eocd(data)
    (_, disk, cd_disk, n_disk, n_total, cd_size, cd_offset, _) = _EOCD.unpack_from(data, eocd)
    if disk != 0 or cd_disk != 0 or n_disk != n_total:
        raise MalformedContainer("multi-disk archives are not supported")
    if n_total == 0xFFFF or cd_offset == 0xFFFFFFFF or cd_size == 0xFFFFFFFF:
        raise MalformedContainer("ZIP64 archives are not supported")
    if cd_offset + cd_size > eocd:
        raise MalformedContainer(
            f"central directory [{cd_offset}, {cd_offset + cd_size}) overruns EOCD at {eocd}"
        )

    warnings: list[str] = []
    by_name: dict[str, EntryMeta] = {}
    pos = cd_offset
    end = cd_offset + cd_size
    for i in range(n_total):
        if pos + _CDIR.size > end:
            raise MalformedContainer(f"central directory truncated at record {i}")
        rec = _CDIR.unpack_from(data, pos)
        (sig, _made, _need, flags, method, _time, _date, crc, csize, usize,
         name_len, extra_len, comment_len, _disk, _iattr, _eattr, local_off) = rec
        if sig != CDIR_SIG:
            raise MalformedContainer(f"bad central directory signature at offset {pos}")
        rec_end = pos + _CDIR.size + name_len + extra_len + comment_len
        if rec_end > end:
            raise MalformedContainer(f"central directory record {i} overruns directory")
        raw_name = data[pos + _CDIR.size: pos + _CDIR.size + name_len]
        name = raw_name.decode("utf-8" if flags & 0x800 else "cp437", errors="replace")
        if local_off + _LOCAL.size > eocd:
            raise MalformedContainer(f"local header offset {local_off} of {name!r} out of bounds")
        if method == STORED and csize != usize:
            raise MalformedContainer(f"stored entry {name!r} has mismatched sizes")
        norm = normalize_name(name)
        if norm in by_name:
            warnings.append(f"duplicate entry {norm!r}: last occurrence wins")
            del by_name[norm]
        by_name[norm] = EntryMeta(norm, csize, usize, method, crc, local_off, flags)
        pos = rec_end

    for w in warnings:
        log.warning(w)
    return ApkArchive(tuple(by_name.values()), data, eocd, tuple(warnings))


def _entry_data(archive: ApkArchive, meta: EntryMeta) -> bytes:
    data = archive.data
    off = meta.local_header_offset
    if off + _LOCAL.size > len(data):
        raise CorruptEntry(f"{meta.name}: local header out of bounds")
    (sig, _need, _flags, _method, _t, _d, _crc, _cs, _us, name_len, extra_len) = _LOCAL.unpack_from(data, off)
    if sig != LOCAL_SIG:
        raise CorruptEntry(f"{meta.name}: bad local header signature")
    start = off + _LOCAL.size + name_len + extra_len
    stop = start + meta.compressed_size
    if stop > archive.eocd_offset:
        raise CorruptEntry(f"{meta.name}: data [{start}, {stop}) out of bounds")
    return data[start:stop]


def read_entry(archive: ApkArchive, name: str) -> bytes:
    """Return the decompressed, CRC-verified content of entry *name*."""
    meta = archive.get(name)
    if meta is None:
        raise EntryNotFound(f"no entry named {name!r}")
    if meta.flags & 0x1:
        raise UnsupportedCompression(f"{meta.name}: encrypted entries are not supported")
    if meta.method not in _METHOD_NAMES:
        raise UnsupportedCompression(f"{meta.name}: compression method {meta.method}")
    raw = _entry_data(archive, meta)
    if meta.method == STORED:
        out = raw
    else:
        inflater = zlib.decompressobj(-15)
        try:
            # cap output so a lying size field cannot balloon memory
            out = inflater.decompress(raw, meta.uncompressed_size + 1)
        except zlib.error as exc:
            raise CorruptEntry(f"{meta.name}: inflate failed: {exc}") from None
        if not inflater.eof:
            raise CorruptEntry(f"{meta.name}: deflate stream incomplete or oversized")
    if len(out) != meta.uncompressed_size:
        raise CorruptEntry(f"{meta.name}: size {len(out)} != recorded {meta.uncompressed_size}")
    if zlib.crc32(out) != meta.crc32:
        raise CorruptEntry(f"{meta.name}: CRC32 mismatch")
    return out


@dataclass(frozen=True)
class AssetScan:
    by_extension: tuple[str, ...]
    by_magic: tuple[str, ...]
    warnings: tuple[str, ...]

    @property
    def found(self) -> bool:
        return bool(self.by_extension or self.by_magic)


_NESTED_ARCHIVE_EXT = (".jar", ".zip", ".dex", ".odex")


def scan_assets(archive: ApkArchive) -> AssetScan:
    """Look for embedded APK payloads under ``assets/``, by name and by magic bytes."""
    by_ext: list[str] = []
    by_magic: list[str] = []
    warnings: list[str] = []
    for meta in archive.entries:
        if not meta.name.startswith("assets/") or meta.is_dir:
            continue
        lower = meta.name.lower()
        if lower.endswith(".apk"):
            by_ext.append(meta.name)
        try:
            head = read_entry(archive, meta.name)[:4]
        except (CorruptEntry, UnsupportedCompression) as exc:
            warnings.append(f"unreadable asset skipped: {exc}")
            continue
        if head == LOCAL_MAGIC:
            by_magic.append(meta.name)
        elif lower.endswith(_NESTED_ARCHIVE_EXT):
            warnings.append(f"non-APK nested code/archive not counted: {meta.name}")
    for w in warnings:
        log.warning(w)
    return AssetScan(tuple(by_ext), tuple(by_magic), tuple(warnings))


def assets_contain_apk(archive: ApkArchive) -> bool:
    return scan_assets(archive).found
