"""DEX id-table reader and API-category detection.

Only the string, type and method id tables are decoded. Every external API an
app invokes has to appear in ``method_ids``, which is enough for presence
features; instruction streams are never touched.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

from .apk import ApkArchive, read_entry
from .errors import MalformedDex, NoDexFound

HEADER_SIZE = 0x70
ENDIAN_CONSTANT = 0x12345678
_MAGIC = re.compile(rb"dex\n\d{3}\x00")

# magic, checksum, signature, file_size, header_size, endian, link x2, map_off, then 7 (size, off) pairs
_HEADER = struct.Struct("<8sI20sIIIIII" + "II" * 7)


@dataclass(frozen=True)
class DexSummary:
    strings: tuple[str, ...] = ()
    type_names: tuple[str, ...] = ()
    method_refs: tuple[tuple[str, str], ...] = ()
    dex_count: int = 0

    def merge(self, other: DexSummary) -> DexSummary:
        return DexSummary(
            self.strings + other.strings,
            self.type_names + other.type_names,
            self.method_refs + other.method_refs,
            self.dex_count + other.dex_count,
        )


@dataclass(frozen=True)
class ApiCategoryRule:
    category_id: str
    class_prefixes: tuple[str, ...]
    method_names: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if not self.class_prefixes:
            raise ValueError(f"rule {self.category_id!r} needs at least one class prefix")

    def matches(self, class_type: str, method: str) -> bool:
        if self.method_names is not None and method not in self.method_names:
            return False
        return class_type.startswith(self.class_prefixes)


API_CATEGORIES = ("telephony", "net", "dexloader", "reflection", "sysservice", "runtime_exec", "crypto")

DEFAULT_RULES: tuple[ApiCategoryRule, ...] = (
    ApiCategoryRule("telephony", ("Landroid/telephony/",)),
    ApiCategoryRule("net", ("Ljava/net/", "Lorg/apache/http/", "Landroid/net/")),
    ApiCategoryRule("dexloader", ("Ldalvik/system/DexClassLoader;", "Ldalvik/system/PathClassLoader;")),
    ApiCategoryRule("reflection", ("Ljava/lang/reflect/",)),
    # any receiver: app classes inherit getSystemService from Context
    ApiCategoryRule("sysservice", ("L",), frozenset({"getSystemService"})),
    ApiCategoryRule(
        "runtime_exec",
        ("Ljava/lang/Runtime;", "Ljava/lang/System;"),
        frozenset({"exec", "loadLibrary", "exit"}),
    ),
    ApiCategoryRule("crypto", ("Ljavax/crypto/", "Ljava/security/")),
)


def _uleb128(buf: bytes, off: int, limit: int) -> tuple[int, int]:
    result = shift = 0
    for i in range(5):
        if off + i >= limit:
            raise MalformedDex(f"ULEB128 at {off} runs past end of file")
        b = buf[off + i]
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, off + i + 1
        shift += 7
    raise MalformedDex(f"ULEB128 at {off} longer than 5 bytes")


def decode_mutf8(raw: bytes) -> str:
    """Decode Modified UTF-8 (CESU-style surrogates, ``C0 80`` for NUL)."""
    try:
        s = raw.replace(b"\xc0\x80", b"\x00").decode("utf-8", errors="surrogatepass")
        return s.encode("utf-16-le", errors="surrogatepass").decode("utf-16-le")
    except UnicodeError as exc:
        raise MalformedDex(f"invalid MUTF-8 string data: {exc.reason}") from None


def _table(size: int, off: int, item: int, file_size: int, what: str) -> None:
    if size and (off < HEADER_SIZE or off + size * item > file_size):
        raise MalformedDex(f"{what} table [{off}, {off + size * item}) outside file of {file_size} bytes")


def parse_dex(data: bytes) -> DexSummary:
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise MalformedDex(f"file of {len(data)} bytes is shorter than the DEX header")
    if not _MAGIC.fullmatch(data[:8]):
        raise MalformedDex(f"bad magic {data[:8]!r}")
    h = _HEADER.unpack_from(data, 0)
    file_size, header_size, endian = h[3], h[4], h[5]
    string_ids_size, string_ids_off = h[9], h[10]
    type_ids_size, type_ids_off = h[11], h[12]
    method_ids_size, method_ids_off = h[17], h[18]
    if endian != ENDIAN_CONSTANT:
        raise MalformedDex(f"unsupported endian tag 0x{endian:08x}")
    if header_size != HEADER_SIZE:
        raise MalformedDex(f"header_size {header_size} != {HEADER_SIZE}")
    if file_size != len(data):
        raise MalformedDex(f"header file_size {file_size} != actual size {len(data)}")

    _table(string_ids_size, string_ids_off, 4, file_size, "string_ids")
    _table(type_ids_size, type_ids_off, 4, file_size, "type_ids")
    _table(method_ids_size, method_ids_off, 8, file_size, "method_ids")

    string_offs = struct.unpack_from(f"<{string_ids_size}I", data, string_ids_off)
    strings = []
    for i, off in enumerate(string_offs):
        if off >= file_size:
            raise MalformedDex(f"string_data {i} offset {off} outside file")
        _utf16_len, start = _uleb128(data, off, file_size)
        end = data.find(b"\x00", start, file_size)
        if end < 0:
            raise MalformedDex(f"string_data {i} is not NUL-terminated")
        strings.append(decode_mutf8(data[start:end]))

    type_names = []
    for i, sidx in enumerate(struct.unpack_from(f"<{type_ids_size}I", data, type_ids_off)):
        if sidx >= string_ids_size:
            raise MalformedDex(f"type_id {i} references string {sidx} of {string_ids_size}")
        type_names.append(strings[sidx])

    method_refs = []
    for i in range(method_ids_size):
        class_idx, _proto_idx, name_idx = struct.unpack_from("<HHI", data, method_ids_off + 8 * i)
        if class_idx >= type_ids_size:
            raise MalformedDex(f"method_id {i} class index {class_idx} out of range")
        if name_idx >= string_ids_size:
            raise MalformedDex(f"method_id {i} name index {name_idx} out of range")
        method_refs.append((type_names[class_idx], strings[name_idx]))

    return DexSummary(tuple(strings), tuple(type_names), tuple(method_refs), 1)


def detect_api_categories(summary: DexSummary, rules: Sequence[ApiCategoryRule] = DEFAULT_RULES) -> frozenset[str]:
    ids = [r.category_id for r in rules]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate category ids in rules: {ids}")
    found: set[str] = set()
    pending = list(rules)
    for class_type, method in set(summary.method_refs):
        for rule in pending:
            if rule.matches(class_type, method):
                found.add(rule.category_id)
        pending = [r for r in pending if r.category_id not in found]
        if not pending:
            break
    return frozenset(found)


_DEX_NAME = re.compile(r"classes(\d*)\.dex")


def dex_entry_names(names: Iterable[str]) -> list[str]:
    """Root-level ``classes*.dex`` names in multidex load order."""
    found = []
    for name in names:
        m = _DEX_NAME.fullmatch(name)
        if m and m.group(1) not in ("0", "1") and not m.group(1).startswith("0"):
            found.append((int(m.group(1) or 1), name))
    return [name for _, name in sorted(found)]


def scan_all_dex(archive: ApkArchive) -> DexSummary:
    names = dex_entry_names(archive.names())
    if not names:
        raise NoDexFound("archive contains no classes*.dex entries")
    summary = DexSummary()
    for name in names:
        try:
            summary = summary.merge(parse_dex(read_entry(archive, name)))
        except MalformedDex as exc:
            raise MalformedDex(str(exc), entry=name) from None
    return summary
