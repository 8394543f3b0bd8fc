"""Decoder for Android binary XML (AXML), limited to what the manifest features need."""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass, field

from .errors import MalformedAxml

RES_XML_TYPE = 0x0003
RES_STRING_POOL_TYPE = 0x0001
RES_XML_RESOURCE_MAP_TYPE = 0x0180
RES_XML_START_NAMESPACE = 0x0100
RES_XML_END_NAMESPACE = 0x0101
RES_XML_START_ELEMENT = 0x0102
RES_XML_END_ELEMENT = 0x0103

UTF8_FLAG = 1 << 8
NO_INDEX = 0xFFFFFFFF

ANDROID_NS = "http://schemas.android.com/apk/res/android"
ATTR_NAME_RES_ID = 0x01010003  # android:name

# Res_value data types
TYPE_NULL = 0x00
TYPE_REFERENCE = 0x01
TYPE_STRING = 0x03
TYPE_INT_DEC = 0x10
TYPE_INT_HEX = 0x11
TYPE_INT_BOOLEAN = 0x12

COMPONENT_TAGS = ("activity", "service", "receiver", "provider")
PERMISSION_TAGS = ("uses-permission", "uses-permission-sdk-23", "uses-permission-sdk-m")

_HDR = struct.Struct("<HHI")


@dataclass(frozen=True)
class ManifestInfo:
    package_name: str
    permissions: frozenset[str]
    intent_actions: frozenset[str]
    component_counts: dict[str, int] = field(default_factory=dict)


def _u16(buf: bytes, off: int) -> int:
    if off < 0 or off + 2 > len(buf):
        raise MalformedAxml(f"read of u16 at {off} past end of data")
    return buf[off] | (buf[off + 1] << 8)


def _u32(buf: bytes, off: int) -> int:
    if off < 0 or off + 4 > len(buf):
        raise MalformedAxml(f"read of u32 at {off} past end of data")
    return int.from_bytes(buf[off:off + 4], "little")


def _string_pool(buf: bytes, start: int, header_size: int, size: int) -> list[str]:
    if header_size < 28:
        raise MalformedAxml("string pool header too small")
    count = _u32(buf, start + 8)
    flags = _u32(buf, start + 16)
    strings_start = _u32(buf, start + 20)
    end = start + size
    offsets_at = start + header_size
    if offsets_at + 4 * count > end:
        raise MalformedAxml(f"string pool offset table ({count} entries) overruns chunk")
    if count and strings_start >= size:
        raise MalformedAxml("string data start outside string pool chunk")
    base = start + strings_start
    utf8 = bool(flags & UTF8_FLAG)
    out: list[str] = []
    for i in range(count):
        p = base + _u32(buf, offsets_at + 4 * i)
        if p >= end:
            raise MalformedAxml(f"string {i} offset outside string pool")
        if utf8:
            # utf-16 length (skipped), then utf-8 byte length; each 1 or 2 bytes
            for _ in range(2):
                if p >= end:
                    raise MalformedAxml(f"string {i} header truncated")
                n = buf[p]
                if n & 0x80:
                    if p + 1 >= end:
                        raise MalformedAxml(f"string {i} header truncated")
                    n = ((n & 0x7F) << 8) | buf[p + 1]
                    p += 2
                else:
                    p += 1
            if p + n > end:
                raise MalformedAxml(f"string {i} data overruns string pool")
            out.append(buf[p:p + n].decode("utf-8", errors="replace"))
        else:
            n = _u16(buf, p)
            p += 2
            if n & 0x8000:
                n = ((n & 0x7FFF) << 16) | _u16(buf, p)
                p += 2
            if p + 2 * n > end:
                raise MalformedAxml(f"string {i} data overruns string pool")
            out.append(buf[p:p + 2 * n].decode("utf-16-le", errors="surrogatepass"))
    return out


class _Decoder:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.strings: list[str] = []
        self.resource_ids: list[int] = []

    def string(self, idx: int) -> str:
        if idx >= len(self.strings):
            raise MalformedAxml(f"string index {idx} out of range ({len(self.strings)} strings)")
        return self.strings[idx]

    def optional_string(self, idx: int) -> str | None:
        return None if idx == NO_INDEX else self.string(idx)

    def attr_local_name(self, ns_idx: int, name_idx: int) -> str | None:
        # obfuscated manifests blank the name string; the resource id still identifies it
        if name_idx < len(self.resource_ids) and self.resource_ids[name_idx] == ATTR_NAME_RES_ID:
            return "android:name"
        name = self.string(name_idx)
        ns = self.optional_string(ns_idx)
        if ns == ANDROID_NS:
            return f"android:{name}"
        return name

    def attr_value(self, raw_idx: int, dtype: int, data: int) -> str:
        if raw_idx != NO_INDEX:
            return self.string(raw_idx)
        if dtype == TYPE_STRING:
            return self.string(data)
        if dtype == TYPE_REFERENCE:
            return f"@ref/0x{data:08x}"
        if dtype == TYPE_INT_BOOLEAN:
            return "true" if data else "false"
        if dtype == TYPE_INT_HEX:
            return f"0x{data:08x}"
        if dtype == TYPE_NULL:
            return ""
        if dtype == TYPE_INT_DEC:
            return str(data - (1 << 32) if data & 0x80000000 else data)
        return f"@type{dtype:#x}/0x{data:08x}"


def iter_elements(buf: bytes):
    """Yield ``(event, tag, attrs, parent_path)`` for start/end element events.

    *attrs* maps attribute names (``android:`` prefixed when namespaced) to
    rendered values. The element stack is validated as it goes.
    """
    buf = bytes(buf)
    if len(buf) < 8:
        raise MalformedAxml("input shorter than AXML file header")
    ftype, fhsize, fsize = _HDR.unpack_from(buf, 0)
    if ftype != RES_XML_TYPE:
        raise MalformedAxml(f"bad AXML magic 0x{ftype:04x}")
    if fhsize < 8 or fsize > len(buf) or fsize < fhsize:
        raise MalformedAxml(f"bad AXML file header (header {fhsize}, size {fsize}, have {len(buf)})")

    dec = _Decoder(buf)
    stack: list[str] = []
    pos = fhsize
    while pos < fsize:
        if pos + 8 > fsize:
            raise MalformedAxml(f"truncated chunk header at {pos}")
        ctype, hsize, csize = _HDR.unpack_from(buf, pos)
        if hsize < 8 or csize < hsize or pos + csize > fsize:
            raise MalformedAxml(f"bad chunk sizes at {pos} (type 0x{ctype:04x}, header {hsize}, size {csize})")
        if ctype == RES_STRING_POOL_TYPE:
            dec.strings = _string_pool(buf, pos, hsize, csize)
        elif ctype == RES_XML_RESOURCE_MAP_TYPE:
            n = (csize - hsize) // 4
            dec.resource_ids = [_u32(buf, pos + hsize + 4 * i) for i in range(n)]
        elif ctype == RES_XML_START_ELEMENT:
            ext = pos + hsize
            if ext + 20 > pos + csize:
                raise MalformedAxml(f"start element at {pos} too short")
            name = dec.string(_u32(buf, ext + 4))
            attr_start = _u16(buf, ext + 8)
            attr_size = _u16(buf, ext + 10)
            attr_count = _u16(buf, ext + 12)
            if attr_count and attr_size < 20:
                raise MalformedAxml(f"attribute record size {attr_size} < 20")
            if ext + attr_start + attr_count * attr_size > pos + csize:
                raise MalformedAxml(f"attributes of <{name}> overrun their chunk")
            attrs: dict[str, str] = {}
            for i in range(attr_count):
                a = ext + attr_start + i * attr_size
                key = dec.attr_local_name(_u32(buf, a), _u32(buf, a + 4))
                value = dec.attr_value(_u32(buf, a + 8), buf[a + 15], _u32(buf, a + 16))
                if key is not None:
                    attrs[key] = value
            yield "start", name, attrs, tuple(stack)
            stack.append(name)
        elif ctype == RES_XML_END_ELEMENT:
            ext = pos + hsize
            if ext + 8 > pos + csize:
                raise MalformedAxml(f"end element at {pos} too short")
            name = dec.string(_u32(buf, ext + 4))
            if not stack or stack[-1] != name:
                raise MalformedAxml(f"unbalanced end element </{name}>")
            stack.pop()
            yield "end", name, {}, tuple(stack)
        # namespaces, CDATA and unknown chunks are skipped by declared size
        pos += csize
    if stack:
        raise MalformedAxml(f"unterminated element stack: {'/'.join(stack)}")


def parse_axml(data: bytes) -> ManifestInfo:
    package = ""
    permissions: set[str] = set()
    actions: set[str] = set()
    counts = dict.fromkeys(COMPONENT_TAGS, 0)
    for event, tag, attrs, parents in iter_elements(data):
        if event != "start":
            continue
        if tag == "manifest" and not parents:
            package = attrs.get("package", "")
        elif tag in PERMISSION_TAGS:
            if "android:name" in attrs:
                permissions.add(attrs["android:name"])
        elif tag == "action" and parents and parents[-1] == "intent-filter":
            if "android:name" in attrs:
                actions.add(attrs["android:name"])
        elif tag in counts:
            counts[tag] += 1
    return ManifestInfo(package, frozenset(permissions), frozenset(actions), counts)


def permission_pairs(info: ManifestInfo) -> frozenset[frozenset[str]]:
    """All unordered pairs of requested permissions."""
    return frozenset(frozenset(p) for p in itertools.combinations(sorted(info.permissions), 2))
