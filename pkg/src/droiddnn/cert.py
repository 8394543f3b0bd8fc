"""v1 (JAR) signature checks behind the "invalid certificate" feature bit.

An APK is flagged when it is unsigned, when any MANIFEST.MF digest disagrees
with the archive content, or when the signing certificate is outside its
validity window at the supplied ``now``. Signature math over the PKCS#7 block
is not verified; digest checking is what catches repackaged content.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import NamedTuple

from .apk import ApkArchive, read_entry
from .errors import (
    CorruptEntry,
    DroidDnnError,
    MalformedDer,
    MissingManifest,
    NoCertificateFound,
    UnsupportedCompression,
)

log = logging.getLogger(__name__)

MANIFEST_MF = "META-INF/MANIFEST.MF"
_SIG_BLOCK = re.compile(r"META-INF/[^/]+\.(RSA|DSA|EC)", re.IGNORECASE)

_DIGESTS = {"SHA1": hashlib.sha1, "SHA256": hashlib.sha256}

# DER tags
SEQUENCE = 0x30
SET = 0x31
OID = 0x06
UTC_TIME = 0x17
GENERALIZED_TIME = 0x18
CTX0 = 0xA0

OID_SIGNED_DATA = "1.2.840.113549.1.7.2"
_OID_NAMES = {
    "2.5.4.3": "CN", "2.5.4.6": "C", "2.5.4.7": "L", "2.5.4.8": "ST",
    "2.5.4.10": "O", "2.5.4.11": "OU", "1.2.840.113549.1.9.1": "emailAddress",
}


# --------------------------------------------------------------------------
# JAR manifest


def parse_jar_manifest(text: str) -> tuple[dict[str, str], dict[str, dict[str, str]]]:
    """Split a JAR manifest into its main attributes and per-entry sections."""
    sections: list[dict[str, str]] = []
    current: dict[str, str] = {}
    last_key = None
    for line in text.replace("\r\n", "\n").replace("\r", "\n").split("\n"):
        if not line:
            if current:
                sections.append(current)
            current, last_key = {}, None
        elif line.startswith(" ") and last_key is not None:
            current[last_key] += line[1:]
        elif ":" in line:
            key, _, value = line.partition(":")
            last_key = key.strip()
            current[last_key] = value.strip()
    if current:
        sections.append(current)
    if not sections:
        return {}, {}
    main, *rest = sections
    named = {s["Name"]: s for s in rest if "Name" in s}
    return main, named


def _digest_of(section: dict[str, str], content: bytes) -> list[tuple[str, bool]]:
    results = []
    for key, value in section.items():
        if not key.endswith("-Digest"):
            continue
        algo = key[: -len("-Digest")].replace("-", "").upper()
        fn = _DIGESTS.get(algo)
        if fn is None:
            results.append((key, False))
            continue
        try:
            expected = base64.b64decode(value, validate=True)
        except binascii.Error:
            results.append((key, False))
            continue
        results.append((key, fn(content).digest() == expected))
    return results


def digest_mismatches(archive: ApkArchive) -> list[str]:
    """Entries whose recorded MANIFEST.MF digest does not match their content."""
    if MANIFEST_MF not in archive:
        raise MissingManifest(f"{MANIFEST_MF} not present")
    text = read_entry(archive, MANIFEST_MF).decode("utf-8", errors="replace")
    _, named = parse_jar_manifest(text)
    bad = []
    for name, section in named.items():
        if name not in archive:
            continue
        try:
            content = read_entry(archive, name)
        except (CorruptEntry, UnsupportedCompression) as exc:
            log.info("digest check: %s", exc)
            bad.append(name)
            continue
        checks = _digest_of(section, content)
        if not checks or not all(ok for _, ok in checks):
            bad.append(name)
    return bad


def verify_entry_digests(archive: ApkArchive) -> bool:
    bad = digest_mismatches(archive)
    for name in bad:
        log.info("digest mismatch: %s", name)
    return not bad


# --------------------------------------------------------------------------
# DER


class Tlv(NamedTuple):
    tag: int
    start: int  # offset of the tag byte
    body: int  # offset of the first content byte
    end: int  # one past the last content byte


def read_tlv(buf: bytes, pos: int, limit: int) -> Tlv:
    if pos + 2 > limit:
        raise MalformedDer(f"TLV header at {pos} overruns enclosing length {limit}")
    tag = buf[pos]
    if tag & 0x1F == 0x1F:
        raise MalformedDer(f"high-tag-number form at {pos} not supported")
    first = buf[pos + 1]
    body = pos + 2
    if first < 0x80:
        length = first
    elif first == 0x80:
        raise MalformedDer(f"indefinite length at {pos} is not DER")
    else:
        n = first & 0x7F
        if n > 4 or body + n > limit:
            raise MalformedDer(f"length-of-length {n} at {pos} invalid")
        length = int.from_bytes(buf[body:body + n], "big")
        body += n
    end = body + length
    if end > limit:
        raise MalformedDer(f"TLV at {pos} (length {length}) overruns enclosing length {limit}")
    return Tlv(tag, pos, body, end)


def children(buf: bytes, parent: Tlv) -> list[Tlv]:
    out = []
    pos = parent.body
    while pos < parent.end:
        t = read_tlv(buf, pos, parent.end)
        out.append(t)
        pos = t.end
    return out


def _expect(t: Tlv, tag: int, what: str) -> Tlv:
    if t.tag != tag:
        raise MalformedDer(f"expected {what} (tag 0x{tag:02x}), found 0x{t.tag:02x} at {t.start}")
    return t


def decode_oid(raw: bytes) -> str:
    if not raw:
        raise MalformedDer("empty OID")
    parts: list[int] = []
    value = 0
    for b in raw:
        value = (value << 7) | (b & 0x7F)
        if not b & 0x80:
            parts.append(value)
            value = 0
    if raw[-1] & 0x80:
        raise MalformedDer("truncated OID")
    first = parts[0]
    head = [min(first // 40, 2), first - 40 * min(first // 40, 2)]
    return ".".join(str(p) for p in head + parts[1:])


def decode_time(buf: bytes, t: Tlv) -> datetime:
    text = buf[t.body:t.end].decode("ascii", errors="replace")
    try:
        if t.tag == UTC_TIME:
            if not re.fullmatch(r"\d{10}(\d{2})?Z", text):
                raise ValueError(text)
            yy = int(text[:2])
            year = 2000 + yy if yy < 50 else 1900 + yy
            sec = int(text[10:12]) if len(text) == 13 else 0
            return datetime(year, int(text[2:4]), int(text[4:6]), int(text[6:8]), int(text[8:10]), sec,
                            tzinfo=timezone.utc)
        if t.tag == GENERALIZED_TIME:
            m = re.fullmatch(r"(\d{4})(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})(\.\d+)?Z", text)
            if not m:
                raise ValueError(text)
            return datetime(*(int(g) for g in m.groups()[:6]), tzinfo=timezone.utc)
    except ValueError:
        raise MalformedDer(f"bad time value {text!r} at {t.start}") from None
    raise MalformedDer(f"expected UTCTime or GeneralizedTime at {t.start}, found tag 0x{t.tag:02x}")


def render_name(buf: bytes, name: Tlv) -> str:
    """RFC 4514-ish rendering of an X.501 Name, for reports only."""
    parts = []
    for rdn in children(buf, _expect(name, SEQUENCE, "Name")):
        for atv in children(buf, _expect(rdn, SET, "RDN")):
            kids = children(buf, _expect(atv, SEQUENCE, "AttributeTypeAndValue"))
            if len(kids) != 2:
                raise MalformedDer(f"attribute at {atv.start} has {len(kids)} parts")
            oid = decode_oid(buf[kids[0].body:kids[0].end])
            value = buf[kids[1].body:kids[1].end]
            text = value.decode("utf-16-be" if kids[1].tag == 0x1E else "utf-8", errors="replace")
            parts.append(f"{_OID_NAMES.get(oid, oid)}={text}")
    return ",".join(parts)


@dataclass(frozen=True)
class CertInfo:
    not_before: datetime
    not_after: datetime
    subject: str
    issuer: str
    self_signed: bool


def _first_certificate(buf: bytes) -> Tlv:
    top = _expect(read_tlv(buf, 0, len(buf)), SEQUENCE, "outer SEQUENCE")
    kids = children(buf, top)
    if not kids:
        raise MalformedDer("empty outer SEQUENCE")
    if kids[0].tag == SEQUENCE:
        return top  # bare X.509 certificate
    oid = decode_oid(buf[_expect(kids[0], OID, "contentType").body:kids[0].end])
    if oid != OID_SIGNED_DATA:
        raise NoCertificateFound(f"content type {oid} is not signedData")
    if len(kids) < 2:
        raise NoCertificateFound("signedData content missing")
    explicit = children(buf, _expect(kids[1], CTX0, "[0] content"))
    if not explicit:
        raise NoCertificateFound("signedData content empty")
    signed_data = children(buf, _expect(explicit[0], SEQUENCE, "SignedData"))
    for item in signed_data:
        if item.tag == CTX0:  # certificates [0] IMPLICIT SET OF Certificate
            certs = children(buf, item)
            if certs:
                return _expect(certs[0], SEQUENCE, "Certificate")
    raise NoCertificateFound("signature block carries no certificates")


def certificate_info(pkcs7_der: bytes) -> CertInfo:
    buf = bytes(pkcs7_der)
    cert = _first_certificate(buf)
    parts = children(buf, cert)
    if not parts:
        raise MalformedDer("empty Certificate")
    tbs = children(buf, _expect(parts[0], SEQUENCE, "TBSCertificate"))
    if tbs and tbs[0].tag == CTX0:
        tbs = tbs[1:]  # explicit version
    # serial, signature algorithm, issuer, validity, subject
    if len(tbs) < 5:
        raise MalformedDer("TBSCertificate has too few fields")
    issuer, validity, subject = tbs[2], tbs[3], tbs[4]
    window = children(buf, _expect(validity, SEQUENCE, "Validity"))
    if len(window) != 2:
        raise MalformedDer("Validity must hold exactly two times")
    issuer_raw = buf[issuer.start:issuer.end]
    subject_raw = buf[subject.start:subject.end]
    return CertInfo(
        not_before=decode_time(buf, window[0]),
        not_after=decode_time(buf, window[1]),
        subject=render_name(buf, subject),
        issuer=render_name(buf, issuer),
        self_signed=issuer_raw == subject_raw,
    )


class CertValidity(NamedTuple):
    not_before: datetime
    not_after: datetime
    self_signed: bool
    expired: bool


def _aware(now: datetime) -> datetime:
    return now if now.tzinfo else now.replace(tzinfo=timezone.utc)


def parse_certificate_validity(pkcs7_der: bytes, now: datetime) -> CertValidity:
    info = certificate_info(pkcs7_der)
    now = _aware(now)
    expired = now < info.not_before or now > info.not_after
    return CertValidity(info.not_before, info.not_after, info.self_signed, expired)


# --------------------------------------------------------------------------
# verdict


@dataclass(frozen=True)
class SignatureReport:
    has_signature: bool
    digest_ok: bool
    cert_window: tuple[datetime, datetime] | None
    self_signed: bool
    verdict_invalid: bool
    signer: str | None = None
    reasons: tuple[str, ...] = field(default=())


def signature_blocks(archive: ApkArchive) -> list[str]:
    return sorted(n for n in archive.names() if _SIG_BLOCK.fullmatch(n))


def check_signature(
    archive: ApkArchive,
    now: datetime,
    *,
    check_digests: bool = True,
    check_window: bool = True,
) -> SignatureReport:
    """Collect every signal behind the invalid-certificate verdict.

    Sub-errors never escape; they become reasons and push the verdict to invalid.
    """
    now = _aware(now)
    reasons: list[str] = []
    blocks = signature_blocks(archive)
    has_signature = MANIFEST_MF in archive and bool(blocks)
    if not has_signature:
        reasons.append("unsigned: missing MANIFEST.MF or signature block")

    digest_ok = False
    if MANIFEST_MF in archive:
        try:
            bad = digest_mismatches(archive)
            digest_ok = not bad
            if bad:
                reasons.append("digest mismatch: " + ", ".join(bad))
        except DroidDnnError as exc:
            reasons.append(f"manifest unreadable: {exc}")

    window = None
    self_signed = False
    signer = None
    if blocks:
        try:
            info = certificate_info(read_entry(archive, blocks[0]))
            window = (info.not_before, info.not_after)
            self_signed = info.self_signed
            signer = info.subject
        except DroidDnnError as exc:
            reasons.append(f"{blocks[0]}: {exc}")
    in_window = window is not None and window[0] <= now <= window[1]
    if window is not None and not in_window:
        reasons.append(f"certificate not valid at {now.isoformat()}")

    invalid = not has_signature
    if check_digests:
        invalid = invalid or not digest_ok
    if check_window:
        invalid = invalid or not in_window
    return SignatureReport(has_signature, digest_ok, window, self_signed, invalid, signer, tuple(reasons))


def certificate_invalid(archive: ApkArchive, now: datetime, **policy: bool) -> bool:
    return check_signature(archive, now, **policy).verdict_invalid
