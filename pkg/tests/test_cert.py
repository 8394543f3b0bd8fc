import base64
import datetime as dt
import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import builders
from droiddnn.apk import open_apk
from droiddnn.cert import (
    Tlv,
    certificate_info,
    certificate_invalid,
    check_signature,
    decode_oid,
    digest_mismatches,
    parse_certificate_validity,
    parse_jar_manifest,
    read_tlv,
    verify_entry_digests,
)
from droiddnn.errors import MalformedDer, MissingManifest, NoCertificateFound

x509 = pytest.importorskip("cryptography.x509")
UTC = dt.timezone.utc


def _block(fx):
    return fx.signature["META-INF/CERT.RSA"]


def test_certificate_fields_match_cryptography(signed_fixture):
    info = certificate_info(_block(signed_fixture))
    cert = signed_fixture.cert
    assert info.not_before == cert.not_valid_before_utc
    assert info.not_after == cert.not_valid_after_utc  # 2050 is encoded as GeneralizedTime
    assert info.self_signed
    assert info.subject == "CN=Fixture Signer,O=Fixtures"


def test_bare_certificate_accepted(key_cert):
    from cryptography.hazmat.primitives.serialization import Encoding

    der = key_cert[1].public_bytes(Encoding.DER)
    assert certificate_info(der).not_before == dt.datetime(2020, 1, 1, tzinfo=UTC)


def test_not_self_signed():
    _, cert = builders.make_key_and_cert(issuer_cn="Some CA")
    from cryptography.hazmat.primitives.serialization import Encoding

    assert not certificate_info(cert.public_bytes(Encoding.DER)).self_signed


@pytest.mark.parametrize("now, expired", [
    (dt.datetime(2019, 12, 31, 23, 59, 59, tzinfo=UTC), True),
    (dt.datetime(2020, 1, 1, tzinfo=UTC), False),
    (dt.datetime(2049, 12, 31, tzinfo=UTC), False),
    (dt.datetime(2050, 1, 1, 0, 0, 1, tzinfo=UTC), True),
    (dt.datetime(2030, 5, 5), False),  # naive times are read as UTC
])
def test_validity_window(signed_fixture, now, expired):
    assert parse_certificate_validity(_block(signed_fixture), now).expired is expired


def test_clean_fixture_is_valid(signed_fixture):
    report = check_signature(open_apk(signed_fixture.apk), builders.FIXTURE_NOW)
    assert report.has_signature and report.digest_ok and report.self_signed
    assert not report.verdict_invalid
    assert report.reasons == ()


def test_tampered_fixture_is_invalid(signed_fixture):
    archive = open_apk(builders.tamper(signed_fixture))
    assert digest_mismatches(archive) == ["res/raw/config.txt"]
    report = check_signature(archive, builders.FIXTURE_NOW)
    assert report.verdict_invalid and not report.digest_ok
    # the policy switch isolates the window check
    assert not certificate_invalid(archive, builders.FIXTURE_NOW, check_digests=False)


def test_expired_cert_invalid(signed_fixture):
    later = dt.datetime(2051, 1, 1, tzinfo=UTC)
    archive = open_apk(signed_fixture.apk)
    assert certificate_invalid(archive, later)
    assert not certificate_invalid(archive, later, check_window=False)


def test_unsigned_is_invalid(signed_fixture):
    archive = open_apk(builders.zip_bytes(signed_fixture.entries))
    report = check_signature(archive, builders.FIXTURE_NOW)
    assert report.verdict_invalid and not report.has_signature
    with pytest.raises(MissingManifest):
        digest_mismatches(archive)


def test_corrupt_block_is_invalid_not_raised(signed_fixture):
    entries = {**signed_fixture.entries, **signed_fixture.signature, "META-INF/CERT.RSA": b"\x30\x03\x02\x01"}
    report = check_signature(open_apk(builders.zip_bytes(entries)), builders.FIXTURE_NOW)
    assert report.verdict_invalid
    assert any("CERT.RSA" in r for r in report.reasons)


def test_sha1_digests_verify():
    entries = {"a.txt": b"alpha", "b.txt": b"beta"}
    mf = builders.jar_manifest(entries, "SHA1")
    assert verify_entry_digests(open_apk(builders.zip_bytes({**entries, "META-INF/MANIFEST.MF": mf})))


def test_manifest_continuation_lines():
    name = "res/" + "x" * 90
    digest = base64.b64encode(hashlib.sha256(b"").digest()).decode()
    line = f"Name: {name}"
    text = f"Manifest-Version: 1.0\r\n\r\n{line[:70]}\r\n {line[70:]}\r\nSHA-256-Digest: {digest}\r\n\r\n"
    main, named = parse_jar_manifest(text)
    assert main == {"Manifest-Version": "1.0"}
    assert named[name]["SHA-256-Digest"] == digest


def test_pkcs7_without_certificates():
    # ContentInfo { signedData, [0] { SignedData { version, digestAlgs, contentInfo } } }
    oid = bytes.fromhex("06092a864886f70d010702")
    signed = bytes.fromhex("300a" "020101" "3100" "3003" "060100")
    body = oid + bytes([0xA0, len(signed)]) + signed
    with pytest.raises(NoCertificateFound):
        certificate_info(bytes([0x30, len(body)]) + body)


@pytest.mark.parametrize("der", [b"", b"\x30", b"\x30\x80\x00\x00", b"\x1f\x01\x00", b"\x30\x85\x00\x00\x00\x00\x01",
                                 b"\x30\x05\x02\x01"])
def test_der_errors(der):
    with pytest.raises(MalformedDer):
        certificate_info(der)


@settings(max_examples=200)
@given(st.lists(st.integers(0, 2 ** 40), min_size=1, max_size=6), st.integers(0, 2), st.integers(0, 39))
def test_oid_roundtrip(rest, a, b):
    from cryptography.x509 import ObjectIdentifier

    dotted = ".".join(map(str, [a, b, *rest]))
    assert decode_oid(_encode_oid([a, b, *rest])) == ObjectIdentifier(dotted).dotted_string


def _encode_oid(arcs):
    out = bytearray()
    for value in [40 * arcs[0] + arcs[1], *arcs[2:]]:
        chunk = [value & 0x7F]
        value >>= 7
        while value:
            chunk.append(0x80 | value & 0x7F)
            value >>= 7
        out += bytes(reversed(chunk))
    return bytes(out)


def test_read_tlv_long_form():
    buf = b"\x04\x82\x01\x00" + b"\x00" * 256
    assert read_tlv(buf, 0, len(buf)) == Tlv(4, 0, 4, 260)
