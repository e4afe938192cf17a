#!/usr/bin/env python3
"""Independent known-answer vectors for the blindex-core test suite.

Computed with pyca/cryptography and hashlib only; none of the Rust code is
involved. Re-run to regenerate the constants frozen into tests/vectors.rs.
"""
import hashlib
import hmac

from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.argon2 import Argon2id
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat


def hkdf(ikm, salt, info, n):
    return HKDF(algorithm=hashes.SHA256(), length=n, salt=salt or None, info=info).derive(ikm)


def show(name, value):
    print(f"{name} = {value.hex()}")


# ECDH P-256 with fixed scalars
a = ec.derive_private_key(int("c88f01f510d9ac3f70a292daa2316de544e9aab8afe84049c62a9c57862d1433", 16), ec.SECP256R1())
b = ec.derive_private_key(int("c6ef9c5d78ae012a011164acb397ce2088685d8f06bf9be0b283ab46476bee53", 16), ec.SECP256R1())
show("ecdh_a_public", a.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint))
show("ecdh_b_public", b.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint))
show("ecdh_shared", a.exchange(ec.ECDH(), b.public_key()))

# RFC 5869 test case 1
ikm = bytes([0x0B] * 22)
salt = bytes(range(0x00, 0x0D))
info = bytes(range(0xF0, 0xFA))
show("hkdf_rfc5869_case1", hkdf(ikm, salt, info, 42))

# Session keys
shared = bytes(range(32))
client_random = bytes([0x11] * 32)
server_random = bytes([0x22] * 32)
show("session_c2p", hkdf(shared, client_random + server_random, b"bx1:c2p", 32))
show("session_p2c", hkdf(shared, client_random + server_random, b"bx1:p2c", 32))

# Column and blind-index keys
ltk = bytes([0x42] * 32)
col = hkdf(ltk, b"", b"col:patients\x00ssn", 32)
bidx = hkdf(ltk, b"", b"bidx:patients\x00ssn", 32)
show("column_key_patients_ssn", col)
show("bidx_key_patients_ssn", bidx)

# Blind index of an SSN under that key, full HMAC output
show("hmac_bidx_ssn_123_45_6789", hmac.new(bidx, b"123-45-6789", hashlib.sha256).digest())

# AES-256-GCM session encryption, counter 0 and 1, AD = session id 0x0102030405060708
key = bytes([0x07] * 32)
sid = (0x0102030405060708).to_bytes(8, "big")
for ctr in (0, 1):
    nonce = bytes(4) + ctr.to_bytes(8, "big")
    show(f"aesgcm_ctr{ctr}", AESGCM(key).encrypt(nonce, b"hello proxy", sid))

# ChaCha20-Poly1305 with fixed nonce, AD "patients.ssn"
show("chacha_fixed", ChaCha20Poly1305(col).encrypt(bytes([0x09] * 12), b"123-45-6789", b"patients.ssn"))

# Argon2id
show("argon2id_m8192_t1_p1", Argon2id(salt=bytes(range(16)), length=32, iterations=1, lanes=1, memory_cost=8192).derive(b"correct horse"))
show("argon2id_m65536_t3_p1", Argon2id(salt=bytes(range(16)), length=32, iterations=3, lanes=1, memory_cost=65536).derive(b"correct horse"))

# Transcript: 0x01*32 || 0x04||0x02*64 || 0x03*32 || 0x04||0x05*64 || 0x00..07
transcript = bytes([1] * 32) + b"\x04" + bytes([2] * 64) + bytes([3] * 32) + b"\x04" + bytes([5] * 64) + bytes(range(8))
assert len(transcript) == 202
show("transcript_sha256", hashlib.sha256(transcript).digest())
