#!/usr/bin/env python3
"""Known-answer vectors for the default suite, computed with the Python
`cryptography` package and plain integer arithmetic."""
import hashlib
import hmac
import json
import sys
from decimal import Decimal, getcontext

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import padding, rsa
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF


def euler(bits):
    getcontext().prec = bits // 3 + 50
    e, term, k = Decimal(1), Decimal(1), 1
    while True:
        term /= k
        if term < Decimal(2) ** -(bits + 64):
            break
        e += term
        k += 1
    return e


def ffdhe(bits, c):
    # p = 2^b - 2^(b-64) + {[2^(b-130) e] + X} * 2^64 - 1
    e = euler(bits)
    inner = int((Decimal(2) ** (bits - 130) * e).to_integral_value(rounding="ROUND_FLOOR"))
    return 2 ** bits - 2 ** (bits - 64) + (inner + c) * 2 ** 64 - 1


def main():
    out = {}
    key = bytes(range(16))
    iv = bytes(range(0x20, 0x2C))
    vectors = []
    for pt in [b"", b"hello", bytes(range(64)), b"x" * 1000]:
        ct = AESGCM(key).encrypt(iv, pt, None)
        vectors.append({"key": key.hex(), "iv": iv.hex(), "plaintext": pt.hex(), "wire": (iv + ct).hex()})
    key256 = bytes(range(32))
    ct = AESGCM(key256).encrypt(iv, b"strong", None)
    out["aes_gcm"] = vectors
    out["aes_256_gcm"] = {"key": key256.hex(), "iv": iv.hex(), "plaintext": b"strong".hex(), "wire": (iv + ct).hex()}

    out["sha256"] = [{"data": d.hex(), "digest": hashlib.sha256(d).hexdigest()}
                     for d in [b"", b"abc", b"a" * 1000]]
    out["sha512_abc"] = hashlib.sha512(b"abc").hexdigest()
    out["hmac_sha256"] = [{"key": k.hex(), "data": d.hex(), "tag": hmac.new(k, d, hashlib.sha256).hexdigest()}
                          for k, d in [(b"\x0b" * 20, b"Hi There"), (b"Jefe", b"what do ya want for nothing?")]]

    p2048 = ffdhe(2048, 560316)
    p3072 = ffdhe(3072, 2625351)
    out["ffdhe2048_p"] = format(p2048, "0512x")
    out["ffdhe3072_p"] = format(p3072, "0768x")
    x = int.from_bytes(hashlib.sha256(b"x").digest() * 8, "big") % ((p2048 - 1) // 2 - 2) + 2
    y = int.from_bytes(hashlib.sha256(b"y").digest() * 8, "big") % ((p2048 - 1) // 2 - 2) + 2
    gx, gy = pow(2, x, p2048), pow(2, y, p2048)
    z = pow(gy, x, p2048)
    assert z == pow(gx, y, p2048)
    zb = z.to_bytes(256, "big")
    k = HKDF(algorithm=hashes.SHA256(), length=16, salt=None, info=b"wsext-dh-key").derive(zb)
    out["dh"] = {"x": format(x, "0512x"), "y": format(y, "0512x"), "gx": format(gx, "0512x"),
                 "gy": format(gy, "0512x"), "z": zb.hex(), "key": k.hex()}

    priv = rsa.generate_private_key(public_exponent=65537, key_size=2048)
    der_priv = priv.private_bytes(serialization.Encoding.DER, serialization.PrivateFormat.PKCS8,
                                  serialization.NoEncryption())
    der_pub = priv.public_key().public_bytes(serialization.Encoding.DER,
                                             serialization.PublicFormat.SubjectPublicKeyInfo)
    msg = b"session key material"
    oaep = padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None)
    ct = priv.public_key().encrypt(msg, oaep)
    sig = priv.sign(msg, padding.PSS(mgf=padding.MGF1(hashes.SHA256()), salt_length=32), hashes.SHA256())
    out["rsa"] = {"private_der": der_priv.hex(), "public_der": der_pub.hex(), "message": msg.hex(),
                  "oaep_wire": (b"\x00" + ct).hex(), "pss_signature": sig.hex()}

    text = json.dumps(out, indent=1, sort_keys=True) + "\n"
    (open(sys.argv[1], "w") if len(sys.argv) > 1 else sys.stdout).write(text)


if __name__ == "__main__":
    main()
