"""Writes golden.mrt (+ .gz, .bz2): a small BGP4MP update dump.

Run from this directory: python3 make_golden.py
"""
import bz2
import gzip
import ipaddress
import struct

T0 = 1396463160


def record(ts, mtype, subtype, body):
    return struct.pack(">IHHI", ts, mtype, subtype, len(body)) + body


def nlri(*prefixes):
    out = b""
    for p in prefixes:
        net = ipaddress.ip_network(p)
        nbytes = (net.prefixlen + 7) // 8
        out += bytes([net.prefixlen]) + net.network_address.packed[:nbytes]
    return out


def attr(code, value, flags=0x40):
    if len(value) > 255:
        return struct.pack(">BBH", flags | 0x10, code, len(value)) + value
    return struct.pack(">BBB", flags, code, len(value)) + value


def path(segments, width):
    fmt = ">I" if width == 4 else ">H"
    out = b""
    for seg_type, asns in segments:
        out += bytes([seg_type, len(asns)]) + b"".join(struct.pack(fmt, a) for a in asns)
    return out


SEQ, SET = 2, 1


def update(withdrawn=b"", attrs=b"", announced=b""):
    body = struct.pack(">H", len(withdrawn)) + withdrawn + struct.pack(">H", len(attrs)) + attrs + announced
    return b"\xff" * 16 + struct.pack(">HB", 19 + len(body), 2) + body


def bgp4mp(peer, local, msg, as4=True, v6=False):
    fmt = ">II" if as4 else ">HH"
    head = struct.pack(fmt, peer, local) + struct.pack(">HH", 0, 2 if v6 else 1)
    addr = (b"\x20\x01\x0d\xb8" + b"\x00" * 11 + b"\x01") if v6 else b"\xc0\x00\x02\x01"
    return head + addr + addr + msg


records = [
    # three prefixes from AS 4761 via a 4-byte session
    record(T0, 16, 4, bgp4mp(3356, 6447, update(
        attrs=attr(2, path([(SEQ, [3356, 4761])], 4)),
        announced=nlri("1.2.3.0/24", "10.0.0.0/8", "192.168.128.0/17")))),
    # 2-byte session; the real origin only appears in AS4_PATH
    record(T0 + 1, 16, 1, bgp4mp(701, 6447, update(
        attrs=attr(2, path([(SEQ, [701, 23456])], 2)) + attr(17, path([(SEQ, [701, 196608])], 4), 0xC0),
        announced=nlri("203.0.113.0/24")), as4=False)),
    # plain withdrawal
    record(T0 + 2, 16, 4, bgp4mp(3356, 6447, update(withdrawn=nlri("1.2.3.0/24")))),
    # IPv6 reach and unreach over an IPv6 session
    record(T0 + 3, 16, 4, bgp4mp(6939, 6447, update(
        attrs=attr(2, path([(SEQ, [6939, 4761])], 4))
        + attr(14, struct.pack(">HBB", 2, 1, 16) + b"\x20\x01\x0d\xb8" + b"\x00" * 11 + b"\x01" + b"\x00"
               + nlri("2001:db8::/32"), 0x80)
        + attr(15, struct.pack(">HB", 2, 1) + nlri("2001:db8:1::/48"), 0x80)), v6=True)),
    # extended-timestamp record whose path ends in an AS_SET
    record(T0 + 4, 17, 4, struct.pack(">I", 123456) + bgp4mp(3356, 6447, update(
        attrs=attr(2, path([(SEQ, [3356]), (SET, [64500, 64501])], 4)),
        announced=nlri("198.51.100.0/24")))),
    # state change
    record(T0 + 5, 16, 5, struct.pack(">IIHH", 3356, 6447, 0, 1) + b"\xc0\x00\x02\x01" * 2 + struct.pack(">HH", 3, 6)),
    # RIB dump record
    record(T0 + 6, 13, 1, b"\x00" * 8),
    # AS_PATH segment claims 5 ASNs, carries 2
    record(T0 + 7, 16, 4, bgp4mp(3356, 6447, update(
        withdrawn=nlri("9.9.9.0/24"),
        attrs=attr(2, bytes([SEQ, 5]) + struct.pack(">II", 3356, 4761)),
        announced=nlri("172.16.0.0/12", "100.64.0.0/10")))),
    # unknown record type
    record(T0 + 8, 99, 0, b"abc"),
    # announcement without AS_PATH
    record(T0 + 9, 16, 4, bgp4mp(3356, 6447, update(attrs=attr(1, b"\x00"), announced=nlri("5.5.5.0/24")))),
]

raw = b"".join(records)
with open("golden.mrt", "wb") as f:
    f.write(raw)
with open("golden.mrt.gz", "wb") as f:
    f.write(gzip.compress(raw, mtime=0))
with open("golden.mrt.bz2", "wb") as f:
    f.write(bz2.compress(raw))
