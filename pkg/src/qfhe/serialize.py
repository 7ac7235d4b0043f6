"""Tagged binary containers built from the canonical ModArray encoding.

Layout: 8-byte ASCII tag (NUL padded), u64 section count, then for each
section a u64 name length, the UTF-8 name, a u64 payload length and the
payload.  Payloads are canonical ModArray bytes or small JSON documents.
"""

from __future__ import annotations

import json
import struct

from .errors import DimensionError


def pack(tag: str, sections: list[tuple[str, bytes]]) -> bytes:
    raw_tag = tag.encode("ascii")
    if len(raw_tag) > 8:
        raise ValueError(f"tag too long: {tag}")
    out = [raw_tag.ljust(8, b"\0"), struct.pack("<Q", len(sections))]
    for name, payload in sections:
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<Q", len(raw_name)))
        out.append(raw_name)
        out.append(struct.pack("<Q", len(payload)))
        out.append(payload)
    return b"".join(out)


def unpack(blob: bytes, tag: str | None = None) -> tuple[str, list[tuple[str, bytes]]]:
    if len(blob) < 16:
        raise DimensionError("container too short")
    found = blob[:8].rstrip(b"\0").decode("ascii")
    if tag is not None and found != tag:
        raise DimensionError(f"expected tag {tag!r}, found {found!r}")
    (count,) = struct.unpack_from("<Q", blob, 8)
    pos = 16
    sections = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (plen,) = struct.unpack_from("<Q", blob, pos)
        pos += 8
        sections.append((name, blob[pos:pos + plen]))
        pos += plen
    if pos != len(blob):
        raise DimensionError("trailing bytes after last section")
    return found, sections


def json_bytes(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def from_json_bytes(raw: bytes):
    return json.loads(raw.decode("utf-8"))
