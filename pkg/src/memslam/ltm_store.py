"""Append-only single-file long-term-memory store.

Layout (little-endian): header `SPLM` + version u32, then records, each
preceded by a one-byte type tag:

  'N' node: id u64, session u32, weight u32, odom pose 3xf64,
            word count u32, sorted word ids (u32 each),
            per-word landmark positions (2xf32 each, NaN pair = no landmark),
            beam count u32, per-beam angle f32 + range f32
  'L' link: from u64, to u64, kind u8, merged/visual flag u8, transform 3xf64

Later records win: re-writing a node or a link (same unordered pair + kind)
just appends, and the in-memory index, rebuilt on open, keeps the last
offset.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .geometry import Pose2, Transform2
from .pose_graph import Link, LinkType, Node
from .scan import LaserScan
from .signature import Signature

MAGIC = b"SPLM"
VERSION = 1

_NODE_HEAD = struct.Struct("<QII3d")
_LINK_BODY = struct.Struct("<QQBB3d")
_U32 = struct.Struct("<I")


class StoreError(IOError):
    pass


class LtmStore:
    """Record store with an in-memory index (node id -> file offset).

    Link records are small and kept fully deserialized; node payloads stay
    on disk until requested.
    """

    def __init__(self, path: str | Path, scan_max_range: float = 4.0, scan_fov: float = 0.0):
        self.path = Path(path)
        self.scan_max_range = scan_max_range
        self.scan_fov = scan_fov
        self._node_offsets: dict[int, int] = {}
        self._links: dict[tuple[int, int, int], Link] = {}
        self._incident: dict[int, set[tuple[int, int, int]]] = {}
        existing = self.path.exists() and self.path.stat().st_size > 0
        self._fh = open(self.path, "r+b" if existing else "w+b")
        if existing:
            self._scan_file()
        else:
            self._fh.write(MAGIC + _U32.pack(VERSION))
            self._fh.flush()

    # -- lifecycle ---------------------------------------------------------

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _scan_file(self) -> None:
        fh = self._fh
        fh.seek(0)
        head = fh.read(8)
        if len(head) < 8 or head[:4] != MAGIC:
            raise StoreError(f"{self.path}: not a store file")
        version = _U32.unpack(head[4:])[0]
        if version != VERSION:
            raise StoreError(f"{self.path}: unsupported version {version}")
        while True:
            offset = fh.tell()
            tag = fh.read(1)
            if not tag:
                break
            if tag == b"N":
                node_id = self._skip_node_record()
                self._node_offsets[node_id] = offset
            elif tag == b"L":
                link = self._read_link_body()
                self._index_link(link)
            else:
                raise StoreError(f"{self.path}: corrupt record tag {tag!r} at {offset}")

    def _skip_node_record(self) -> int:
        fh = self._fh
        head = fh.read(_NODE_HEAD.size)
        if len(head) < _NODE_HEAD.size:
            raise StoreError("truncated node record")
        node_id = _NODE_HEAD.unpack(head)[0]
        (n_words,) = _U32.unpack(fh.read(4))
        fh.seek(n_words * 4 + n_words * 8, 1)
        (n_beams,) = _U32.unpack(fh.read(4))
        fh.seek(n_beams * 8, 1)
        return node_id

    # -- nodes ---------------------------------------------------------------

    def put_node(self, node: Node) -> None:
        sig = node.signature
        words = sig.words
        lm = np.full((len(words), 2), np.nan, dtype="<f4")
        for k, w in enumerate(words):
            if w in sig.landmarks:
                lm[k] = sig.landmarks[w]
        scan = node.scan
        beams = np.column_stack(
            (scan.angles.astype("<f4"), scan.ranges.astype("<f4"))
        ) if len(scan) else np.zeros((0, 2), dtype="<f4")

        payload = bytearray(b"N")
        payload += _NODE_HEAD.pack(
            node.id, node.session, node.weight,
            node.odom_pose.x, node.odom_pose.y, node.odom_pose.theta,
        )
        payload += _U32.pack(len(words))
        payload += np.asarray(words, dtype="<u4").tobytes()
        payload += lm.tobytes()
        payload += _U32.pack(len(scan))
        payload += beams.tobytes()

        self._fh.seek(0, 2)
        offset = self._fh.tell()
        self._fh.write(payload)
        self._fh.flush()
        self._node_offsets[node.id] = offset

    def get_node(self, node_id: int) -> Node:
        try:
            offset = self._node_offsets[node_id]
        except KeyError:
            raise KeyError(f"node {node_id} not in store") from None
        fh = self._fh
        fh.seek(offset)
        if fh.read(1) != b"N":
            raise StoreError(f"{self.path}: bad node record at {offset}")
        nid, session, weight, x, y, theta = _NODE_HEAD.unpack(fh.read(_NODE_HEAD.size))
        (n_words,) = _U32.unpack(fh.read(4))
        words = np.frombuffer(fh.read(n_words * 4), dtype="<u4")
        lm = np.frombuffer(fh.read(n_words * 8), dtype="<f4").reshape(-1, 2)
        (n_beams,) = _U32.unpack(fh.read(4))
        beams = np.frombuffer(fh.read(n_beams * 8), dtype="<f4").reshape(-1, 2)

        landmarks = {
            int(w): (float(lm[k, 0]), float(lm[k, 1]))
            for k, w in enumerate(words)
            if not math.isnan(lm[k, 0])
        }
        sig = Signature(tuple(int(w) for w in words), landmarks)
        scan = LaserScan(
            beams[:, 0].copy(), beams[:, 1].copy(), self.scan_max_range, self.scan_fov
        )
        odom = Pose2(x, y, theta)
        return Node(
            id=nid, session=session, weight=weight,
            odom_pose=odom, opt_pose=odom.copy(),
            signature=sig, scan=scan, opt_epoch=-1,
        )

    def has_node(self, node_id: int) -> bool:
        return node_id in self._node_offsets

    def node_ids(self) -> list[int]:
        return sorted(self._node_offsets)

    # -- links ---------------------------------------------------------------

    def put_link(self, link: Link) -> None:
        flag = 1 if (link.merged or link.visual) else 0
        body = _LINK_BODY.pack(
            link.from_id, link.to_id, int(link.link_type), flag,
            link.transform.dx, link.transform.dy, link.transform.dtheta,
        )
        self._fh.seek(0, 2)
        self._fh.write(b"L" + body)
        self._fh.flush()
        self._index_link(link)

    def _read_link_body(self) -> Link:
        raw = self._fh.read(_LINK_BODY.size)
        if len(raw) < _LINK_BODY.size:
            raise StoreError("truncated link record")
        f, t, kind, flag, dx, dy, dth = _LINK_BODY.unpack(raw)
        ltype = LinkType(kind)
        return Link(
            f, t, ltype, Transform2(dx, dy, dth),
            merged=bool(flag) and ltype == LinkType.NEIGHBOR,
            visual=bool(flag) and ltype == LinkType.PROXIMITY,
        )

    def _index_link(self, link: Link) -> None:
        key = link.key()
        self._links[key] = link
        self._incident.setdefault(link.from_id, set()).add(key)
        self._incident.setdefault(link.to_id, set()).add(key)

    def links_of(self, node_id: int) -> list[Link]:
        return [self._links[k] for k in sorted(self._incident.get(node_id, ()))]

    def all_links(self) -> list[Link]:
        return [self._links[k] for k in sorted(self._links)]

    def size_bytes(self) -> int:
        self._fh.flush()
        return self.path.stat().st_size
