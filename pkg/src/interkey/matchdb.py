"""Descriptor database: Hamming retrieval and the .ikdb binary file format.

Retrieval is a vectorized linear scan over packed descriptor bytes; at the
tens-to-hundreds of records a city district produces, anything fancier buys
nothing and the linear scan doubles as the reference semantics.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .descriptor import Descriptor
from .errors import DatabaseFormatError, FingerprintMismatchError
from .geometry import Pose2
from .grid import PixelPoint

_MAGIC = b"IKDB"
_VERSION = 1

_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint16)


@dataclass(frozen=True)
class Fingerprint:
    """Descriptor-affecting configuration; must match between query and database."""

    S: float
    r: float
    R_o: float
    R_i: float
    N_r: int
    N_b: int
    tau_s: float

    @property
    def q_bits(self) -> int:
        return self.N_b * self.N_r * (self.N_r + 1) // 2

    def pack(self) -> bytes:
        return struct.pack("<5d2i", self.S, self.r, self.R_o, self.R_i,
                           self.tau_s, self.N_r, self.N_b)

    @staticmethod
    def unpack(blob: bytes) -> "Fingerprint":
        s, r, ro, ri, tau, nr, nb = struct.unpack("<5d2i", blob)
        return Fingerprint(s, r, ro, ri, nr, nb, tau)


@dataclass(frozen=True)
class IntersectionRecord:
    intersection_id: int
    global_pose: Pose2     # refined intersection position + orientation, in G
    descriptor: Descriptor


@dataclass
class DescriptorDatabase:
    fingerprint: Fingerprint
    records: list = field(default_factory=list)
    _packed: np.ndarray | None = None   # (N, ceil(Q/8)) uint8 cache

    def add(self, record: IntersectionRecord) -> None:
        if len(record.descriptor.bits) != self.fingerprint.q_bits:
            raise FingerprintMismatchError(
                f"descriptor has {len(record.descriptor.bits)} bits, "
                f"database expects {self.fingerprint.q_bits}"
            )
        self.records.append(record)
        self._packed = None

    def __len__(self) -> int:
        return len(self.records)

    def packed_matrix(self) -> np.ndarray:
        if self._packed is None:
            nbytes = (self.fingerprint.q_bits + 7) // 8
            if not self.records:
                self._packed = np.zeros((0, nbytes), dtype=np.uint8)
            else:
                self._packed = np.stack([
                    np.frombuffer(rec.descriptor.packed(), dtype=np.uint8)
                    for rec in self.records
                ])
        return self._packed


@dataclass(frozen=True)
class MatchResult:
    record: IntersectionRecord
    hamming: int


def hamming(a: Descriptor, b: Descriptor) -> int:
    """Popcount of the bitwise XOR; descriptors must be equal length."""
    if len(a.bits) != len(b.bits):
        raise FingerprintMismatchError(
            f"descriptor lengths differ: {len(a.bits)} vs {len(b.bits)}"
        )
    xa = np.frombuffer(a.packed(), dtype=np.uint8)
    xb = np.frombuffer(b.packed(), dtype=np.uint8)
    return int(_POPCOUNT8[xa ^ xb].sum())


def query(db: DescriptorDatabase, q: Descriptor, topN: int) -> list[MatchResult]:
    """topN records by ascending Hamming distance.

    Ties resolve by intersection id, then insertion order; several records of
    one intersection (symmetric orientations) may all appear.
    """
    if len(q.bits) != db.fingerprint.q_bits:
        raise FingerprintMismatchError(
            f"query has {len(q.bits)} bits, database expects {db.fingerprint.q_bits}"
        )
    if not db.records:
        return []
    mat = db.packed_matrix()
    qb = np.frombuffer(q.packed(), dtype=np.uint8)
    dists = _POPCOUNT8[mat ^ qb[None, :]].sum(axis=1).astype(np.int64)
    ids = np.array([rec.intersection_id for rec in db.records], dtype=np.int64)
    order = np.lexsort((np.arange(len(ids)), ids, dists))
    return [MatchResult(db.records[i], int(dists[i])) for i in order[:topN]]


def save(db: DescriptorDatabase) -> bytes:
    """Serialize to the little-endian .ikdb layout; load(save(db)) is bit-identical."""
    out = io.BytesIO()
    out.write(_MAGIC)
    out.write(struct.pack("<I", _VERSION))
    out.write(db.fingerprint.pack())
    out.write(struct.pack("<I", len(db.records)))
    nbytes = (db.fingerprint.q_bits + 7) // 8
    for rec in db.records:
        d = rec.descriptor
        payload = d.packed()
        if len(payload) != nbytes:
            raise DatabaseFormatError("descriptor payload width mismatch")
        out.write(struct.pack(
            "<q3d2d2d",
            rec.intersection_id,
            rec.global_pose.x, rec.global_pose.y, rec.global_pose.theta,
            d.refined_point.u, d.refined_point.v,
            float(d.orientation[0]), float(d.orientation[1]),
        ))
        out.write(payload)
    return out.getvalue()


def load(blob: bytes) -> DescriptorDatabase:
    buf = io.BytesIO(blob)

    def take(n: int) -> bytes:
        b = buf.read(n)
        if len(b) != n:
            raise DatabaseFormatError("truncated database file")
        return b

    if take(4) != _MAGIC:
        raise DatabaseFormatError("bad magic bytes; not an .ikdb file")
    (version,) = struct.unpack("<I", take(4))
    if version != _VERSION:
        raise DatabaseFormatError(f"unsupported version {version}")
    fp = Fingerprint.unpack(take(struct.calcsize("<5d2i")))
    (count,) = struct.unpack("<I", take(4))
    nbytes = (fp.q_bits + 7) // 8
    db = DescriptorDatabase(fp)
    head = struct.calcsize("<q3d2d2d")
    for _ in range(count):
        iid, px, py, pt, ru, rv, ox, oy = struct.unpack("<q3d2d2d", take(head))
        payload = take(nbytes)
        desc = Descriptor.from_packed(payload, fp.q_bits, PixelPoint(ru, rv),
                                      np.array([ox, oy]), source=f"map:{iid}")
        db.records.append(IntersectionRecord(iid, Pose2(px, py, pt), desc))
    if buf.read(1):
        raise DatabaseFormatError("trailing bytes after last record")
    return db


def save_file(db: DescriptorDatabase, path: str) -> None:
    with open(path, "wb") as f:
        f.write(save(db))


def load_file(path: str) -> DescriptorDatabase:
    with open(path, "rb") as f:
        return load(f.read())
