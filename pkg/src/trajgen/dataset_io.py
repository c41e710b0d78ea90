"""Deterministic serialization of chains, datasets, and prediction files,
plus ingestion of real trajectory splits.

All binary formats are little-endian with magic bytes and are documented
in docs/formats.md. Identical inputs re-serialize byte-identically, which
the manifests' SHA-256 checksums rely on.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
from pathlib import Path

import numpy as np

from trajgen.chain import ClusterModel, MarkovChain
from trajgen.errors import DataError
from trajgen.geometry import Trajectory
from trajgen.mapgen import SemanticMap
from trajgen.samples import MultimodalSample, SampleMeta

log = logging.getLogger(__name__)

CHAIN_MAGIC = b"TJMC"
CHAIN_VERSION = 1
DATASET_MAGIC = b"TJDS"
DATASET_VERSION = 1
DATASET_FORMAT = "trajgen-dataset"
PREDICTIONS_FORMAT = "trajgen-predictions"
PREDICTIONS_VERSION = 1

_FLAG_BITS = {
    "fewer_futures": 1,
    "dropped_far_future": 2,
    "crop_background_fill": 4,
}


def _f64(arr) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f8").tobytes()


def _read_f64(fh, count) -> np.ndarray:
    return np.frombuffer(_read_exact(fh, count * 8), dtype="<f8").copy()


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise DataError("unexpected end of file")
    return data


# ---------------------------------------------------------------------------
# Markov chain files

def save_chain(chain: MarkovChain, path) -> None:
    """Write a chain (clusters, members, states, transition rows, initial
    distribution) to a single self-describing binary file."""
    buf = io.BytesIO()
    c = chain.clusters.n_clusters
    s = chain.n_states
    buf.write(CHAIN_MAGIC)
    buf.write(struct.pack("<IIII", CHAIN_VERSION, chain.order, c, s))
    buf.write(struct.pack("<dd", *chain.clusters.scale))
    buf.write(_f64(chain.clusters.centroids))
    members = chain.clusters.members or [np.empty((0, 2))] * c
    for mem in members:
        buf.write(struct.pack("<Q", len(mem)))
        buf.write(_f64(mem))
    buf.write(np.ascontiguousarray(chain.grams, dtype="<u4").tobytes())
    buf.write(_f64(chain.initial_probs))
    buf.write(struct.pack("<Q", len(chain.transitions)))
    for src in sorted(chain.transitions):
        dests, probs, _ = chain.transitions[src]
        buf.write(struct.pack("<II", src, len(dests)))
        buf.write(np.ascontiguousarray(dests, dtype="<u4").tobytes())
        buf.write(_f64(probs))
    Path(path).write_bytes(buf.getvalue())


def load_chain(path) -> MarkovChain:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4) != CHAIN_MAGIC:
            raise DataError(f"{path}: not a chain file")
        version, order, c, s = struct.unpack("<IIII", _read_exact(fh, 16))
        if version != CHAIN_VERSION:
            raise DataError(f"{path}: unsupported chain version {version}")
        scale = struct.unpack("<dd", _read_exact(fh, 16))
        centroids = _read_f64(fh, c * 2).reshape(c, 2)
        members = []
        for _ in range(c):
            (count,) = struct.unpack("<Q", _read_exact(fh, 8))
            members.append(_read_f64(fh, count * 2).reshape(count, 2))
        grams = np.frombuffer(_read_exact(fh, s * order * 4),
                              dtype="<u4").reshape(s, order).copy()
        initial = _read_f64(fh, s)
        (n_rows,) = struct.unpack("<Q", _read_exact(fh, 8))
        transitions = {}
        for _ in range(n_rows):
            src, n_dest = struct.unpack("<II", _read_exact(fh, 8))
            dests = np.frombuffer(_read_exact(fh, n_dest * 4),
                                  dtype="<u4").astype(np.int64)
            probs = _read_f64(fh, n_dest)
            transitions[int(src)] = (dests, probs, np.cumsum(probs))
    model = ClusterModel(centroids=centroids, members=members, scale=scale)
    return MarkovChain(clusters=model, order=int(order), grams=grams,
                       initial_probs=initial, transitions=transitions)


# ---------------------------------------------------------------------------
# Dataset archives (directory: manifest.json + data.bin)

def _flags_to_bits(flags) -> int:
    bits = 0
    for flag in flags:
        bits |= _FLAG_BITS.get(flag, 0)
    return bits


def _bits_to_flags(bits: int) -> tuple[str, ...]:
    return tuple(name for name, bit in _FLAG_BITS.items() if bits & bit)


def _encode_sample(sample: MultimodalSample) -> bytes:
    buf = io.BytesIO()
    p_len = len(sample.past)
    f_len = len(sample.futures[0])
    smap = sample.map
    buf.write(struct.pack(
        "<QQBBHHHHddd",
        sample.meta.seed, sample.meta.scene_id, sample.n_futures,
        _flags_to_bits(sample.meta.flags), p_len, f_len,
        smap.height, smap.width, smap.resolution,
        smap.origin[0], smap.origin[1],
    ))
    buf.write(_f64(sample.past))
    for fut, branch in zip(sample.futures, sample.meta.branch_indices):
        buf.write(struct.pack("<H", branch))
        buf.write(_f64(fut))
    buf.write(smap.classes.tobytes())
    return buf.getvalue()


def _decode_sample(fh) -> MultimodalSample:
    header = struct.unpack("<QQBBHHHHddd", _read_exact(fh, 50))
    seed, scene_id, n_gt, flag_bits, p_len, f_len, h, w, res, ox, oy = header
    past = _read_f64(fh, p_len * 2).reshape(p_len, 2)
    futures = []
    branches = []
    for _ in range(n_gt):
        (branch,) = struct.unpack("<H", _read_exact(fh, 2))
        branches.append(int(branch))
        futures.append(_read_f64(fh, f_len * 2).reshape(f_len, 2))
    classes = np.frombuffer(_read_exact(fh, h * w), dtype=np.uint8).reshape(h, w).copy()
    meta = SampleMeta(seed=int(seed), scene_id=int(scene_id), n_gt=int(n_gt),
                      branch_indices=tuple(branches),
                      flags=_bits_to_flags(flag_bits))
    smap = SemanticMap(classes, float(res), (float(ox), float(oy)))
    return MultimodalSample(past=past, futures=futures, map=smap, meta=meta)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config: dict) -> int:
    """Stable 64-bit FNV-1a hash of a canonical config snapshot."""
    acc = 0xCBF29CE484222325
    for byte in canonical_json(config).encode("utf-8"):
        acc ^= byte
        acc = (acc * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return acc


def write_dataset(samples, path, config: dict | None = None) -> dict:
    """Serialize samples into ``path/`` (manifest.json + data.bin).

    Returns the manifest. Maps are stored as raw 8-bit class-id grids and
    trajectories as 64-bit floats in meters.
    """
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = []
    data = io.BytesIO()
    data.write(DATASET_MAGIC)
    data.write(struct.pack("<I", DATASET_VERSION))
    count_pos = data.tell()
    data.write(struct.pack("<Q", 0))
    count = 0
    for sample in samples:
        data.write(_encode_sample(sample))
        seeds.append(sample.meta.seed)
        count += 1
    data.seek(count_pos)
    data.write(struct.pack("<Q", count))
    payload = data.getvalue()
    (out_dir / "data.bin").write_bytes(payload)
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "count": count,
        "seeds": seeds,
        "config": config or {},
        "checksum_sha256": hashlib.sha256(payload).hexdigest(),
    }
    (out_dir / "manifest.json").write_text(canonical_json(manifest) + "\n",
                                           encoding="utf-8")
    return manifest


def read_dataset(path, verify: bool = True):
    """Load a dataset archive; returns (samples, manifest)."""
    in_dir = Path(path)
    manifest_path = in_dir / "manifest.json"
    data_path = in_dir / "data.bin"
    if not manifest_path.exists() or not data_path.exists():
        raise DataError(f"{path}: not a dataset archive")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != DATASET_FORMAT:
        raise DataError(f"{path}: unknown dataset format")
    if manifest.get("version") != DATASET_VERSION:
        raise DataError(f"{path}: unsupported dataset version")
    payload = data_path.read_bytes()
    if verify:
        digest = hashlib.sha256(payload).hexdigest()
        if digest != manifest.get("checksum_sha256"):
            raise DataError(f"{path}: checksum mismatch")
    fh = io.BytesIO(payload)
    if _read_exact(fh, 4) != DATASET_MAGIC:
        raise DataError(f"{path}: bad data magic")
    (version,) = struct.unpack("<I", _read_exact(fh, 4))
    if version != DATASET_VERSION:
        raise DataError(f"{path}: unsupported data version {version}")
    (count,) = struct.unpack("<Q", _read_exact(fh, 8))
    samples = [_decode_sample(fh) for _ in range(count)]
    return samples, manifest


def sample_id(index: int) -> str:
    """Stable per-archive sample identifier used by prediction files."""
    return f"{index:06d}"


# ---------------------------------------------------------------------------
# Prediction files (JSON lines)

def write_predictions(path, predictions: dict) -> None:
    """Write per-sample prediction sets (meters, heading-up frame)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json({"format": PREDICTIONS_FORMAT,
                                 "version": PREDICTIONS_VERSION}) + "\n")
        for sid in sorted(predictions):
            trajs = [np.asarray(t, dtype=np.float64).tolist()
                     for t in predictions[sid]]
            fh.write(canonical_json({"sample_id": str(sid),
                                     "trajectories": trajs}) + "\n")


def read_predictions(path) -> dict:
    predictions = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        if header.get("format") != PREDICTIONS_FORMAT:
            raise DataError(f"{path}: not a predictions file")
        if header.get("version") != PREDICTIONS_VERSION:
            raise DataError(f"{path}: unsupported predictions version")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            predictions[rec["sample_id"]] = [
                np.asarray(t, dtype=np.float64) for t in rec["trajectories"]
            ]
    return predictions


# ---------------------------------------------------------------------------
# Real split ingestion

class IngestResult:
    """Accepted (trajectory, optional map) records plus per-file rejects."""

    def __init__(self):
        self.records: list[tuple[Trajectory, SemanticMap | None]] = []
        self.rejected: list[tuple[str, str]] = []

    def __len__(self) -> int:
        return len(self.records)


def _parse_trajectory_file(path: Path) -> Trajectory:
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 3:
            raise DataError(f"line {lineno}: expected 'index x y'")
        try:
            x, y = float(parts[1]), float(parts[2])
        except ValueError as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise DataError(f"line {lineno}: non-finite coordinate")
        rows.append((x, y))
    if len(rows) < 2:
        raise DataError("fewer than 2 valid points")
    return Trajectory(np.array(rows, dtype=np.float64))


def _load_map_image(path: Path, resolution: float) -> SemanticMap:
    from PIL import Image

    with Image.open(path) as img:
        classes = np.asarray(img.convert("L"), dtype=np.uint8)
    if classes.max(initial=0) > 2:
        raise DataError("map image has pixel values outside class ids {0,1,2}")
    h, w = classes.shape
    origin = (-w * resolution / 2.0, h * resolution / 2.0)
    return SemanticMap(classes, resolution, origin)


def ingest_real(split_dir, resolution: float = 0.5) -> IngestResult:
    """Load a directory of per-sample trajectory text files.

    Each ``*.txt`` holds (index, x, y) rows at 10 Hz in meters; an optional
    sibling ``.png`` is a class-id map at ``resolution`` m/px. Malformed
    files are rejected individually with reasons.
    """
    split = Path(split_dir)
    if not split.is_dir():
        raise DataError(f"{split_dir}: not a directory")
    result = IngestResult()
    for txt in sorted(split.glob("*.txt")):
        try:
            traj = _parse_trajectory_file(txt)
        except DataError as exc:
            result.rejected.append((txt.name, str(exc)))
            continue
        smap = None
        png = txt.with_suffix(".png")
        if png.exists():
            try:
                smap = _load_map_image(png, resolution)
            except DataError as exc:
                log.warning("%s: %s (keeping trajectory without map)", png.name, exc)
        result.records.append((traj, smap))
    log.info("ingested %d trajectories (%d rejected) from %s",
             len(result.records), len(result.rejected), split_dir)
    return result
