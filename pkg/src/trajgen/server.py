"""Streaming sample server: freshly generated samples over TCP on demand.

Pull-based protocol (magic ``TJF1``, little-endian, length-prefixed
frames): a client sends a fixed-size batch request carrying a base seed
and request index, the server answers with one frame per record. Record
seeds derive purely from (base seed, request index, slot), so identical
requests produce identical bytes for every client, and no client can
perturb another's stream. With a real dataset attached, batches
interleave real and synthetic records at the requested mix ratio
(balanced within one record).

Full frame layout: docs/formats.md.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
from dataclasses import asdict

import numpy as np

from trajgen.chain import MarkovChain
from trajgen.dataset_io import config_hash, read_dataset
from trajgen.errors import DataError
from trajgen.mapgen import MapGenConfig
from trajgen.samples import MultimodalSample, SampleConfig, generate_sample

log = logging.getLogger(__name__)

MAGIC = b"TJF1"
PROTOCOL_VERSION = 1
MSG_REQUEST_BATCH = 1

REQUEST_SIZE = 40
_REQUEST_FMT = "<4sHBBIQQQf"

RECORD_SYNTHETIC = 1
RECORD_REAL = 2
RECORD_ERROR = 255

ERR_VERSION = 1
ERR_MALFORMED = 2
ERR_CONFIG = 3
ERR_GENERATION = 4

_SERVER_STREAM_KEY = 12  # matches seeds._STREAM_IDS["server"]


def record_seed(base_seed: int, request_index: int, slot: int) -> int:
    """Deterministic per-record seed; identity of the client never enters."""
    key = (_SERVER_STREAM_KEY, (request_index >> 32) & 0xFFFFFFFF,
           request_index & 0xFFFFFFFF, slot)
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=key)
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def slot_is_synthetic(slot: int, mix_ratio: float) -> bool:
    """Bresenham-style interleave: synthetic fraction ``mix_ratio`` per
    batch, balanced within one record."""
    return int((slot + 1) * mix_ratio) - int(slot * mix_ratio) == 1


def encode_sample_record(sample: MultimodalSample, kind: int) -> bytes:
    smap = sample.map
    parts = [
        struct.pack("<BHH", kind, smap.height, smap.width),
        smap.classes.tobytes(),
        np.ascontiguousarray(sample.past, dtype="<f4").tobytes(),
        struct.pack("<B", sample.n_futures),
    ]
    for fut in sample.futures:
        parts.append(np.ascontiguousarray(fut, dtype="<f4").tobytes())
    parts.append(struct.pack("<Q", sample.meta.seed & 0xFFFFFFFFFFFFFFFF))
    return b"".join(parts)


def encode_error_record(code: int, message: str) -> bytes:
    msg = message.encode("utf-8")[:65535]
    return struct.pack("<BHH", RECORD_ERROR, code, len(msg)) + msg


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        self.request.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        srv: SampleServer = self.server  # type: ignore[assignment]
        while True:
            raw = _recv_exact(self.request, REQUEST_SIZE)
            if raw is None:
                return
            try:
                magic, version, msg_type, _flags, batch, base_seed, req_index, \
                    cfg_hash, mix = struct.unpack(_REQUEST_FMT, raw)
            except struct.error:
                _send_frame(self.request, encode_error_record(ERR_MALFORMED,
                                                              "bad request"))
                return
            if magic != MAGIC or version != PROTOCOL_VERSION:
                _send_frame(self.request, encode_error_record(
                    ERR_VERSION, f"expected {MAGIC!r} v{PROTOCOL_VERSION}"))
                return
            if msg_type != MSG_REQUEST_BATCH or batch < 1:
                _send_frame(self.request, encode_error_record(ERR_MALFORMED,
                                                              "bad batch request"))
                continue
            if cfg_hash != 0 and cfg_hash != srv.config_hash:
                _send_frame(self.request, encode_error_record(
                    ERR_CONFIG, "generator config hash mismatch"))
                continue
            if not srv.real_samples:
                mix = 1.0
            mix = min(max(float(mix), 0.0), 1.0)
            for slot in range(batch):
                _send_frame(self.request, srv.make_record(base_seed, req_index, slot, mix))


class SampleServer(socketserver.ThreadingTCPServer):
    """Serves generated (and optionally real) samples to training loops."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, bind_address, chain: MarkovChain, map_cfg: MapGenConfig,
                 sample_cfg: SampleConfig, real_dataset=None):
        super().__init__(bind_address, _Handler)
        self.chain = chain
        self.map_cfg = map_cfg
        self.sample_cfg = sample_cfg
        self.config_hash = config_hash({"map": asdict(map_cfg),
                                        "sample": asdict(sample_cfg)})
        self.real_samples: list[MultimodalSample] = []
        if real_dataset is not None:
            self.real_samples, _ = read_dataset(real_dataset)
            log.info("attached real dataset with %d samples", len(self.real_samples))

    def make_record(self, base_seed: int, request_index: int, slot: int,
                    mix: float) -> bytes:
        seed = record_seed(base_seed, request_index, slot)
        try:
            if self.real_samples and not slot_is_synthetic(slot, mix):
                sample = self.real_samples[seed % len(self.real_samples)]
                return encode_sample_record(sample, RECORD_REAL)
            sample = generate_sample(self.chain, self.map_cfg, self.sample_cfg, seed)
            return encode_sample_record(sample, RECORD_SYNTHETIC)
        except Exception as exc:  # per-record error frame, stream continues
            log.warning("record generation failed (seed %d): %s", seed, exc)
            return encode_error_record(ERR_GENERATION, str(exc))

    def serve_in_thread(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def _send_frame(sock, payload: bytes) -> None:
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def _recv_exact(sock, n: int) -> bytes | None:
    chunks = []
    remaining = n
    while remaining:
        data = sock.recv(remaining)
        if not data:
            return None
        chunks.append(data)
        remaining -= len(data)
    return b"".join(chunks)


class StreamClient:
    """Minimal blocking client for the sample stream protocol."""

    def __init__(self, host: str, port: int, past_points: int = 20,
                 future_points: int = 40):
        self.past_points = past_points
        self.future_points = future_points
        self.sock = socket.create_connection((host, port))
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def close(self):
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request_batch_raw(self, batch_size: int, base_seed: int,
                          request_index: int, mix_ratio: float = 1.0,
                          cfg_hash: int = 0) -> list[bytes]:
        req = struct.pack(_REQUEST_FMT, MAGIC, PROTOCOL_VERSION,
                          MSG_REQUEST_BATCH, 0, batch_size, base_seed,
                          request_index, cfg_hash, mix_ratio)
        self.sock.sendall(req)
        frames = []
        for _ in range(batch_size):
            header = _recv_exact(self.sock, 4)
            if header is None:
                raise DataError("server closed the connection")
            (length,) = struct.unpack("<I", header)
            payload = _recv_exact(self.sock, length)
            if payload is None:
                raise DataError("truncated frame")
            frames.append(payload)
            if payload and payload[0] == RECORD_ERROR:
                rec = decode_error(payload)
                if rec["code"] in (ERR_VERSION, ERR_MALFORMED):
                    raise DataError(f"server error {rec['code']}: {rec['message']}")
        return frames

    def request_batch(self, batch_size: int, base_seed: int, request_index: int,
                      mix_ratio: float = 1.0, cfg_hash: int = 0) -> list[dict]:
        frames = self.request_batch_raw(batch_size, base_seed, request_index,
                                        mix_ratio, cfg_hash)
        return [self.parse_record(f) for f in frames]

    def parse_record(self, payload: bytes) -> dict:
        kind = payload[0]
        if kind == RECORD_ERROR:
            return decode_error(payload)
        h, w = struct.unpack_from("<HH", payload, 1)
        off = 5
        classes = np.frombuffer(payload, dtype=np.uint8, count=h * w,
                                offset=off).reshape(h, w).copy()
        off += h * w
        p = self.past_points
        past = np.frombuffer(payload, dtype="<f4", count=p * 2,
                             offset=off).reshape(p, 2).astype(np.float64)
        off += p * 8
        n_gt = payload[off]
        off += 1
        f = self.future_points
        futures = []
        for _ in range(n_gt):
            fut = np.frombuffer(payload, dtype="<f4", count=f * 2,
                                offset=off).reshape(f, 2).astype(np.float64)
            futures.append(fut)
            off += f * 8
        (seed,) = struct.unpack_from("<Q", payload, off)
        return {"kind": kind, "map": classes, "past": past,
                "futures": futures, "seed": seed}


def decode_error(payload: bytes) -> dict:
    code, msg_len = struct.unpack_from("<HH", payload, 1)
    return {"kind": RECORD_ERROR, "code": code,
            "message": payload[5:5 + msg_len].decode("utf-8")}
