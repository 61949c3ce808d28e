"""Line-oriented TCP detection service.

Each request is one line ``seq,r0,...,r{N-1}``; each response is one JSON line
``{"seq": ..., "detections": [{"x", "y", "class", "score"}, ...]}``.  A bad request
gets ``{"error": ...}`` back and the connection stays open.
"""
from __future__ import annotations

import json
import logging
import math
import socketserver
import threading

import numpy as np

from .geometry import Scan
from .pipeline import DrowDetector

log = logging.getLogger(__name__)

MAX_LINE = 64 * 1024


class RequestError(ValueError):
    pass


def parse_request(line: str, num_beams: int) -> Scan:
    parts = line.strip().split(",")
    if not parts[0]:
        raise RequestError("empty request")
    try:
        seq = int(parts[0])
    except ValueError:
        raise RequestError(f"bad sequence number {parts[0][:32]!r}") from None
    if len(parts) - 1 != num_beams:
        raise RequestError(f"expected {num_beams} ranges, got {len(parts) - 1}")
    try:
        ranges = np.array([float(p) for p in parts[1:]])
    except ValueError as e:
        raise RequestError(f"bad range value: {e}") from None
    return Scan(ranges, seq)


def format_response(seq: int, detections) -> str:
    dets = [{"x": round(d.position[0], 4), "y": round(d.position[1], 4),
             "class": d.klass.label, "score": round(d.score, 6)} for d in detections]
    return json.dumps({"seq": seq, "detections": dets}, separators=(",", ":"))


def format_error(message: str, seq=None) -> str:
    out = {"error": message}
    if seq is not None:
        out["seq"] = seq
    return json.dumps(out, separators=(",", ":"))


def handle_line(detector: DrowDetector, line: str) -> str:
    """Response line (without newline) for one request line."""
    try:
        scan = parse_request(line, detector.sensor.num_beams)
    except RequestError as e:
        return format_error(str(e))
    try:
        return format_response(scan.seq_id, detector.detect(scan))
    except Exception as e:  # keep serving other requests
        log.exception("detection failed for seq %s", scan.seq_id)
        return format_error(f"{type(e).__name__}: {e}", scan.seq_id)


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        detector = self.server.detector
        while True:
            raw = self.rfile.readline(MAX_LINE + 1)
            if not raw:
                return
            if len(raw) > MAX_LINE and not raw.endswith(b"\n"):
                # drain the rest of the oversized line before answering
                while raw and not raw.endswith(b"\n"):
                    raw = self.rfile.readline(MAX_LINE + 1)
                reply = format_error(f"line exceeds {MAX_LINE} bytes")
            else:
                text = raw.decode("utf-8", errors="replace")
                if not text.strip():
                    continue
                reply = handle_line(detector, text)
            try:
                self.wfile.write(reply.encode() + b"\n")
            except (BrokenPipeError, ConnectionResetError):
                return


class DetectionServer(socketserver.ThreadingTCPServer):
    """One thread per connection, all sharing one read-only detector."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, detector: DrowDetector, host: str = "127.0.0.1", port: int = 0):
        self.detector = detector
        super().__init__((host, port), _Handler)

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


def scan_line(seq: int, ranges) -> str:
    """Request line for ``ranges``; the client-side counterpart of :func:`parse_request`."""
    return f"{seq}," + ",".join(f"{r:.4f}" if math.isfinite(r) else str(r) for r in ranges)
