import json
import socket

import numpy as np
import pytest

from drow.geometry import SensorConfig
from drow.nn.model import drow_cnn, init
from drow.pipeline import DrowDetector
from drow.preprocess import PreprocessConfig
from drow.server import (MAX_LINE, DetectionServer, RequestError, format_response, handle_line,
                         parse_request, scan_line)
from drow.synthetic import SyntheticSceneConfig, synthesize


@pytest.fixture(scope="module")
def detector():
    model = init(drow_cnn(), seed=3)
    rng = np.random.default_rng(0)
    # a random head so that outputs vary from scan to scan
    for name, p in model.named_params():
        if not p.any():
            p[...] = rng.normal(0, 0.3, p.shape)
    return DrowDetector(model, SensorConfig(), PreprocessConfig())


@pytest.fixture(scope="module")
def scans():
    return [f.scan for f in synthesize(SyntheticSceneConfig(num_scans=6, scans_per_scene=3, seed=8))]


@pytest.fixture
def server(detector):
    srv = DetectionServer(detector)
    srv.start_background()
    yield srv
    srv.shutdown()
    srv.server_close()


def _connect(server):
    s = socket.create_connection(("127.0.0.1", server.port), timeout=10)
    return s, s.makefile("rb")


def _ask(sock, reader, line):
    sock.sendall(line.encode() + b"\n")
    return json.loads(reader.readline())


def test_parse_request_round_trip(scans):
    line = scan_line(4, scans[0].ranges)
    scan = parse_request(line, 450)
    assert scan.seq_id == 4
    np.testing.assert_allclose(scan.ranges, scans[0].ranges, atol=5e-5)


@pytest.mark.parametrize("line, fragment", [
    ("", "empty"),
    ("abc,1,2", "sequence"),
    ("1," + ",".join(["1.0"] * 449), "expected 450"),
    ("1," + ",".join(["1.0"] * 449) + ",x", "bad range"),
])
def test_parse_request_errors(line, fragment):
    with pytest.raises(RequestError, match=fragment):
        parse_request(line, 450)


def test_handle_line_matches_detector(detector, scans):
    reply = json.loads(handle_line(detector, scan_line(9, scans[1].ranges)))
    dets = detector.detect(parse_request(scan_line(9, scans[1].ranges), 450))
    assert reply == json.loads(format_response(9, dets))
    assert reply["seq"] == 9


def test_well_formed_request(server, scans):
    s, r = _connect(server)
    with s:
        reply = _ask(s, r, scan_line(17, scans[0].ranges))
    assert reply["seq"] == 17
    for d in reply["detections"]:
        assert set(d) == {"x", "y", "class", "score"}
        assert d["class"] in ("wheelchair", "walker")


def test_short_request_gets_error_and_connection_survives(server, scans):
    s, r = _connect(server)
    with s:
        err = _ask(s, r, "5," + ",".join(["2.0"] * 449))
        assert "error" in err and "450" in err["error"]
        ok = _ask(s, r, scan_line(6, scans[0].ranges))
    assert ok["seq"] == 6


def test_oversized_line_rejected(server, scans):
    s, r = _connect(server)
    with s:
        err = _ask(s, r, "1," + "9" * (MAX_LINE + 10))
        assert "exceeds" in err["error"]
        ok = _ask(s, r, scan_line(2, scans[0].ranges))
    assert ok["seq"] == 2


def test_two_clients_interleaved(server, detector, scans):
    a, ra = _connect(server)
    b, rb = _connect(server)
    with a, b:
        for k in range(3):
            a.sendall((scan_line(100 + k, scans[k].ranges) + "\n").encode())
            b.sendall((scan_line(200 + k, scans[k + 3].ranges) + "\n").encode())
        got_a = [json.loads(ra.readline()) for _ in range(3)]
        got_b = [json.loads(rb.readline()) for _ in range(3)]
    assert [g["seq"] for g in got_a] == [100, 101, 102]
    assert [g["seq"] for g in got_b] == [200, 201, 202]
    for k in range(3):
        expect = json.loads(handle_line(detector, scan_line(200 + k, scans[k + 3].ranges)))
        assert got_b[k] == expect


def test_port_busy(detector, server):
    with pytest.raises(OSError):
        DetectionServer(detector, port=server.port)
