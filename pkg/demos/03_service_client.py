"""Talk to the detection service with a plain socket.

Start a server first, e.g.

    python -m drow synth --out data --num-scans 200
    python -m drow train --data data --out model.npz --epochs 5
    python -m drow serve --checkpoint model.npz --port 7878

then run this script.  Each request is one line ``seq,r0,...,r449`` and each
reply one JSON line.
"""
import json
import socket
import sys

from drow.server import scan_line
from drow.synthetic import SyntheticSceneConfig, synthesize

port = int(sys.argv[1]) if len(sys.argv) > 1 else 7878
frames = synthesize(SyntheticSceneConfig(num_scans=5, seed=11))

with socket.create_connection(("127.0.0.1", port)) as sock:
    reader = sock.makefile("rb")
    for k, frame in enumerate(frames):
        sock.sendall((scan_line(k, frame.scan.ranges) + "\n").encode())
        reply = json.loads(reader.readline())
        truth = [(a.klass.label, tuple(round(v, 2) for v in a.position)) for a in frame.annotations]
        print(f"seq {reply['seq']}: {len(reply['detections'])} detections, truth {truth}")
        for d in reply["detections"]:
            print(f"    {d['class']:>10s} ({d['x']:.2f}, {d['y']:.2f}) score {d['score']:.2f}")

    # A malformed request gets an error line back and the connection stays usable.
    sock.sendall(b"99,1.0,2.0\n")
    print(json.loads(reader.readline()))
