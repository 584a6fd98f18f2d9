#!/usr/bin/env python3
"""The full interactive acquisition loop, driven headlessly over HTTP.

Simulates a dataset, starts the session service, and scripts what the
browser UI does: look at the range image, click a seed on the board, inspect
the fitted plane, accept three measurements, calibrate, and compare the
result to the dataset's ground truth.
"""

import json
import tempfile
import threading
import urllib.request
from pathlib import Path

import numpy as np

from planecal.cli import main as cli_main
from planecal.formats import load_manifest
from planecal.service import make_session_server
from planecal.solver import evaluate_error
from planecal.formats import isometry_from_dict


def call(base, path, payload=None):
    data = json.dumps(payload).encode() if payload is not None else None
    req = urllib.request.Request(base + path, data=data,
                                 method="POST" if data else "GET")
    if data:
        req.add_header("Content-Type", "application/json")
    with urllib.request.urlopen(req, timeout=10) as resp:
        body = resp.read()
    return json.loads(body) if resp.headers.get("Content-Type", "").startswith(
        "application/json") else body


workdir = Path(tempfile.mkdtemp(prefix="planecal-demo-"))
print(f"working in {workdir}")

print("\n[1] simulate a 5-frame noiseless dataset")
assert cli_main(["simulate", "--output", str(workdir / "ds"), "--seed", "21"]) == 0
manifest_path = workdir / "ds" / "manifest.json"

print("[2] start the session service on an ephemeral port")
server = make_session_server(manifest_path, port=0,
                             output_path=workdir / "session.json")
threading.Thread(target=server.serve_forever, daemon=True).start()
host, port = server.server_address
base = f"http://{host}:{port}"
print(f"    {base}")

state = call(base, "/api/session")
print(f"[3] session state: revision {state['revision']}, "
      f"{state['n_frames']} frames queued")

for round_idx in range(3):
    meta = call(base, "/api/frame")
    blob = call(base, "/api/frame/range.bin")
    grid = np.frombuffer(blob, dtype="<f4").reshape(meta["n_rings"], meta["width"])
    rows, cols = np.nonzero(grid > 0)
    seed = {"ring": int(np.median(rows)), "column": int(np.median(cols)),
            "radius": 30, "revision": call(base, "/api/session")["revision"]}
    fitted = call(base, "/api/seed", seed)
    obs = fitted["observation"]
    print(f"[4.{round_idx}] frame {meta['frame_id']}: seeded ({seed['ring']}, "
          f"{seed['column']}), fit {obs['inlier_count']} inliers, "
          f"rms {1000 * obs['rms_residual']:.3f} mm")
    cam = call(base, "/api/camera_plane")
    print(f"      camera plane d {cam['observation']['plane']['dist']:+.4f} m, "
          f"{len(cam['corners'])} corners, board outline "
          f"{len(cam['board_outline'])} points")
    call(base, "/api/accept", {"revision": fitted["revision"]})

state = call(base, "/api/session")
print(f"[5] {len(state['accepted'])} accepted measurements; calibrating")
report = call(base, "/api/calibrate", {"revision": state["revision"]})
print(f"    converged={report['converged']}, "
      f"translation {np.round(report['extrinsic']['translation'], 6)}")

gt = load_manifest(manifest_path).ground_truth
est = isometry_from_dict(report["extrinsic"])
e_t, e_r = evaluate_error(est, gt)
print(f"[6] vs ground truth: e_t {1000 * e_t:.6f} mm, e_r {e_r:.2e} rad")

print(f"[7] session persisted to {workdir / 'session.json'}; "
      "the calibrate CLI reproduces the same report from it")
server.shutdown()
server.server_close()
