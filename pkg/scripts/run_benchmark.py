#!/usr/bin/env python3
"""Submission-latency and analysis-time benchmark.

Boots the platform on loopback, provisions the BFI-10 example study,
submits synthetic participations for each sample size, then completes
the study and times the analysis. Writes one CSV per sample size plus
a summary CSV.

    python scripts/run_benchmark.py --out results/ --sizes 10 100 1000
"""

import argparse
import csv
import sys
import tempfile
import threading
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import uvicorn

from peqes import crypto
from peqes.bfi10 import bfi10_spec
from peqes.clients import (
    BoardClient,
    ClientError,
    ParticipantClient,
    ResearcherClient,
    TrustAnchor,
)
from peqes.enclave import SimBackendConfig, SimEnclave, measure
from peqes.loadgen import run_loadgen, write_csv
from peqes.protocol import TrustedCore
from peqes.service import create_app


def serve(core, port: int):
    app = create_app(core)
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error", access_log=False)
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    while not server.started:
        time.sleep(0.01)
    return server, thread


def free_port() -> int:
    import socket

    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("benchmark-results"))
    parser.add_argument("--sizes", type=int, nargs="+", default=[10, 100, 1000])
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    measurement = measure(b"peqes-benchmark-core")
    enclave = SimEnclave(SimBackendConfig.generate(measurement))
    board_keys = crypto.generate_signing_keypair()
    researcher_keys = crypto.generate_signing_keypair()

    summary_rows = []
    for n in args.sizes:
        with tempfile.TemporaryDirectory() as data_dir:
            core = TrustedCore(enclave, data_dir, board_public=board_keys.public)
            port = free_port()
            server, thread = serve(core, port)
            url = f"http://127.0.0.1:{port}"
            try:
                researcher = ResearcherClient(url, researcher_keys)
                board = BoardClient(
                    url, board_keys, TrustAnchor(measurement, enclave.manufacturer_public)
                )
                study_id = researcher.register(bfi10_spec(researcher_keys.public))["study_id"]
                board.approve(study_id)
                researcher.open(study_id)

                participant = ParticipantClient(url, board_public=board_keys.public)
                result = run_loadgen(participant, study_id, n, seed=args.seed)

                analysis_started = time.perf_counter()
                analysis_status = "ok"
                try:
                    researcher.complete(study_id)
                except ClientError as err:
                    analysis_status = err.code
                analysis_s = time.perf_counter() - analysis_started
            finally:
                server.should_exit = True
                thread.join(timeout=5)

        csv_path = args.out / f"latency-n{n}.csv"
        write_csv(result, csv_path, analysis_seconds=analysis_s)
        stats = result.summary
        summary_rows.append([n, f"{stats['mean_ms']:.3f}", f"{stats['p50_ms']:.3f}",
                             f"{stats['p99_ms']:.3f}", f"{analysis_s:.3f}", analysis_status])
        print(
            f"n={n:5d}  mean={stats['mean_ms']:7.2f}ms  p50={stats['p50_ms']:7.2f}ms  "
            f"p99={stats['p99_ms']:7.2f}ms  analysis={analysis_s:7.3f}s  [{analysis_status}]"
        )

    with open(args.out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "mean_ms", "p50_ms", "p99_ms", "analysis_s", "analysis_status"])
        writer.writerows(summary_rows)
    print(f"wrote {args.out}/summary.csv")


if __name__ == "__main__":
    main()
