"""serve -> alerts (empty) -> gateway -> alerts -> restart, through the binary."""

import json
import re
import signal
import subprocess
import sys
import tempfile
from pathlib import Path

UMHMSE, DATA = sys.argv[1], Path(sys.argv[2])
TOKEN = "cli-token"


def run(*args):
    return subprocess.run([UMHMSE, *args], capture_output=True, text=True, timeout=60)


def start(state):
    proc = subprocess.Popen(
        [UMHMSE, "serve", "--port", "0", "--cell-db", str(DATA / "cells.csv"), "--state-dir", str(state),
         "--token", TOKEN],
        stdout=subprocess.PIPE, text=True)
    line = proc.stdout.readline()
    m = re.search(r"listening on (http://[\d.]+:\d+)", line)
    assert m, line
    return proc, m.group(1)


def stop(proc):
    proc.send_signal(signal.SIGTERM)
    assert proc.wait(timeout=10) == 0


def alerts(url):
    r = run("alerts", "--server-url", url, "--token", TOKEN, "--lines")
    assert r.returncode == 0, r.stderr
    return [json.loads(l) for l in r.stdout.splitlines()]


with tempfile.TemporaryDirectory() as tmp:
    state = Path(tmp) / "state"
    proc, url = start(state)
    try:
        r = run("alerts", "--server-url", url, "--token", TOKEN)
        assert r.returncode == 0, r.stderr
        assert r.stdout.splitlines() == [r.stdout.splitlines()[0]] and r.stdout.startswith("ALERT"), r.stdout

        r = run("alerts", "--server-url", url, "--token", "wrong")
        assert r.returncode != 0 and "401" in r.stderr, r.stderr

        r = run("gateway", "--config", str(DATA / "gateway.json"), "--scenario", str(DATA / "desaturation.json"),
                "--seed", "7", "--server-url", url, "--token", TOKEN)
        assert r.returncode == 0, r.stderr
        report = json.loads(r.stdout)
        assert report["observed"] == 1800 and report["pending"] == 0, report
        assert report["delivered"] == report["sent"], report

        before = alerts(url)
        kinds = sorted(a["kind"] for a in before)
        assert kinds.count("low_spo2") == 1 and kinds.count("fall") == 1, kinds
        low = next(a for a in before if a["kind"] == "low_spo2")
        assert low["place"]["place_id"] == "home-oran", low
    finally:
        stop(proc)

    proc, url = start(state)
    try:
        assert alerts(url) == before
    finally:
        stop(proc)

print("live flow ok")
