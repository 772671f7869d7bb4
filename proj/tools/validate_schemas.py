#!/usr/bin/env python3
"""Runs every nw command and inspector endpoint and validates the JSON they
produce against docs/schemas. Usage: validate_schemas.py <nw binary> <schema dir>"""

import json
import pathlib
import re
import subprocess
import sys
import tempfile
import urllib.error
import urllib.request

from jsonschema import Draft202012Validator
from referencing import Registry, Resource
from referencing.jsonschema import DRAFT202012


def load_registry(schema_dir):
    resources = []
    for path in sorted(schema_dir.glob("*.schema.json")):
        contents = json.loads(path.read_text())
        Draft202012Validator.check_schema(contents)
        resources.append((path.name, Resource.from_contents(contents, default_specification=DRAFT202012)))
    return Registry().with_resources(resources)


class Checker:
    def __init__(self, schema_dir):
        self.registry = load_registry(schema_dir)
        self.checked = 0
        self.failures = []

    def check(self, label, document, ref):
        validator = Draft202012Validator({"$ref": ref}, registry=self.registry)
        errors = sorted(validator.iter_errors(document), key=lambda e: list(e.path))
        self.checked += 1
        for e in errors:
            self.failures.append(f"{label}: {'/'.join(map(str, e.path))}: {e.message}")


def run(nw, cwd, *args, expect=0):
    proc = subprocess.run([nw, *args], cwd=cwd, capture_output=True, text=True)
    if proc.returncode != expect:
        sys.exit(f"nw {' '.join(args)} exited {proc.returncode}, expected {expect}\n{proc.stderr}")
    return proc


def read(path):
    return json.loads(pathlib.Path(path).read_text())


def cli_outputs(nw, work, checker):
    def nwrun(*args, expect=0):
        return run(nw, work, *args, expect=expect)

    nwrun("generate", "blobs", "--per-class", "30", "--seed", "1", "--fractions", "0.6,0.2,0.2", "--out", "d.csv")
    nwrun("train", "--data", "d.csv", "--steps", "30", "--log-every", "10", "--seed", "1", "--out", "m.json")
    nwrun("train", "--data", "d.csv", "--head", "fc", "--steps", "30", "--seed", "1", "--out", "fc.json")
    nwrun("train", "--data", "d.csv", "--head", "fc", "--steps", "30", "--lr", "1e200", "--seed", "1",
          "--out", "bad.json", expect=4)
    nwrun("eval", "--checkpoint", "m.json", "--data", "d.csv", "--out", "eval.json")
    nwrun("eval", "--checkpoint", "m.json", "--data", "d.csv", "--mode", "cluster", "--k", "3", "--seed", "2",
          "--bins", "5", "--out", "eval_cluster.json")
    nwrun("eval", "--checkpoint", "fc.json", "--data", "d.csv", "--out", "eval_fc.json")
    nwrun("sweep-k", "--checkpoint", "m.json", "--data", "d.csv", "--seed", "2", "--out", "sweep.json")
    nwrun("influence", "--checkpoint", "m.json", "--data", "d.csv", "--query-id", "blob-3", "--out", "infl.json")
    # With one entry per class, the query's own-class entry has infinite influence.
    nwrun("influence", "--checkpoint", "m.json", "--data", "d.csv", "--query-id", "blob-3", "--mode", "random",
          "--k", "1", "--seed", "2", "--top", "99", "--out", "infl_inf.json")
    nwrun("calibrate", "--checkpoint", "m.json", "--data", "d.csv", "--out", "cal.json")

    for name in ["eval.json", "eval_cluster.json", "eval_fc.json"]:
        checker.check(name, read(work / name), "eval.schema.json")
    if "fc" not in read(work / "eval_fc.json"):
        checker.failures.append("eval_fc.json: missing fc metrics")
    checker.check("sweep.json", read(work / "sweep.json"), "sweep.schema.json")
    checker.check("infl.json", read(work / "infl.json"), "influence.schema.json")
    inf_doc = read(work / "infl_inf.json")
    checker.check("infl_inf.json", inf_doc, "influence.schema.json")
    if not any(r["influence"] == "inf" for r in inf_doc["helpful"]):
        checker.failures.append("infl_inf.json: expected an \"inf\" influence")
    checker.check("cal.json", read(work / "cal.json"), "calibrate.schema.json")
    for name in ["m.json", "fc.json"]:
        checker.check(name, read(work / name), "checkpoint.schema.json")
    for log in ["m.json.log.jsonl", "fc.json.log.jsonl", "bad.json.log.jsonl"]:
        lines = (work / log).read_text().splitlines()
        for i, line in enumerate(lines):
            checker.check(f"{log}:{i + 1}", json.loads(line), "train_log_line.schema.json")
    if "error" not in json.loads((work / "bad.json.log.jsonl").read_text().splitlines()[-1]):
        checker.failures.append("bad.json.log.jsonl: divergent run did not end with an error line")
    for manifest in sorted(work.glob("*.manifest.json")):
        checker.check(manifest.name, read(manifest), "manifest.schema.json")


def request(base, method, path, body=None):
    data = None if body is None else json.dumps(body).encode()
    req = urllib.request.Request(base + path, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as e:
        return e.code, json.loads(e.read())


def api_outputs(nw, work, checker):
    proc = subprocess.Popen([nw, "serve", "--checkpoint", "m.json", "--data", "d.csv", "--port", "0"], cwd=work,
                            stderr=subprocess.PIPE, text=True)
    try:
        match = re.search(r"serving on (http://\S+)", proc.stderr.readline())
        if not match:
            sys.exit("nw serve did not report its address")
        base = match.group(1)
        api = "api.schema.json#/$defs/"
        calls = [
            ("GET", "/api/summary", None, 200, api + "summary"),
            ("GET", "/api/queries?limit=5", None, 200, api + "queries"),
            ("GET", "/api/queries?sort=id&offset=3", None, 200, api + "queries"),
            ("GET", "/api/predict/blob-3?top=4", None, 200, api + "predict"),
            ("GET", "/api/influence/blob-3", None, 200, "influence.schema.json"),
            ("GET", "/api/reliability?bins=7", None, 200, api + "reliability"),
            ("GET", "/api/exclusions", None, 200, api + "exclusions"),
            ("POST", "/api/exclusions", {"add": ["blob-4", "blob-5"]}, 200, api + "exclusions"),
            ("POST", "/api/exclusions", {"remove": ["blob-5"]}, 200, api + "exclusions"),
            ("GET", "/api/summary", None, 200, api + "summary"),
            ("DELETE", "/api/exclusions", None, 200, api + "exclusions"),
            ("GET", "/api/predict/nope", None, 404, api + "error"),
            ("GET", "/api/reliability?bins=0", None, 400, api + "error"),
            ("POST", "/api/exclusions", {"add": ["nope"]}, 400, api + "error"),
        ]
        for method, path, body, status, ref in calls:
            got, doc = request(base, method, path, body)
            label = f"{method} {path}"
            if got != status:
                checker.failures.append(f"{label}: status {got}, expected {status}")
            checker.check(label, doc, ref)
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def main():
    nw, schema_dir = str(pathlib.Path(sys.argv[1]).resolve()), pathlib.Path(sys.argv[2])
    checker = Checker(schema_dir)
    with tempfile.TemporaryDirectory() as tmp:
        work = pathlib.Path(tmp)
        cli_outputs(nw, work, checker)
        api_outputs(nw, work, checker)
    for failure in checker.failures:
        print("FAIL", failure)
    print(f"{checker.checked} documents validated, {len(checker.failures)} failures")
    return 1 if checker.failures else 0


if __name__ == "__main__":
    sys.exit(main())
