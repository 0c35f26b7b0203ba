"""Shared driver for the end-to-end benchmark pipeline.

Generates the reference corpus, trains all three backends, evaluates each
on the held-out split and writes the comparison table, recording wall-clock
time per stage. Used both by the acceptance suite and by the committed
golden-run artifacts under tests/golden/.
"""

import json
import os
import time

from lidfusion.cli import main

CORPUS_UTTERANCES = 100_000
CORPUS_SEED = 42
BACKENDS = ("baseline", "lattice", "dnn")


def run_pipeline(workdir, threads=None, utterances=CORPUS_UTTERANCES,
                 seed=CORPUS_SEED):
    """Run gen-data -> train x3 -> eval x3 -> compare inside workdir.

    All paths inside manifests are relative to workdir so the artifacts are
    portable. Returns a dict of stage timings (seconds).
    """
    workdir = os.path.abspath(workdir)
    os.makedirs(workdir, exist_ok=True)
    if threads is None:
        threads = os.cpu_count() or 1
    old_cwd = os.getcwd()
    os.chdir(workdir)
    timings = {}
    try:
        t0 = time.monotonic()
        rc = main(["gen-data", "--utterances", str(utterances),
                   "--seed", str(seed), "--out", "corpus.jsonl"])
        assert rc == 0, "gen-data failed"
        timings["gen_data"] = time.monotonic() - t0

        for backend in BACKENDS:
            t0 = time.monotonic()
            rc = main(["train", "--backend", backend, "--data", "corpus.jsonl",
                       "--seed", "0", "--threads", str(threads),
                       "--out", f"{backend}.model.json"])
            assert rc == 0, f"train {backend} failed"
            timings[f"train_{backend}"] = time.monotonic() - t0

        for backend in BACKENDS:
            t0 = time.monotonic()
            rc = main(["eval", "--model", f"{backend}.model.json",
                       "--data", "corpus.jsonl",
                       "--report", f"{backend}.report.json"])
            assert rc == 0, f"eval {backend} failed"
            timings[f"eval_{backend}"] = time.monotonic() - t0

        t0 = time.monotonic()
        rc = main(["compare", "--out", "comparison.json",
                   *(f"{b}.report.json" for b in BACKENDS)])
        assert rc == 0, "compare failed"
        timings["compare"] = time.monotonic() - t0
        timings["total"] = sum(timings.values())
        timings["threads"] = threads
        timings["cpu_count"] = os.cpu_count()
        with open("timings.json", "w") as f:
            json.dump(timings, f, indent=2, sort_keys=True)
            f.write("\n")
    finally:
        os.chdir(old_cwd)
    return timings


if __name__ == "__main__":
    import sys

    out = run_pipeline(sys.argv[1] if len(sys.argv) > 1 else "tests/golden")
    print(json.dumps(out, indent=2, sort_keys=True))
