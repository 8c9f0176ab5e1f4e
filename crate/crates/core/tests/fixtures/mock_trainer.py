"""Stand-in trainer speaking the bridge protocol.

Usage: mock_trainer.py [--behavior NAME] [--samples N] --workdir DIR

Writes random pooled features (one column per stage channel) whose first
stage is correlated with the labels, then marks the run done.
"""
import argparse
import json
import os
import random
import struct
import sys
import time


def write_status(workdir, state, **extra):
    tmp = os.path.join(workdir, "status.json.tmp")
    with open(tmp, "w") as f:
        json.dump({"state": state, **extra}, f)
    os.replace(tmp, os.path.join(workdir, "status.json"))


def write_bundle(workdir, widths, samples, classes, rng, poison=False):
    labels = [i % classes for i in range(samples)]
    rng.shuffle(labels)
    stages = []
    for index, cols in enumerate(widths):
        name = f"stage_{index}.swsf"
        values = []
        for r in range(samples):
            for c in range(cols):
                v = rng.gauss(0.0, 1.0)
                if index == 0:
                    v += labels[r]
                values.append(v)
        if poison and index == len(widths) - 1:
            values[-1] = float("nan")
        with open(os.path.join(workdir, name), "wb") as f:
            f.write(b"SWSF" + struct.pack("<IQQ", 1, samples, cols))
            f.write(struct.pack(f"<{len(values)}f", *values))
        stages.append({"index": index, "rows": samples, "cols": cols, "file": name})
    with open(os.path.join(workdir, "labels.swsl"), "wb") as f:
        f.write(b"SWSL" + struct.pack("<IQ", 1, samples))
        f.write(struct.pack(f"<{samples}I", *labels))
    with open(os.path.join(workdir, "bundle.json"), "w") as f:
        json.dump({"stages": stages, "labels_file": "labels.swsl", "num_classes": classes}, f)
    return stages


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--workdir", required=True)
    parser.add_argument("--behavior", default="ok")
    parser.add_argument("--samples", type=int, default=256)
    args = parser.parse_args()

    with open(os.path.join(args.workdir, "request.json")) as f:
        request = json.load(f)
    arch = request["architecture"]
    widths = [s["channels"] for s in arch["stages"]]
    classes = arch["num_classes"]
    rng = random.Random(request["seed"] * 1_000_003 + sum(s["modules"] for s in arch["stages"]))
    print(f"training {[s['modules'] for s in arch['stages']]} for {request['epochs']} epochs")
    write_status(args.workdir, "running")

    behavior = args.behavior
    if behavior == "crash":
        print("out of memory", file=sys.stderr)
        sys.exit(3)
    if behavior == "report_failure":
        write_status(args.workdir, "failed", error="loss diverged")
        return
    if behavior == "hang":
        time.sleep(60)
    if behavior == "check_donor":
        donor = request.get("donor")
        if donor is None or not os.path.exists(os.path.join(args.workdir, donor["plan_file"])):
            print("missing donor plan", file=sys.stderr)
            sys.exit(4)

    stages = write_bundle(args.workdir, widths, args.samples, classes, rng, poison=behavior == "nan")
    if behavior == "truncate":
        path = os.path.join(args.workdir, stages[-1]["file"])
        with open(path, "rb+") as f:
            f.truncate(os.path.getsize(path) - 4)
    if behavior == "no_status":
        os.remove(os.path.join(args.workdir, "status.json"))
        return
    write_status(args.workdir, "done", accuracy=0.5, wall_seconds=0.1)


if __name__ == "__main__":
    main()
