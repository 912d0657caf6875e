#!/usr/bin/env python3
"""Stand-in encoder bridge speaking the newline-delimited JSON protocol.

Embeddings are simple deterministic functions of the request so the client side
can be checked exactly. Flags select misbehaviours for error-path tests.
"""
import argparse
import json
import sys
import time

p = argparse.ArgumentParser()
p.add_argument("--kind", default="tabular", choices=["tabular", "text"])
p.add_argument("--dim-mode", default="per_example", choices=["per_example", "fixed"])
p.add_argument("--dim", type=int, default=192)
p.add_argument("--short-by", type=int, default=0)
p.add_argument("--error-on", type=int, default=-1)
p.add_argument("--wrong-id", action="store_true")
p.add_argument("--hang", action="store_true")
p.add_argument("--bad-handshake", action="store_true")
p.add_argument("--nan", action="store_true")
p.add_argument("--log")
args = p.parse_args()


def send(obj):
    sys.stdout.write(json.dumps(obj) + "\n")
    sys.stdout.flush()


if args.bad_handshake:
    sys.stdout.write("hello there\n")
    sys.stdout.flush()
    sys.exit(0)

send({"hello": {"name": "fake-bridge", "kind": args.kind, "dim_mode": args.dim_mode, "dim": args.dim}})
log = open(args.log, "a") if args.log else None

for line in sys.stdin:
    if log:
        log.write(line)
        log.flush()
    try:
        req = json.loads(line)
    except json.JSONDecodeError as e:
        send({"id": -1, "error": "malformed request: %s" % e})
        continue
    rid = req.get("id", -1)
    if args.hang:
        time.sleep(3600)
    if rid == args.error_on:
        send({"id": rid, "error": "backend failure on request %d" % rid})
        continue
    if req.get("kind") != args.kind:
        send({"id": rid, "error": "kind mismatch: bridge serves %s" % args.kind})
        continue
    if args.kind == "tabular":
        rows, ys = req["X"], req["y"]
        emb = []
        n = len(rows) if args.dim_mode == "per_example" else 1
        for r in range(n):
            base = sum(rows[r]) + 10 * ys[r]
            emb.extend(base + k for k in range(args.dim))
    else:
        text = req["prompt"]
        emb = [float(len(text) + k) for k in range(args.dim)]
    if args.short_by:
        emb = emb[: len(emb) - args.short_by]
    if args.nan and emb:
        emb[0] = float("nan")
    send({"id": rid + 1 if args.wrong_id else rid, "embedding": emb})
