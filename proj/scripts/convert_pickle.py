#!/usr/bin/env python3
"""Convert a piano-roll pickle (dict of train/valid/test, each a list of
sequences of MIDI-pitch tuples) to the JSON dataset format read by rnnlab.

Note index = MIDI pitch - 21, so A0..C8 map to 0..87.
"""
import argparse
import json
import pickle
import sys

MIDI_OFFSET = 21
NOTES = 88


def convert(data):
    out = {}
    for split in ("train", "valid", "test"):
        if split not in data:
            continue
        seqs = []
        for k, seq in enumerate(data[split]):
            frames = []
            for t, frame in enumerate(seq):
                notes = sorted({int(p) - MIDI_OFFSET for p in frame})
                bad = [n for n in notes if not 0 <= n < NOTES]
                if bad:
                    raise ValueError(f"{split} sequence {k} frame {t}: pitch {bad[0] + MIDI_OFFSET} outside 21..108")
                frames.append(notes)
            seqs.append(frames)
        out[split] = seqs
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("pickle")
    ap.add_argument("out")
    args = ap.parse_args()
    with open(args.pickle, "rb") as f:
        data = pickle.load(f, encoding="latin1")
    converted = convert(data)
    with open(args.out, "w") as f:
        json.dump(converted, f, separators=(",", ":"))
    counts = ", ".join(f"{s}={len(v)}" for s, v in converted.items())
    print(f"wrote {args.out}: {counts}", file=sys.stderr)


if __name__ == "__main__":
    main()
