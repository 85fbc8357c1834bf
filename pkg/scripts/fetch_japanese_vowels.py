#!/usr/bin/env python3
"""Fetch the nine-speaker Japanese vowel corpus and convert it to JSONL.

The source distribution is two plain-text files (ae.train, ae.test) of
space-separated 12-channel cepstrum frames, one utterance per blank-line
separated block. Speakers are implicit in block order: 30 training blocks
per speaker, then per-speaker test counts published with the corpus.

Writes data/japanese_vowels.jsonl with records
  {"id": ..., "label": "speaker1".."speaker9", "series": [[12 floats], ...]}
ready for `taxopretrain run --dataset data/japanese_vowels.jsonl`.

Needs network access to a UCI archive mirror; run it on a connected machine
and copy the JSONL next to the repository if the training host is offline.
"""

import argparse
import json
import sys
import urllib.error
import urllib.request
from pathlib import Path

MIRRORS = (
    "https://archive.ics.uci.edu/ml/machine-learning-databases/JapaneseVowels-mld/",
    "https://archive.ics.uci.edu/machine-learning-databases/JapaneseVowels-mld/",
)

NUM_SPEAKERS = 9
DIM = 12
TRAIN_BLOCKS_PER_SPEAKER = 30
# utterances per speaker in ae.test, in speaker order, as published
TEST_BLOCKS_PER_SPEAKER = (31, 35, 88, 44, 29, 24, 40, 50, 29)


def download(filename: str) -> str:
    last_error = None
    for mirror in MIRRORS:
        url = mirror + filename
        try:
            print(f"fetching {url}", file=sys.stderr)
            with urllib.request.urlopen(url, timeout=60) as response:
                return response.read().decode("ascii")
        except (urllib.error.URLError, OSError) as exc:
            last_error = exc
            print(f"  failed: {exc}", file=sys.stderr)
    raise SystemExit(f"could not download {filename}: {last_error}")


def parse_blocks(text: str) -> list[list[list[float]]]:
    """Split a corpus file into utterances: lists of 12-float frames."""
    blocks: list[list[list[float]]] = []
    current: list[list[float]] = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            if current:
                blocks.append(current)
                current = []
            continue
        values = [float(v) for v in line.split()]
        if len(values) != DIM:
            raise SystemExit(f"expected {DIM} values per frame, got {len(values)}")
        current.append(values)
    if current:
        blocks.append(current)
    return blocks


def label_blocks(blocks, counts, split):
    expected = sum(counts)
    if len(blocks) != expected:
        raise SystemExit(f"{split}: expected {expected} utterances, got {len(blocks)}")
    records = []
    index = 0
    for speaker, count in enumerate(counts, start=1):
        for j in range(count):
            records.append(
                {
                    "id": f"{split}-speaker{speaker}-{j}",
                    "label": f"speaker{speaker}",
                    "series": blocks[index],
                }
            )
            index += 1
    return records


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument(
        "--output",
        default=str(Path(__file__).resolve().parents[1] / "data" / "japanese_vowels.jsonl"),
        help="destination JSONL path (default: <repo>/data/japanese_vowels.jsonl)",
    )
    args = parser.parse_args()

    train = label_blocks(
        parse_blocks(download("ae.train")),
        (TRAIN_BLOCKS_PER_SPEAKER,) * NUM_SPEAKERS,
        "train",
    )
    test = label_blocks(parse_blocks(download("ae.test")), TEST_BLOCKS_PER_SPEAKER, "test")
    records = train + test
    if len(records) != 640:
        raise SystemExit(f"expected 640 utterances in total, got {len(records)}")

    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    with open(output, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
    lengths = [len(r["series"]) for r in records]
    print(
        f"wrote {len(records)} utterances to {output} "
        f"(frame counts {min(lengths)}..{max(lengths)}, {DIM} channels)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
