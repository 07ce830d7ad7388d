#!/usr/bin/env python3
"""Regenerate the composite region files used by the large fixtures.

The two block files are merges of the base IEEE systems with a handful of
internal tie lines, produced with the package's own merge machinery:

* ``block202.m``: 57 + 57 + 30 + 30 + 14 + 14 buses (202 total)
* ``block110.m``: 57 + 30 + 14 + 9 buses (110 total)

Run from the repository root:  python scripts/make_fixtures.py
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from hdpf import Interconnection, MergeManifest, RawCase, merge_cases, parse_case_file, serialize_case

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "fixtures")


def _tie(fr, fb, tr, tb, x):
    return Interconnection(from_region=fr, from_bus=fb, to_region=tr, to_bus=tb,
                           r=0.01, x=x, b=0.02, tap_ratio=1.0, phase_shift=0.0)


def render_block(name: str, parts: list[str], ties: list[Interconnection]) -> str:
    """Merged-case text for one composite block."""
    cases = [parse_case_file(os.path.join(FIXTURES, f"{p}.m")) for p in parts]
    manifest = MergeManifest(
        region_files=tuple(f"{p}.m" for p in parts),
        interconnections=tuple(ties),
        slack_region=0,
    )
    merged, _ = merge_cases(manifest, cases)
    merged = RawCase(merged.base_mva, merged.buses, merged.generators,
                     merged.branches, name=name)
    return serialize_case(merged)


BLOCKS = {
    "block202": (
        ["case57", "case57", "case30", "case30", "case14", "case14"],
        [
            _tie(0, 44, 1, 38, 0.09),
            _tie(0, 15, 2, 10, 0.11),
            _tie(2, 24, 3, 15, 0.10),
            _tie(3, 30, 4, 14, 0.12),
            _tie(4, 9, 5, 5, 0.08),
            _tie(1, 47, 5, 13, 0.10),
        ],
    ),
    "block110": (
        ["case57", "case30", "case14", "case9"],
        [
            _tie(0, 38, 1, 10, 0.10),
            _tie(1, 24, 2, 9, 0.09),
            _tie(2, 14, 3, 7, 0.11),
            _tie(0, 50, 3, 5, 0.12),
        ],
    ),
}


def main(out_dir: str = FIXTURES):
    for name, (parts, ties) in BLOCKS.items():
        text = render_block(name, parts, ties)
        path = os.path.join(out_dir, f"{name}.m")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
