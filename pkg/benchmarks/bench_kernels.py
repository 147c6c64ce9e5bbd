"""Compiled vs pure-Python kernel timings on synthetic suspicious IDs.

    python3 benchmarks/bench_kernels.py [--sizes 100 300 600] [--repeat 3]
"""

import argparse
import time

import numpy as np

from scholmig import kernels
from scholmig.disambig import ScoreTable, encode_records
from scholmig.ingest import AuthorshipRecord

GIVEN = ("Anna", "A.", "Andreas", "A. M.", "Anton", "Andrea M.")


def fake_records(n, rng):
    recs = []
    for i in range(n):
        recs.append(AuthorshipRecord(
            record_id=f"r{i:06d}", author_id="X", surname="Mueller",
            given_name=GIVEN[rng.integers(len(GIVEN))], publication_id=f"p{i}",
            year=int(rng.integers(1996, 2021)), country="DE",
            affiliation_text="", coauthor_ids=tuple(f"c{k}" for k in rng.integers(0, 60, 3)),
            asjc_codes=tuple(int(c) for c in rng.integers(11, 37, 2) * 100 + 1),
            funding_texts=(), grant_numbers=tuple(f"g{k}" for k in rng.integers(0, 40, 1)),
            citation_count=0))
    return recs


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 600])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; only the python backend is timed")
    w = ScoreTable().as_array()
    rng = np.random.default_rng(0)
    print(f"{'n':>6} {'kernel':<18} {'backend':<9} {'seconds':>9} {'speedup':>8}")
    for n in args.sizes:
        enc = encode_records(fake_records(n, rng))
        dist = kernels.distance_matrix(*enc, w, backend="python")
        for name, fn in (
            ("distance_matrix", lambda b: kernels.distance_matrix(*enc, w, backend=b)),
            ("cluster_average", lambda b: kernels.cluster_threshold(dist.copy(), 0.5, kernels.AVERAGE, backend=b)),
        ):
            base = None
            for b in ("python", "compiled"):
                if b not in kernels.BACKENDS:
                    continue
                t = best_of(lambda: fn(b), args.repeat)
                base = base or t
                print(f"{n:>6} {name:<18} {b:<9} {t:>9.4f} {base / t:>7.1f}x")


if __name__ == "__main__":
    main()
