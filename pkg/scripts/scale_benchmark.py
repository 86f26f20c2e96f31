"""Wall time of a full audit on the ICU-shaped synthetic table.

    python scripts/scale_benchmark.py --jobs 8
"""
import argparse
import logging
import os
import time
from pathlib import Path

from shortcut_audit.audit import AuditSettings, default_jobs, run_audit
from shortcut_audit.dataset import encode_features
from shortcut_audit.report import write_audit
from shortcut_audit.synthgen import icu_dataset


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=34_386)
    p.add_argument("--jobs", type=int, default=default_jobs())
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--out", default="runs/scale")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    ds = encode_features(icu_dataset(args.n, 0))
    settings = AuditSettings(direction="anticausal_y_to_x", folds=args.folds, jobs=args.jobs)
    t0 = time.perf_counter()
    report = run_audit(ds, settings)
    elapsed = time.perf_counter() - t0
    write_audit(report, Path(args.out))
    logging.info("%d rows, %d raw features, %d attributes, jobs=%d on %d CPU(s): %.1fs", ds.n_rows,
                 len(ds.raw_feature_names), len(ds.attribute_names), args.jobs, os.cpu_count(), elapsed)


if __name__ == "__main__":
    main()
