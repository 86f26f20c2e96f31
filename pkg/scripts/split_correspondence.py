"""Rank agreement between audit detectability and hidden-layer probe F1.

    python scripts/split_correspondence.py --n 6000 --out runs/split
"""
import argparse
import logging
from pathlib import Path

from shortcut_audit.audit import AuditSettings, run_audit
from shortcut_audit.models import PredictorSpec
from shortcut_audit.report import write_audit, write_split
from shortcut_audit.split_probe import correlate_detectability, split_probe, train_task_model
from shortcut_audit.synthgen import detectability_suite

FLIPS = (0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=6000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/split")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out)

    ds = detectability_suite(args.n, args.seed, FLIPS)
    report = run_audit(ds, AuditSettings(seed=args.seed, bootstrap_replicates=200, detectability_replicates=50))
    write_audit(report, out)
    model = train_task_model(ds, PredictorSpec("mlp", seed=args.seed))
    probes = [split_probe(model, ds, a, seed=args.seed) for a in ds.attribute_names]
    rho = correlate_detectability(report, probes)
    write_split(probes, out, rho, {"flips": list(FLIPS), "n": args.n})
    for pr in probes:
        logging.info("%-4s detectability %.3f  probe F1 %.3f  chance %.3f", pr.attribute,
                     report.get(pr.attribute).detectability_ensemble, pr.macro_f1, pr.chance_f1)
    logging.info("spearman rho = %.3f", rho)


if __name__ == "__main__":
    main()
