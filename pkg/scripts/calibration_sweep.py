"""AUC drop of a planted artifact across utility levels, with markers from an audit.

    python scripts/calibration_sweep.py --n 10000 --out runs/calibration
"""
import argparse
import logging
from pathlib import Path

from shortcut_audit.audit import AuditSettings, run_audit
from shortcut_audit.calibration import CalibrationConfig, run_calibration
from shortcut_audit.report import write_audit, write_calibration
from shortcut_audit.synthgen import shortcut_dataset, task_dataset


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/calibration")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    out = Path(args.out)

    # the audited dataset supplies the utilities drawn as vertical markers
    report = run_audit(shortcut_dataset(args.n, args.seed), AuditSettings(seed=args.seed, models=("naive_bayes",)))
    write_audit(report, out / "audit")
    markers = [(a.attribute, a.utility.ami) for a in report.attributes if a.utility is not None]

    curve = run_calibration(task_dataset(args.n, args.seed), CalibrationConfig(seed=args.seed))
    write_calibration(curve, out, markers)
    for r in curve.rows:
        logging.info("flip %.2f  utility %.3f  auc %.3f -> %.3f  drop %.3f [%.3f, %.3f]", r.flip_fraction,
                     r.utility_ami, r.auc_correlated, r.auc_counterfactual, r.auc_drop, *r.ci_drop)


if __name__ == "__main__":
    main()
