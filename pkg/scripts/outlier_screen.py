#!/usr/bin/env python3
"""Duration screen on a synthetic cohort with optionally slowed subjects.

Generates the cohort, segments every low-care MoCap trial, and prints the
Kruskal-Wallis test across subjects together with the per-subject median,
MAD and the pooled reference of all other subjects.

    python3 scripts/outlier_screen.py --shifted 8 --shift 0.8
"""

import argparse
import dataclasses

from carefulkin.config import PipelineConfig
from carefulkin.experiment import generate_synthetic_trials, outlier_subject_report
from carefulkin.features import Source
from carefulkin.pipeline import preprocess_trial


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--shifted", type=int, nargs="*", default=[8], help="subject ids to slow down")
    p.add_argument("--shift", type=float, default=0.8, help="added seconds on the low-care transport")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--factor", type=float, default=3.0, help="MAD multiple for flagging")
    args = p.parse_args()

    cfg = PipelineConfig(seed=args.seed)
    synth = dataclasses.replace(cfg.synth_config(), outlier_subjects=tuple(args.shifted), outlier_shift=args.shift)
    trials = [t for t in generate_synthetic_trials(synth) if t.carefulness_class == "C1"]
    feats = [preprocess_trial(t, Source.MoCap, cfg.preprocess) for t in trials]
    rep = outlier_subject_report(feats, args.factor)

    print(f"Kruskal-Wallis: chi2({rep.df}, N={rep.n}) = {rep.H:.1f}, p = {rep.p:.2g}")
    print(f"{'subject':>7} {'median':>7} {'MAD':>6} {'others':>7} {'others MAD':>10}")
    for s in rep.subjects:
        ref_med, ref_mad = rep.reference[s]
        flag = " *" if s in rep.flagged else ""
        print(f"{s:>7} {rep.medians[s]:7.3f} {rep.mads[s]:6.3f} {ref_med:7.3f} {ref_mad:10.3f}{flag}")
    print(f"flagged: {rep.flagged or 'none'}")


if __name__ == "__main__":
    main()
