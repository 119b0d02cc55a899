#!/usr/bin/env python3
"""Desk-scale experiment on a synthetic CNN.

Builds the signed graph of a tiny_cnn, estimates its frustration, compares
against the N1/N2/N3 null models, computes active-subnetwork frustration
for a few random images, runs the perturbation protocol along the
ground-state order and a random null, and leaves figure-ready CSV/JSON in
the output directory.

    python3 scripts/run_tiny_experiment.py --out out/tiny_cnn --seed 7
"""

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from frustra.report import ExperimentConfig, run_pipeline, write_histograms


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="out/tiny_cnn")
    ap.add_argument("--template", default="tiny_cnn")
    ap.add_argument("--template-seed", type=int, default=1)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--replicas", type=int, default=20)
    ap.add_argument("--nu", type=int, default=10_000)
    ap.add_argument("--null-instances", type=int, default=20)
    ap.add_argument("--images", type=int, default=50)
    ap.add_argument("--per-image", type=int, default=20)
    ap.add_argument("--full-scale", action="store_true",
                    help="paper-scale protocol: 1000 images x 100 perturbations, 80 replicas")
    args = ap.parse_args()

    cfg = ExperimentConfig(
        out_dir=args.out,
        template=args.template,
        template_seed=args.template_seed,
        seed=args.seed,
        replica_count=80 if args.full_scale else args.replicas,
        initial_flips=1_000_000 if args.full_scale else args.nu,
        null_instances=80 if args.full_scale else args.null_instances,
        n_images=1000 if args.full_scale else args.images,
        per_image=100 if args.full_scale else args.per_image,
    )
    summary = run_pipeline(cfg)
    write_histograms(args.out)

    eps = summary["epsilon"]
    print(f"\nfrustration (best/mean over replicas or instances):")
    for name in ("real", "N1", "N2", "N3"):
        if name in eps:
            print(f"  {name:>4}: mean {eps[name]['mean']:.4f}  std {eps[name]['std']:.4f}")
    print("ordering flags:", json.dumps(summary["ordering"]))
    print("lambda:", json.dumps(summary["lambda"]))
    print("welch real vs N1:", json.dumps(summary["welch"].get("real_vs_N1", {})))
    print(f"\noutputs in {args.out}/")


if __name__ == "__main__":
    main()
