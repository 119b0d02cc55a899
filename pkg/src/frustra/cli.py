"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
FRUSTRA_THREADS caps replica parallelism.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import frustration, model_ir, monotonicity, null_models, report
from .errors import NumericalError, ValidationError
from .graph_builder import assemble, load_graph, save_graph, symmetrize
from .inference import Executor, extract_active, jacobian_sign_check, sample_kink_free_input


def _load_model_arg(args):
    if getattr(args, "template", None):
        manifest, store = model_ir.generate_synthetic(args.seed, args.template)
        if getattr(args, "model_out", None):
            model_ir.save_model(args.model_out, manifest, store)
        return manifest, store
    if not args.model:
        raise ValidationError("give --model or --template")
    return model_ir.load_model(args.model)


def cmd_build(args):
    manifest, store = _load_model_arg(args)
    graph = assemble(manifest, store)
    save_graph(args.out, graph)
    print(f"wrote {args.out}: n={graph.n} nnz={graph.nnz}")


def cmd_frustration(args):
    graph = load_graph(args.graph)
    view = symmetrize(graph)
    cfg = frustration.ReplicaConfig(
        replica_count=args.replicas, initial_flips=args.nu,
        max_iterations=args.max_iter, seed=args.seed)
    res = frustration.run_replicas(view, cfg)
    doc = {
        "best_epsilon": res.best.epsilon_hat,
        "replicas": [{"seed": r.replica_seed, "epsilon": r.epsilon_hat,
                      "flips": r.flips_performed} for r in res.results],
        "best_spins": [int(v) for v in res.best.spins],
    }
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"best epsilon {res.best.epsilon_hat:.6g} over {args.replicas} replicas")


def cmd_nullmodel(args):
    kind = args.kind.upper()
    if kind in ("N1", "N2"):
        graph = load_graph(args.graph)
        g = (null_models.n1_shuffle if kind == "N1" else null_models.n2_shuffle)(
            graph, args.seed)
    else:
        if not args.model:
            raise ValidationError("--kind n3 needs --model")
        manifest, store = model_ir.load_model(args.model)
        init = {"xavier": "xavier_uniform", "he": "he_normal"}.get(args.init, args.init)
        spec = null_models.NullModelSpec("N3", args.seed, init)
        new_store, g = null_models.n3_reinit(manifest, store, spec)
        if args.store_out:
            model_ir.save_model(args.store_out, manifest, new_store)
    save_graph(args.out, g)
    print(f"wrote {args.out} ({kind}, seed {args.seed})")


def cmd_active(args):
    manifest, store = model_ir.load_model(args.model)
    graph = load_graph(args.graph)
    x = model_ir.read_blob(args.input).astype(np.float64)
    act = extract_active(graph, Executor(manifest, store).run(x))
    save_graph(args.out, act.graph)
    print(f"wrote {args.out}: n={act.graph.n} nnz={act.graph.nnz} "
          f"(output node {act.output_node})")


def cmd_jaccheck(args):
    manifest, store = model_ir.load_model(args.model)
    if args.input:
        x = model_ir.read_blob(args.input).astype(np.float64)
    else:
        x = sample_kink_free_input(manifest, store, seed=args.seed)
    rep = jacobian_sign_check(manifest, store, x,
                              tolerance=args.tolerance, step=args.step)
    print(json.dumps({"entries_checked": rep.entries_checked,
                      "violations": rep.violations[:100],
                      "passed": rep.passed}))
    if not rep.passed:
        raise NumericalError(f"{len(rep.violations)} Jacobian sign violations")


def cmd_monotone(args):
    manifest, store = model_ir.load_model(args.model)
    graph = load_graph(args.graph)
    images = [model_ir.read_blob(p).astype(np.float64)
              for p in sorted(Path(args.images).glob("*.blob"))]
    if not images:
        raise ValidationError(f"no .blob images in {args.images}")
    if args.null == "random":
        order = monotonicity.random_null_order(manifest.input_shape.count,
                                               manifest.output_size)
    else:
        if not args.spins:
            raise ValidationError("--spins is required unless --null random")
        spins = np.array(json.loads(Path(args.spins).read_text())["best_spins"])
        order = monotonicity.order_from_spins(graph, spins)
    samples = monotonicity.run_protocol(
        manifest, store, order, images, per_image=args.per_image,
        magnitudes=tuple(float(v) for v in args.magnitudes.split(",")),
        seed=args.seed)
    samples.write_csv(args.out)
    lam = monotonicity.lambda_from_samples(samples)
    if args.lambda_out:
        with open(args.lambda_out, "w") as fh:
            json.dump({"lambda": lam.lam, "ccdf": lam.ccdf}, fh, indent=1)
            fh.write("\n")
    print(f"wrote {args.out}; lambda = {lam.lam:.4f}")


def cmd_pipeline(args):
    cfg = report.ExperimentConfig(
        out_dir=args.out, model_path=args.model, template=args.template,
        template_seed=args.template_seed, seed=args.seed,
        replica_count=args.replicas, initial_flips=args.nu,
        null_instances=args.null_instances, null_replicas=args.null_replicas,
        images_dir=args.images, n_images=args.n_images,
        per_image=args.per_image,
        magnitudes=tuple(float(v) for v in args.magnitudes.split(",")),
        active_images=args.active_images)
    summary = report.run_pipeline(cfg)
    print(json.dumps(summary["epsilon"], indent=1))


def cmd_report(args):
    for path in report.write_histograms(args.dir):
        print(f"wrote {path}")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="frustra")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="expand a model into a signed graph")
    p.add_argument("--model")
    p.add_argument("--template", choices=model_ir.TEMPLATES)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--model-out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("frustration", help="estimate the frustration index")
    p.add_argument("--graph", required=True)
    p.add_argument("--replicas", type=int, default=80)
    p.add_argument("--nu", type=int, default=1_000_000)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_frustration)

    p = sub.add_parser("nullmodel", help="generate a null model graph")
    p.add_argument("--graph")
    p.add_argument("--kind", required=True, choices=["n1", "n2", "n3", "N1", "N2", "N3"])
    p.add_argument("--model")
    p.add_argument("--init", default="xavier", help="xavier|he (N3 only)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--store-out")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_nullmodel)

    p = sub.add_parser("active", help="extract the active subnetwork of an input")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_active)

    p = sub.add_parser("jaccheck", help="finite-difference Jacobian sign check")
    p.add_argument("--model", required=True)
    p.add_argument("--input")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--step", type=float, default=1e-4)
    p.set_defaults(func=cmd_jaccheck)

    p = sub.add_parser("monotone", help="run the perturbation protocol")
    p.add_argument("--model", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--spins", help="eps.json with best_spins")
    p.add_argument("--images", required=True)
    p.add_argument("--per-image", type=int, default=100)
    p.add_argument("--magnitudes", default="0.5,1,2,4")
    p.add_argument("--null", default="none", choices=["none", "random"])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda-out")
    p.set_defaults(func=cmd_monotone)

    p = sub.add_parser("pipeline", help="full experiment into a directory")
    p.add_argument("--model")
    p.add_argument("--template", choices=model_ir.TEMPLATES)
    p.add_argument("--template-seed", type=int, default=1)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--replicas", type=int, default=20)
    p.add_argument("--nu", type=int, default=10_000)
    p.add_argument("--null-instances", type=int, default=20)
    p.add_argument("--null-replicas", type=int, default=2)
    p.add_argument("--images")
    p.add_argument("--n-images", type=int, default=50)
    p.add_argument("--per-image", type=int, default=20)
    p.add_argument("--magnitudes", default="0.5,1,2,4")
    p.add_argument("--active-images", type=int, default=5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("report", help="histogram CSVs from pipeline outputs")
    p.add_argument("--dir", required=True)
    p.set_defaults(func=cmd_report)

    args = ap.parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
