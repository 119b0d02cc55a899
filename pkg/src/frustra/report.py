"""Experiment orchestration and figure-ready outputs.

A pipeline run goes build -> frustration -> null models -> active
subnetworks -> monotonicity and leaves CSV/JSON files in the output
directory.  All randomness flows from one root seed: each stage uses
root_seed * 256 + STAGE_OFFSET[stage], null instances add their index,
and replicas inside a stage derive their seeds as stage_seed ^ replica
(see frustration.run_replicas).  Outputs carry no timestamps, so reruns
with the same seeds are byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.stats

from .errors import NumericalError, ValidationError
from . import frustration, model_ir, monotonicity, null_models
from .graph_builder import assemble, save_graph, symmetrize
from .inference import Executor, extract_active

SCHEMA_VERSION = 1
HIST_BINS = 50

STAGE_OFFSET = {
    "real": 1,
    "n1": 2,
    "n2": 3,
    "n3": 4,
    "images": 5,
    "protocol": 6,
    "protocol_null": 7,
    "active": 8,
}


def stage_seed(root: int, stage: str) -> int:
    return root * 256 + STAGE_OFFSET[stage]


def welch_t(sample_a, sample_b) -> tuple[float, float, float]:
    """Welch's t statistic, Welch-Satterthwaite df, and two-sided p."""
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise ValidationError("welch_t needs at least two values per sample")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va + vb == 0.0:
        raise NumericalError("welch_t: both samples have zero variance")
    qa, qb = va / len(a), vb / len(b)
    t = (a.mean() - b.mean()) / np.sqrt(qa + qb)
    df = (qa + qb) ** 2 / (qa**2 / (len(a) - 1) + qb**2 / (len(b) - 1))
    p = 2.0 * float(scipy.stats.t.sf(abs(t), df))
    return float(t), float(df), p


def histogram(values, bins: int = HIST_BINS):
    """Counts over `bins` uniform bins spanning the observed range."""
    values = np.asarray(values, dtype=np.float64)
    counts, edges = np.histogram(values, bins=bins)
    return edges, counts


@dataclass
class ExperimentConfig:
    out_dir: str
    model_path: str | None = None
    template: str | None = None
    template_seed: int = 1
    seed: int = 7
    replica_count: int = 20
    initial_flips: int = 10_000
    max_iterations: int | None = None
    null_kinds: tuple[str, ...] = ("N1", "N2", "N3")
    null_instances: int = 20
    null_replicas: int = 2
    n3_inits: tuple[str, ...] = ("xavier_uniform", "he_normal")
    images_dir: str | None = None
    n_images: int = 50
    per_image: int = 20
    magnitudes: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    active_images: int = 5
    run_null_order: bool = True

    def __post_init__(self):
        if (self.model_path is None) == (self.template is None):
            raise ValidationError("give exactly one of model_path / template")
        for k in self.null_kinds:
            if k not in ("N1", "N2", "N3"):
                raise ValidationError(f"unknown null kind {k!r}")


def _dump_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _replica_doc(res: frustration.ReplicaSet) -> dict:
    return {
        "best_epsilon": res.best.epsilon_hat,
        "replicas": [
            {"seed": r.replica_seed, "epsilon": r.epsilon_hat, "flips": r.flips_performed}
            for r in res.results
        ],
    }


def _load_images(config: ExperimentConfig, manifest) -> list[np.ndarray]:
    if config.images_dir is not None:
        paths = sorted(Path(config.images_dir).glob("*.blob"))
        if not paths:
            raise ValidationError(f"no .blob images under {config.images_dir}")
        imgs = [model_ir.read_blob(p).astype(np.float64) for p in paths]
    else:
        rng = np.random.default_rng(stage_seed(config.seed, "images"))
        imgs = [rng.uniform(0.0, 1.0, manifest.input_shape.count)
                for _ in range(config.n_images)]
    for img in imgs:
        if img.size != manifest.input_shape.count:
            raise ValidationError("image size does not match the model input")
    return imgs


def run_pipeline(config: ExperimentConfig) -> dict:
    """Full experiment; returns the summary document (also written to disk)."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stage = "setup"
    try:
        if config.model_path is not None:
            manifest, store = model_ir.load_model(config.model_path)
        else:
            manifest, store = model_ir.generate_synthetic(config.template_seed, config.template)
            model_ir.save_model(out / "model", manifest, store)

        stage = "build"
        graph = assemble(manifest, store)
        save_graph(out / "graph.fsg", graph)
        view = symmetrize(graph)

        stage = "frustration"
        real = frustration.run_replicas(view, frustration.ReplicaConfig(
            replica_count=config.replica_count,
            initial_flips=config.initial_flips,
            max_iterations=config.max_iterations,
            seed=stage_seed(config.seed, "real"),
        ))
        doc = _replica_doc(real)
        doc["best_spins"] = [int(v) for v in real.best.spins]
        _dump_json(out / "eps_real.json", doc)

        null_best: dict[str, list[float]] = {}
        for kind in config.null_kinds:
            stage = f"nullmodel:{kind}"
            key = kind.lower()
            entries = []
            for inst in range(config.null_instances):
                sd = stage_seed(config.seed, key) + inst
                if kind == "N1":
                    g = null_models.n1_shuffle(graph, sd)
                elif kind == "N2":
                    g = null_models.n2_shuffle(graph, sd)
                else:
                    init = config.n3_inits[inst % len(config.n3_inits)]
                    spec = null_models.NullModelSpec("N3", sd, init)
                    _, g = null_models.n3_reinit(manifest, store, spec)
                res = frustration.run_replicas(symmetrize(g), frustration.ReplicaConfig(
                    replica_count=config.null_replicas,
                    initial_flips=config.initial_flips,
                    seed=sd,
                ))
                entry = {"seed": sd, "best_epsilon": res.best.epsilon_hat,
                         "replicas": [r.epsilon_hat for r in res.results]}
                if kind == "N3":
                    entry["init"] = init
                entries.append(entry)
            _dump_json(out / f"eps_{key}.json", {"kind": kind, "instances": entries})
            null_best[kind] = [e["best_epsilon"] for e in entries]

        stage = "images"
        images = _load_images(config, manifest)
        executor = Executor(manifest, store)

        stage = "active"
        act_cfg = frustration.ReplicaConfig(
            replica_count=config.null_replicas,
            initial_flips=config.initial_flips,
            seed=stage_seed(config.seed, "active"),
        )
        with open(out / "eps_act.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["image_id", "n_nodes", "n_edges", "epsilon"])
            for k, img in enumerate(images[: config.active_images]):
                act = extract_active(graph, executor.run(img))
                res = frustration.active_frustration(act.graph, act_cfg)
                w.writerow([k, act.graph.n, act.graph.nnz, repr(res.best.epsilon_hat)])

        stage = "monotonicity"
        order = monotonicity.order_from_spins(graph, real.best.spins)
        samples = monotonicity.run_protocol(
            manifest, store, order, images,
            per_image=config.per_image, magnitudes=config.magnitudes,
            seed=stage_seed(config.seed, "protocol"), executor=executor,
        )
        samples.write_csv(out / "omega.csv")
        lam = monotonicity.lambda_from_samples(samples)
        lambda_doc = {"ground_state": {"lambda": lam.lam, "ccdf": lam.ccdf}}
        null_samples = None
        if config.run_null_order:
            null_samples = monotonicity.run_protocol(
                manifest, store,
                monotonicity.random_null_order(manifest.input_shape.count,
                                               manifest.output_size),
                images, per_image=config.per_image, magnitudes=config.magnitudes,
                seed=stage_seed(config.seed, "protocol_null"), executor=executor,
            )
            null_samples.write_csv(out / "omega_null.csv")
            lam_null = monotonicity.lambda_from_samples(null_samples)
            lambda_doc["random_null"] = {"lambda": lam_null.lam, "ccdf": lam_null.ccdf}
        _dump_json(out / "lambda.json", lambda_doc)

        stage = "summary"
        eps_r = [r.epsilon_hat for r in real.results]
        summary = {
            "schema_version": SCHEMA_VERSION,
            "seed": config.seed,
            "epsilon": {"real": {"mean": float(np.mean(eps_r)),
                                 "std": float(np.std(eps_r)),
                                 "best": real.best.epsilon_hat}},
            "welch": {},
            "ordering": {},
            "lambda": {k: v["lambda"] for k, v in lambda_doc.items()},
            "class_stability": {repr(m): v for m, v in
                                monotonicity.class_stability(samples).items()},
        }
        for kind, vals in null_best.items():
            summary["epsilon"][kind] = {"mean": float(np.mean(vals)),
                                        "std": float(np.std(vals))}
        pairs = [("real", eps_r)] + [(k, v) for k, v in null_best.items()]
        for i in range(len(pairs)):
            for j in range(i + 1, len(pairs)):
                (na, va), (nb, vb) = pairs[i], pairs[j]
                try:
                    t, df, p = welch_t(va, vb)
                    summary["welch"][f"{na}_vs_{nb}"] = {"t": t, "df": df, "p": p}
                except (ValidationError, NumericalError) as exc:
                    summary["welch"][f"{na}_vs_{nb}"] = {"error": str(exc)}
        if "N1" in null_best:
            summary["ordering"]["real_le_n1"] = bool(
                np.mean(eps_r) <= np.mean(null_best["N1"]))
        if "N1" in null_best and "N2" in null_best:
            summary["ordering"]["n1_le_n2"] = bool(
                np.mean(null_best["N1"]) <= np.mean(null_best["N2"]))
        _dump_json(out / "summary.json", summary)
        return summary
    except (ValidationError, NumericalError) as exc:
        # partial outputs written so far are left in place
        raise type(exc)(f"pipeline stage {stage!r} failed: {exc}") from exc


def write_histograms(out_dir: str | Path) -> list[Path]:
    """Figure-ready histogram CSVs from a finished pipeline directory."""
    out = Path(out_dir)
    written = []

    eps_sets: dict[str, list[float]] = {}
    real_path = out / "eps_real.json"
    if real_path.exists():
        doc = json.loads(real_path.read_text())
        eps_sets["real"] = [r["epsilon"] for r in doc["replicas"]]
    for key in ("n1", "n2", "n3"):
        p = out / f"eps_{key}.json"
        if p.exists():
            doc = json.loads(p.read_text())
            eps_sets[key] = [e["best_epsilon"] for e in doc["instances"]]
    if eps_sets:
        path = out / "eps_hist.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["dataset", "bin_lo", "bin_hi", "count"])
            for name, vals in eps_sets.items():
                edges, counts = histogram(vals)
                for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                    w.writerow([name, repr(float(lo)), repr(float(hi)), int(c)])
        written.append(path)

    for stem, out_name in (("omega", "omega_hist.csv"), ("omega_null", "omega_null_hist.csv")):
        p = out / f"{stem}.csv"
        if not p.exists():
            continue
        samples = monotonicity.OmegaSampleSet.read_csv(p)
        path = out / out_name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            edges, counts = histogram(samples.omegas())
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        written.append(path)
        frac = list(monotonicity.direction_consistency(samples).values())
        path2 = out / out_name.replace("omega", "consistency")
        with open(path2, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin_lo", "bin_hi", "count"])
            edges, counts = histogram(frac)
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([repr(float(lo)), repr(float(hi)), int(c)])
        written.append(path2)
    return written
