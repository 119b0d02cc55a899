"""Near-monotonicity protocol: signed perturbations, alignment, lambda.

An input x1 is perturbed along the orthant direction of the input
signature: delta > 0 is drawn elementwise uniform, rescaled to a target
norm, and x2 = x1 + S_x delta, so x2 dominates x1 in the input order by
construction.  The output alignment fraction

    Omega = (1/n_h) #{i : s_y[i] (y2[i] - y1[i]) >= 0}

counts logit coordinates that respect the output order (ties count as
aligned).  Over many (image, perturbation) samples the monotonicity
degree is the largest lambda in [0, 0.5] with

    P(|Omega - 0.5| >= lambda) >= 2 lambda,

found exactly by scanning the sorted deviations of the empirical CCDF.

The ground-state order takes (s_x, s_y) as the input/output subvectors of
the best replica's spins.  The random-direction null redraws (s_x, s_y)
uniformly per perturbation, which makes the Omega samples independent,
so the null is testable with plain standard errors at desk scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .frustration import check_spins
from .graph_builder import SignedSparseGraph
from .inference import Executor
from .model_ir import NetworkManifest, WeightStore

GROUND_STATE = "ground_state"
RANDOM_NULL = "random_null"


@dataclass
class PartialOrderPair:
    s_x: np.ndarray
    s_y: np.ndarray
    source: str = GROUND_STATE

    def __post_init__(self):
        if self.source not in (GROUND_STATE, RANDOM_NULL):
            raise ValidationError(f"unknown order source {self.source!r}")
        self.s_x = check_spins(self.s_x, len(self.s_x))
        self.s_y = check_spins(self.s_y, len(self.s_y))


def random_null_order(n0: int, n_h: int) -> PartialOrderPair:
    """Placeholder pair; run_protocol redraws (s_x, s_y) per perturbation."""
    return PartialOrderPair(np.ones(n0, np.int8), np.ones(n_h, np.int8), RANDOM_NULL)


def order_from_spins(graph: SignedSparseGraph, spins: np.ndarray) -> PartialOrderPair:
    """Input/output subvectors of a ground-state spin assignment."""
    if graph.layers is None:
        raise ValidationError("graph carries no layer table")
    spins = check_spins(spins, graph.n)
    first, last = graph.layers[0], graph.layers[-1]
    if first.kind != "input":
        raise ValidationError("first layer of the graph is not the input")
    return PartialOrderPair(spins[first.start:first.stop], spins[last.start:last.stop])


def perturb(x1: np.ndarray, s_x: np.ndarray, magnitude: float, rng) -> np.ndarray:
    """x2 = x1 + S_x delta with delta > 0 elementwise and ||delta|| = magnitude."""
    if magnitude <= 0:
        raise ValidationError("perturbation magnitude must be positive")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    x1 = np.asarray(x1, dtype=np.float64)
    u = 1.0 - rng.random(x1.size)  # uniform on (0, 1]
    delta = u * (magnitude / np.linalg.norm(u))
    return x1 + s_x * delta


def omega(y1: np.ndarray, y2: np.ndarray, s_y: np.ndarray) -> float:
    """Fraction of outputs with s_y (y2 - y1) >= 0; ties count as aligned."""
    y1, y2 = np.asarray(y1), np.asarray(y2)
    if y1.shape != y2.shape or y1.shape != np.shape(s_y):
        raise ValidationError("omega arguments must share one length")
    return float(np.mean(s_y * (y2 - y1) >= 0))


@dataclass
class OmegaRecord:
    image_id: int
    perturbation_id: int
    magnitude: float
    omega: float
    delta_norm: float
    class_before: int
    class_after: int


@dataclass
class OmegaSampleSet:
    records: list[OmegaRecord] = field(default_factory=list)

    def omegas(self) -> np.ndarray:
        return np.array([r.omega for r in self.records])

    def by_image(self) -> dict[int, list[OmegaRecord]]:
        out: dict[int, list[OmegaRecord]] = {}
        for r in self.records:
            out.setdefault(r.image_id, []).append(r)
        return out

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["image_id", "perturbation_id", "magnitude", "omega",
                        "class_before", "class_after", "delta_norm"])
            for r in self.records:
                w.writerow([r.image_id, r.perturbation_id, repr(r.magnitude),
                            repr(r.omega), r.class_before, r.class_after,
                            repr(r.delta_norm)])

    @classmethod
    def read_csv(cls, path: str | Path) -> "OmegaSampleSet":
        records = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                records.append(OmegaRecord(
                    int(row["image_id"]), int(row["perturbation_id"]),
                    float(row["magnitude"]), float(row["omega"]),
                    float(row["delta_norm"]), int(row["class_before"]),
                    int(row["class_after"])))
        return cls(records)


def run_protocol(
    manifest: NetworkManifest,
    store: WeightStore,
    order: PartialOrderPair,
    images: list[np.ndarray],
    per_image: int = 100,
    magnitudes: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0),
    seed: int = 0,
    executor: Executor | None = None,
) -> OmegaSampleSet:
    """Perturb every image `per_image` times and record Omega samples.

    Perturbation t of image k uses magnitude[t mod len] and an RNG seeded
    by (seed, k, t), so records are deterministic and independent of
    evaluation order.  For a random_null order a fresh (s_x, s_y) pair is
    drawn per perturbation.
    """
    ex = executor or Executor(manifest, store)
    n0 = manifest.input_shape.count
    n_h = manifest.output_size
    if order.source == GROUND_STATE:
        if len(order.s_x) != n0 or len(order.s_y) != n_h:
            raise ValidationError("order signature lengths do not match the model")
    if not images:
        raise ValidationError("no images given")
    if not magnitudes:
        raise ValidationError("need at least one magnitude")

    samples = OmegaSampleSet()
    for k, img in enumerate(images):
        x1 = np.asarray(img, dtype=np.float64).ravel()
        t1 = ex.run(x1)
        y1 = t1.logits
        for t in range(per_image):
            mag = float(magnitudes[t % len(magnitudes)])
            rng = np.random.default_rng([seed, k, t])
            if order.source == RANDOM_NULL:
                s_x = (rng.integers(0, 2, n0) * 2 - 1).astype(np.int8)
                s_y = (rng.integers(0, 2, n_h) * 2 - 1).astype(np.int8)
            else:
                s_x, s_y = order.s_x, order.s_y
            x2 = perturb(x1, s_x, mag, rng)
            t2 = ex.run(x2)
            samples.records.append(OmegaRecord(
                image_id=k,
                perturbation_id=t,
                magnitude=mag,
                omega=omega(y1, t2.logits, s_y),
                delta_norm=float(np.linalg.norm(x2 - x1)),
                class_before=t1.predicted_class,
                class_after=t2.predicted_class,
            ))
    return samples


@dataclass
class LambdaResult:
    lam: float
    ccdf: list[tuple[float, float]]  # (lambda, P(|Omega - 0.5| >= lambda))


def lambda_from_samples(samples: OmegaSampleSet) -> LambdaResult:
    """Largest lambda with G(lambda) >= 2 lambda, G the deviation CCDF.

    G is a left-continuous decreasing step function, so on each interval
    between consecutive deviation values the best feasible point is
    min(interval end, G/2); scanning the sorted deviations is exact.
    """
    if not samples.records:
        raise ValidationError("no omega samples")
    devs = np.abs(samples.omegas() - 0.5)
    points = np.unique(devs)
    n = len(devs)
    best = 0.0
    ccdf = [(0.0, 1.0)]
    prev = 0.0
    for bp in points:
        g = float(np.count_nonzero(devs >= bp)) / n
        ccdf.append((float(bp), g))
        cand = min(float(bp), g / 2.0)
        if cand > prev:
            best = max(best, cand)
        prev = float(bp)
    return LambdaResult(lam=best, ccdf=ccdf)


def direction_consistency(samples: OmegaSampleSet) -> dict[int, float]:
    """Per image, the fraction of its perturbations with Omega > 0.5."""
    return {
        img: float(np.mean([r.omega > 0.5 for r in recs]))
        for img, recs in sorted(samples.by_image().items())
    }


def class_stability(samples: OmegaSampleSet) -> dict[float, float]:
    """Per magnitude, the fraction of perturbations keeping the class."""
    by_mag: dict[float, list[bool]] = {}
    for r in samples.records:
        by_mag.setdefault(r.magnitude, []).append(r.class_after == r.class_before)
    return {m: float(np.mean(v)) for m, v in sorted(by_mag.items())}
