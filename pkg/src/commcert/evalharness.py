"""Certified-accuracy experiments: victim sampling, batch certification, curves, validation.

One experiment fixes the attacker-controlled nodes, their pair space, and a
master seed. Noise sample ``j`` is shared by every victim set, so each noisy
graph is clustered once and all victim sets are read off the same partition.
Per-set guarantees are unaffected because each set's counts are exactly what
:func:`commcert.smoothing.sample_under_noise` would produce for it alone.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from commcert import __version__
from commcert.certify import ABSTAIN, CertifyResult, certify_counts
from commcert.estimate import clopper_pearson_lower
from commcert.graphio import (
    Graph,
    GroundTruth,
    PairSpace,
    StructureVector,
    _open_lines,
    build_pair_space,
    parse_communities,
    parse_edge_list,
    parse_node_labels,
    structure_vector,
)
from commcert.louvain import same_community
from commcert.smoothing import (
    CommunityFunction,
    NoiseSpec,
    SampleCounts,
    TruthTableFunction,
    sample_noise,
    sample_stream,
)

logger = logging.getLogger(__name__)

SPLITTING = "splitting"
MERGING = "merging"
MODES = (SPLITTING, MERGING)

_ATTACKER_STREAM = 1
_VICTIM_STREAM = 2
_VALIDATION_STREAM = 3


@dataclass(frozen=True)
class VictimSet:
    nodes: frozenset[int]
    mode: str
    provenance: tuple[int, ...]

    def __post_init__(self):
        if len(self.nodes) < 2:
            raise ValueError("victim set needs at least two nodes")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")


def sample_splitting_victims(gt: GroundTruth, size: int = 2, per_community: int = 2, seed: int = 0) -> list[VictimSet]:
    """``per_community`` random ``size``-subsets of every community with more than ``size`` members."""
    if size < 2:
        raise ValueError("victim sets need at least two nodes")
    rng = np.random.default_rng([seed, _VICTIM_STREAM])
    out = []
    for ci, comm in enumerate(gt.communities):
        if len(comm) <= size:
            continue
        members = sorted(comm)
        for _ in range(per_community):
            pick = rng.choice(len(members), size=size, replace=False)
            out.append(VictimSet(frozenset(members[i] for i in pick), SPLITTING, (ci,)))
    if not out:
        logger.warning("no community has more than %d members; no splitting victim sets", size)
    return out


def sample_merging_victims(gt: GroundTruth, size: int = 2, count: int = 1000, seed: int = 0) -> list[VictimSet]:
    """``count`` sets of one random node from each of ``size`` distinct random communities."""
    if size < 2:
        raise ValueError("victim sets need at least two nodes")
    if len(gt) < size:
        raise ValueError(f"need at least {size} communities, ground truth has {len(gt)}")
    rng = np.random.default_rng([seed, _VICTIM_STREAM])
    members = [sorted(c) for c in gt.communities]
    out = []
    while len(out) < count:
        comms = sorted(rng.choice(len(members), size=size, replace=False).tolist())
        nodes = frozenset(members[c][rng.integers(len(members[c]))] for c in comms)
        if len(nodes) < size:
            # overlapping communities drew the same node twice
            continue
        out.append(VictimSet(nodes, MERGING, tuple(comms)))
    return out


def sample_attacker_nodes(graph: Graph, count: int = 100, seed: int = 0) -> list[int]:
    if count > graph.num_nodes:
        raise ValueError(f"cannot pick {count} attacker nodes from {graph.num_nodes}")
    rng = np.random.default_rng([seed, _ATTACKER_STREAM])
    nodes = sorted(graph.nodes)
    return sorted(nodes[i] for i in rng.choice(len(nodes), size=count, replace=False))


def target_output(mode: str) -> int:
    """The smoothed output that counts as correct: 1 for splitting, 0 for merging."""
    return 1 if mode == SPLITTING else 0


def certified_accuracy(results: Sequence[CertifyResult], mode: str, l: int) -> float:
    """Fraction of results certified with the mode's correct output and ``L >= l``."""
    if not results:
        raise ValueError("need at least one result")
    y = target_output(mode)
    hits = sum(1 for r in results if not r.abstain and r.y_hat == y and r.L >= l)
    return hits / len(results)


@dataclass
class AccuracyCurve:
    points: dict[int, float]
    mode: str
    M: int

    def __post_init__(self):
        values = [self.points[l] for l in sorted(self.points)]
        if any(b > a for a, b in zip(values, values[1:])):
            raise AssertionError("certified accuracy must be non-increasing in l")

    def first_zero(self) -> Optional[int]:
        for l in sorted(self.points):
            if self.points[l] == 0:
                return l
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["l", "certified_accuracy"])
            for l in sorted(self.points):
                w.writerow([l, repr(self.points[l])])


def accuracy_curve(results: Sequence[CertifyResult], mode: str, l_max: int) -> AccuracyCurve:
    y = target_output(mode)
    M = len(results)
    Ls = sorted(r.L for r in results if not r.abstain and r.y_hat == y)
    points = {}
    idx = 0
    for l in range(l_max + 1):
        while idx < len(Ls) and Ls[idx] < l:
            idx += 1
        points[l] = (len(Ls) - idx) / M
    return AccuracyCurve(points, mode, M)


def _detect_row(f: CommunityFunction, x_bits: np.ndarray, beta, seed: int, j: int, victim_sets) -> np.ndarray:
    eps = sample_noise(len(x_bits), NoiseSpec(beta), sample_stream(seed, j))
    assignment = f.detect(x_bits ^ eps)
    return np.fromiter((same_community(assignment, v.nodes) for v in victim_sets), dtype=np.uint8, count=len(victim_sets))


def sample_victim_outputs(
    graph: Graph,
    space: PairSpace,
    victim_sets: Sequence[VictimSet],
    spec: NoiseSpec,
    N: int,
    seed: int,
    detector_seed: int = 0,
    start: int = 0,
    previous: Optional[np.ndarray] = None,
    checkpoint=None,
    checkpoint_every: int = 50,
) -> np.ndarray:
    """``(N, M)`` matrix of base-function outputs, one Louvain run per noise sample.

    ``previous`` holds rows ``0..start-1`` from an interrupted run;
    ``checkpoint(rows_done, matrix)`` is called every ``checkpoint_every`` rows.
    """
    if not victim_sets:
        raise ValueError("no victim sets")
    x = structure_vector(graph, space)
    f = CommunityFunction(graph, space, next(iter(victim_sets)).nodes, detector_seed)
    out = np.zeros((N, len(victim_sets)), dtype=np.uint8)
    if previous is not None and start:
        out[:start] = previous[:start]
    for j in range(start, N):
        out[j] = _detect_row(f, x.bits, spec.beta, seed, j, victim_sets)
        if checkpoint is not None and (j + 1) % checkpoint_every == 0:
            checkpoint(j + 1, out)
    return out


def results_from_outputs(
    outputs: np.ndarray,
    n: int,
    spec: NoiseSpec,
    alpha: float,
    seed: int,
    l_max: Optional[int] = None,
) -> list[CertifyResult]:
    """Certify every column of an output matrix (rows are noise samples)."""
    N = outputs.shape[0]
    out = []
    for col in range(outputs.shape[1]):
        m1 = int(outputs[:, col].sum())
        counts = SampleCounts(N - m1, m1, N, seed)
        out.append(certify_counts(counts, n, spec, alpha, l_max))
    return out


@dataclass
class ExperimentConfig:
    dataset: str
    communities: str
    mode: str = SPLITTING
    beta: float = 0.7
    alpha: float = 0.001
    n_samples: int = 10_000
    victim_size: int = 2
    victim_count: int = 1000
    per_community: int = 2
    attacker_nodes: int = 100
    seed: int = 0
    l_max: Optional[int] = None
    out_dir: Optional[str] = None
    communities_format: str = "auto"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        NoiseSpec(self.beta)
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")

    def fingerprint(self) -> str:
        d = dataclasses.asdict(self)
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_CONFIG_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}


def parse_config(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _CONFIG_TYPES:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def coerce_config(values: dict) -> ExperimentConfig:
    kw = {}
    for key, value in values.items():
        if value is None:
            continue
        kind = _CONFIG_TYPES[key]
        if isinstance(value, str):
            if "int" in kind and "Optional" in kind and value.lower() in ("", "none"):
                value = None
            elif "int" in kind:
                value = int(value)
            elif "float" in kind:
                value = float(value)
        kw[key] = value
    return ExperimentConfig(**kw)


def load_ground_truth(path: str, fmt: str = "auto") -> GroundTruth:
    """``cmty`` (one community per line) or ``labels`` (``node label`` per line)."""
    if fmt == "auto":
        head = []
        for line in _open_lines(path):
            if line.strip() and not line.startswith("#"):
                head.append(line)
            if len(head) >= 50:
                break
        fmt = "labels" if head and all(len(l.split()) == 2 for l in head) else "cmty"
    if fmt == "labels":
        return parse_node_labels(path)
    if fmt == "cmty":
        return parse_communities(path)
    raise ValueError(f"unknown communities format {fmt!r}")


@dataclass
class Experiment:
    """Loaded inputs of a run: graph, pair space, victim sets."""

    config: ExperimentConfig
    graph: Graph
    ground_truth: GroundTruth
    attackers: list[int]
    space: PairSpace
    victim_sets: list[VictimSet]

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def l_max(self) -> int:
        return min(self.n, 1000) if self.config.l_max is None else self.config.l_max


def prepare_experiment(config: ExperimentConfig, graph: Optional[Graph] = None, gt: Optional[GroundTruth] = None) -> Experiment:
    if graph is None:
        graph = parse_edge_list(config.dataset)
    if gt is None:
        gt = load_ground_truth(config.communities, config.communities_format)
    graph = graph.with_nodes(gt.nodes)
    attackers = sample_attacker_nodes(graph, config.attacker_nodes, config.seed)
    space = build_pair_space(attackers)
    if config.mode == SPLITTING:
        victims = sample_splitting_victims(gt, config.victim_size, config.per_community, config.seed)
    else:
        victims = sample_merging_victims(gt, config.victim_size, config.victim_count, config.seed)
    return Experiment(config, graph, gt, attackers, space, victims)


@dataclass
class ExperimentOutput:
    experiment: Experiment
    outputs: np.ndarray
    results: list[CertifyResult]
    curve: AccuracyCurve
    records: list[dict] = field(default_factory=list)


def _record(result: CertifyResult, vs: VictimSet, attackers: frozenset[int]) -> dict:
    rec = result.to_record(vs.nodes)
    rec["mode"] = vs.mode
    rec["provenance"] = list(vs.provenance)
    rec["attacker_overlap"] = len(vs.nodes & attackers)
    return rec


def run_experiment(
    config: ExperimentConfig,
    graph: Optional[Graph] = None,
    gt: Optional[GroundTruth] = None,
) -> ExperimentOutput:
    """Run one configuration end to end; writes artifacts when ``out_dir`` is set.

    Sampling progress is checkpointed to ``out_dir/samples.partial.npz`` and an
    interrupted run with the same configuration resumes from it.
    """
    exp = prepare_experiment(config, graph, gt)
    spec = NoiseSpec(config.beta)
    N = config.n_samples
    out_dir = config.out_dir
    start, previous, checkpoint = 0, None, None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        partial = os.path.join(out_dir, "samples.partial.npz")
        fp = config.fingerprint()
        if os.path.exists(partial):
            with np.load(partial) as data:
                if str(data["fingerprint"]) == fp:
                    start = int(data["rows"])
                    previous = data["outputs"]
                    logger.info("resuming from sample %d", start)

        def checkpoint(rows: int, matrix: np.ndarray) -> None:
            tmp = partial + ".tmp.npz"
            np.savez(tmp, outputs=matrix, rows=rows, fingerprint=fp)
            os.replace(tmp, partial)

    outputs = sample_victim_outputs(
        exp.graph, exp.space, exp.victim_sets, spec, N, config.seed,
        detector_seed=config.seed, start=start, previous=previous, checkpoint=checkpoint,
    )
    results, records = [], []
    attackers = frozenset(exp.attackers)
    for col, vs in enumerate(exp.victim_sets):
        m1 = int(outputs[:, col].sum())
        try:
            res = certify_counts(SampleCounts(N - m1, m1, N, config.seed), exp.n, spec, config.alpha, exp.l_max)
        except Exception:
            logger.exception("certification failed for victim set %s", sorted(vs.nodes))
            res = CertifyResult(ABSTAIN, 0.0, None, SampleCounts(N - m1, m1, N, config.seed), spec.value, config.alpha)
        results.append(res)
        records.append(_record(res, vs, attackers))
    curve = accuracy_curve(results, config.mode, exp.l_max)
    if out_dir:
        with open(os.path.join(out_dir, "results.jsonl"), "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
                fh.flush()
        curve.to_csv(os.path.join(out_dir, "curve.csv"))
        np.savez_compressed(os.path.join(out_dir, "samples.npz"), outputs=outputs)
        meta = {
            "config": dataclasses.asdict(config),
            "version": __version__,
            "n": exp.n,
            "l_max": exp.l_max,
            "num_victim_sets": len(exp.victim_sets),
            "attacker_nodes": exp.attackers,
            "graph": {"nodes": exp.graph.num_nodes, "edges": exp.graph.num_edges},
        }
        with open(os.path.join(out_dir, "run_meta.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
        partial = os.path.join(out_dir, "samples.partial.npz")
        if os.path.exists(partial):
            os.remove(partial)
    return ExperimentOutput(exp, outputs, results, curve, records)


@dataclass
class Sweep:
    """Curves from one shared sample matrix per ``beta``; keys are ``(beta, N, alpha, mode)``."""

    curves: dict[tuple, AccuracyCurve]
    results: dict[tuple, list[CertifyResult]]
    experiments: dict[str, Experiment]


def sweep_curves(
    graph: Graph,
    gt: GroundTruth,
    betas: Sequence[float] = (0.7,),
    sample_sizes: Sequence[int] = (1000,),
    alphas: Sequence[float] = (0.001,),
    modes: Sequence[str] = MODES,
    seed: int = 0,
    **config,
) -> Sweep:
    """Certified-accuracy curves over a parameter grid.

    For each ``beta`` one ``max(sample_sizes)``-row matrix is drawn for the
    union of all modes' victim sets; smaller ``N`` reuse its first rows, and
    every ``alpha`` reuses the same counts.
    """
    N = max(sample_sizes)
    exps = {
        m: prepare_experiment(ExperimentConfig("", "", mode=m, seed=seed, n_samples=N, **config), graph, gt)
        for m in modes
    }
    first = exps[modes[0]]
    sets, spans = [], {}
    for m in modes:
        spans[m] = (len(sets), len(sets) + len(exps[m].victim_sets))
        sets.extend(exps[m].victim_sets)
    curves, results = {}, {}
    for beta in betas:
        spec = NoiseSpec(beta)
        outputs = sample_victim_outputs(first.graph, first.space, sets, spec, N, seed, detector_seed=seed)
        for n_prefix in sample_sizes:
            for alpha in alphas:
                for m in modes:
                    lo, hi = spans[m]
                    res = results_from_outputs(outputs[:n_prefix, lo:hi], first.n, spec, alpha, seed, first.l_max)
                    key = (beta, n_prefix, alpha, m)
                    results[key] = res
                    curves[key] = accuracy_curve(res, m, first.l_max)
    return Sweep(curves, results, exps)


@dataclass
class ValidationReport:
    L: int
    checked: int = 0
    flips: list[dict] = field(default_factory=list)
    exhaustive: bool = False
    exact: bool = False

    @property
    def high_confidence_flips(self) -> int:
        return sum(1 for f in self.flips if f["high_confidence"])

    @property
    def passed(self) -> bool:
        return self.high_confidence_flips == 0


def _delta_family(n: int, L: int, trials: int, rng: np.random.Generator, exhaustive: bool):
    if exhaustive:
        for w in range(1, L + 1):
            for support in itertools.combinations(range(n), w):
                d = np.zeros(n, dtype=np.uint8)
                d[list(support)] = 1
                yield d
        return
    for _ in range(trials):
        d = np.zeros(n, dtype=np.uint8)
        d[rng.choice(n, size=L, replace=False)] = 1
        yield d


def validate_guarantee(
    result: CertifyResult,
    f,
    x,
    trials: int = 200,
    seed: int = 0,
    N: Optional[int] = None,
    alpha: Optional[float] = None,
    batch: Optional[int] = None,
    exact: Optional[bool] = None,
) -> ValidationReport:
    """Look for perturbations within the certified size that change the smoothed output.

    Small spaces (``n <= 14``) are searched exhaustively over all ``|delta| <= L``;
    otherwise ``trials`` random ``delta`` of weight exactly ``L`` are drawn.
    Each perturbed input is re-estimated with fresh noise in batches (by
    default the fewest samples that can decide unanimously), stopping
    as soon as either output has a Clopper-Pearson lower bound above 1/2. A
    flip is *high confidence* when the opposite output reaches that bound.
    With ``exact=True`` (truth-table functions) the smoothed probability is
    computed exactly instead and any ``Pr(f=y_hat) <= 1/2`` is a violation.
    """
    if result.abstain:
        raise ValueError("cannot validate an abstained result")
    x_bits = x.bits if isinstance(x, StructureVector) else np.asarray(x, dtype=np.uint8)
    n = len(x_bits)
    L = result.L
    if exact is None:
        exact = isinstance(f, TruthTableFunction)
    report = ValidationReport(L, exhaustive=n <= 14, exact=exact)
    if L == 0:
        return report
    y = result.y_hat
    spec = NoiseSpec(result.beta)
    alpha = result.alpha if alpha is None else alpha
    N = result.N if N is None else N
    rng = np.random.default_rng([seed, _VALIDATION_STREAM])
    if batch is None:
        batch = min(N, math.floor(math.log(alpha) / math.log(0.5)) + 1)
    if exact:
        from commcert.oracle import bits_to_int, smoothed_prob_all

        num, den = smoothed_prob_all(f, spec, n)
        x_int = bits_to_int(x_bits)
        for d in _delta_family(n, L, trials, rng, report.exhaustive):
            w = x_int ^ bits_to_int(d)
            p1 = int(num[w])
            p_y = p1 if y == 1 else den - p1
            report.checked += 1
            if 2 * p_y <= den:
                report.flips.append({"delta": np.flatnonzero(d).tolist(), "p_y": p_y / den, "high_confidence": True})
        return report
    for k, d in enumerate(_delta_family(n, L, trials, rng, report.exhaustive)):
        shifted = x_bits ^ d
        sub_seed = int(rng.integers(2**63))
        counts = np.zeros(2, dtype=np.int64)
        done = 0
        verdict = None
        while done < N:
            step = min(batch, N - done)
            outs = sample_outputs_range(f, spec, shifted, sub_seed, done, done + step)
            m1 = int(outs.sum())
            counts += (step - m1, m1)
            done += step
            if clopper_pearson_lower(int(counts[y]), done, alpha) > 0.5:
                verdict = "kept"
                break
            if clopper_pearson_lower(int(counts[1 - y]), done, alpha) > 0.5:
                verdict = "flipped"
                break
        report.checked += 1
        if verdict == "flipped" or (verdict is None and counts[1 - y] >= counts[y]):
            report.flips.append({
                "delta": np.flatnonzero(d).tolist(),
                "counts": counts.tolist(),
                "high_confidence": verdict == "flipped",
            })
    return report


def sample_outputs_range(f, spec: NoiseSpec, x_bits: np.ndarray, seed: int, start: int, stop: int) -> np.ndarray:
    out = np.empty(stop - start, dtype=np.uint8)
    for j in range(start, stop):
        eps = sample_noise(len(x_bits), spec, sample_stream(seed, j))
        out[j - start] = f(x_bits ^ eps)
    return out
