"""Command-line front end: read a job config, run it, write CSV reports.

    cqms --config job.ini --out results/ [--seed 3] [--jobs 4] [--strict]

Exit status: 0 when every check passes, 1 on invariant violations, 2 on
configuration errors, 3 when a solver did not converge (rows are flagged),
4 when --strict is set and warnings were raised.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import inductive as ind
from .algebra import AlgElement, AlgState, FiniteDimAlgebra, UnitalHom
from .config import ConfigError, JobConfig, SequenceSpec, StageSpec, parse_config
from .lipschitz import (
    BoundSequences,
    compose_constant_sequences,
    dilated_interval_ladder,
    identity_ladder,
    scaled_ladder,
    verify_iso_bounds,
)
from .mk import MetricResult, distance_matrix, mk_distance
from .seminorms import (
    CommutatorSeminorm,
    FiniteMetricLipschitz,
    GroupActionSeminorm,
    ScaledSeminorm,
    clock_shift_seminorm,
    cyclic_translation_seminorm,
    line_metric,
)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_STRICT = 0, 1, 2, 3, 4


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


def hfmt(x) -> str:
    """Shortest round-tripping form, for the human-readable summary."""
    return repr(float(x)) if isinstance(x, (float, np.floating)) else fmt(x)


def write_csv(path: Path, header: list[str], rows: list[list], delimiter: str = ","):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    path.write_bytes(buf.getvalue().encode("utf-8"))


# -- building objects from specs -------------------------------------------------

def _mat(m) -> np.ndarray:
    return np.array(m, dtype=np.complex128)


def build_stage(spec: StageSpec) -> "ind.LipSeminorm":
    alg = FiniteDimAlgebra(tuple(spec.blocks))
    if spec.seminorm == "metric":
        d = np.array(spec.metric, float) if spec.metric is not None else line_metric(spec.points)
        L = FiniteMetricLipschitz(alg, d)
    elif spec.seminorm == "commutator":
        L = CommutatorSeminorm(alg, _mat(spec.dirac), spec.copies)
    elif spec.group == "cyclic":
        L = cyclic_translation_seminorm(alg.num_blocks, alg)
    elif spec.group == "clock_shift":
        L = clock_shift_seminorm(alg.hilbert_dim, alg)
    else:
        L = GroupActionSeminorm(alg, tuple(_mat(u) for u in spec.unitaries), tuple(spec.lengths))
    return L if spec.scale == 1.0 else ScaledSeminorm(L, spec.scale)


def build_sequence(spec: SequenceSpec) -> ind.InductiveSequence:
    if spec.builtin == "interval_example":
        return ind.interval_example(spec.depth, spec.points_per_stage, spec.scale, spec.new_points)
    if spec.builtin == "constant_metric":
        return ind.constant_metric(depth=spec.depth)
    if spec.builtin == "constant_matrix":
        return ind.constant_matrix(spec.k, spec.depth)
    if spec.builtin == "uhf_like":
        return ind.uhf_like(spec.depth)
    sems = [build_stage(s) for s in spec.stages]
    homs = []
    for n, h in enumerate(spec.homs):
        us = tuple(_mat(u) for u in h.unitaries) or None
        homs.append(UnitalHom(sems[n].algebra, sems[n + 1].algebra, np.array(h.multiplicities),
                              us, check=False))
    return ind.InductiveSequence(tuple(sems), tuple(homs), "custom")


def build_state(spec, alg: FiniteDimAlgebra) -> AlgState:
    if spec.kind == "dirac":
        return AlgState.dirac(alg, spec.point)
    if spec.kind == "probabilities":
        return AlgState.from_probabilities(alg, [v.real for v in spec.values])
    if spec.kind == "maximally_mixed":
        return AlgState.maximally_mixed(alg)
    return AlgState.pure(alg, spec.block, spec.values)


def build_ladder(cfg: JobConfig, seq: ind.InductiveSequence):
    lad = cfg.ladder
    if lad.builtin == "identity":
        ladder, bounds = identity_ladder(seq)
    elif lad.builtin == "scaled":
        ladder, bounds = scaled_ladder(seq, lad.factor)
    else:
        sq = cfg.sequence
        if sq.builtin != "interval_example":
            raise ConfigError(["[ladder] builtin = dilated needs builtin = interval_example"])
        ladder, bounds = dilated_interval_ladder(sq.depth, sq.points_per_stage, lad.dilation)
    if cfg.bounds is not None:
        b = cfg.bounds
        pick = lambda x, y: list(x) if x is not None else y  # noqa: E731
        bounds = BoundSequences(pick(b.lam, bounds.lam), pick(b.gamma, bounds.gamma),
                                pick(b.alpha, None), pick(b.beta, None), pick(b.theta, None),
                                b.provenance)
    return ladder, bounds


# -- jobs ------------------------------------------------------------------------

@dataclass
class JobResult:
    status: int
    files: list[str] = field(default_factory=list)
    summary: list[str] = field(default_factory=list)
    violations: int = 0
    nonconverged: int = 0
    warnings: list[str] = field(default_factory=list)


def _metric_row(r: MetricResult) -> list:
    return [r.value, r.lower_bound, r.upper_bound, r.iterations, r.method,
            r.converged, ";".join(r.flags)]


def _nonconverged(results) -> int:
    return sum(1 for r in results if "not_converged" in r.flags)


def _elements(cfg: JobConfig, seq: ind.InductiveSequence, top: int) -> list[ind.LimitElement]:
    els = []
    for e in cfg.element_specs:
        if e.stage > top:
            raise ConfigError([f"element at stage {e.stage} lies above truncation {top}"])
        alg = seq.algebra(e.stage)
        blocks = [_mat(b) for b in e.blocks]
        if alg.is_commutative and len(blocks) == 1 and blocks[0].shape == (1, alg.num_blocks):
            blocks = [b.reshape(1, 1) for b in blocks[0][0]]   # a function as one row
        try:
            els.append(ind.LimitElement(e.stage, AlgElement(alg, blocks)))
        except ValueError as exc:
            raise ConfigError([f"element at stage {e.stage}: {exc}"]) from exc
    for n in range(1, top + 1):
        els += ind.sample_elements(seq, n, cfg.elements, seed=cfg.seed * 1000 + n)
    return els


def run_job(cfg: JobConfig, out: Path, jobs: int = 1, strict: bool = False) -> JobResult:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    seq = build_sequence(cfg.sequence)
    res = JobResult(EXIT_OK)
    res.summary.append(f"job: {cfg.kind}")
    res.summary.append(f"sequence: {seq.label} (depth {seq.depth})")
    res.summary.append(f"seed: {cfg.seed}")
    res.warnings += list(seq.notes)
    N = cfg.truncation or seq.depth
    if N > seq.depth:
        raise ConfigError([f"truncation {N} exceeds the sequence depth {seq.depth}"])
    handler = _JOBS[cfg.kind]
    handler(cfg, seq, N, out, jobs, res)
    if res.violations:
        res.status = EXIT_VIOLATION
    elif res.nonconverged:
        res.status = EXIT_NONCONVERGED
    elif strict and res.warnings:
        res.status = EXIT_STRICT
    res.summary.append(f"violations: {res.violations}")
    res.summary.append(f"non-converged solves: {res.nonconverged}")
    for w in res.warnings:
        res.summary.append(f"warning: {w}")
    res.summary.append(f"status: {res.status}")
    (out / "summary.txt").write_bytes(("\n".join(res.summary) + "\n").encode("utf-8"))
    res.files.append("summary.txt")
    return res


def _job_validate(cfg, seq, N, out, jobs, res):
    rep = ind.validate_sequence(seq, seed=cfg.seed)
    rows = [[c.name, c.stage, c.ok, c.value, c.detail] for c in rep.checks]
    structural = {"hom_count", "chaining", "unitality"}
    if any(c.name in structural for c in rep.failures):
        res.summary.append("tower consistency not checked: connecting homs are invalid")
    else:
        mu = ind.sample_states(seq.algebra(seq.depth), 1, np.random.default_rng(cfg.seed))[0]
        tower = ind.tower_from_state(seq, seq.depth, mu)
        ok = tower.consistency_residual <= 1e-10
        rows.append(["tower_consistency", seq.depth, ok, tower.consistency_residual, ""])
    if cfg.ladder is not None:
        ladder, _ = build_ladder(cfg, seq)
        problems = ladder.consistency_problems()
        rows.append(["ladder_commutativity", 0, not problems, float(len(problems)), "; ".join(problems)])
    write_csv(out / "checks.csv", ["check", "stage", "ok", "value", "detail"], rows)
    res.files.append("checks.csv")
    failed = [r for r in rows if not r[2]]
    res.violations += len(failed)
    lip = [r for r in rows if r[0] == "lipschitz_preserved"]
    if lip:
        res.summary.append("lipschitz preservation max defect: " + hfmt(max(r[3] for r in lip)))
    res.summary.append(f"checks: {len(rows)} run, {len(failed)} failed")
    for r in failed:
        res.summary.append(f"  failed {r[0]} at stage {r[1]}: {r[4]}")


def _states(cfg, alg, rng) -> list[AlgState]:
    try:
        states = [build_state(s, alg) for s in cfg.states]
    except (ValueError, IndexError) as exc:
        raise ConfigError([f"[states]: {exc}"]) from exc
    states += ind.sample_states(alg, cfg.random_states, rng) if cfg.random_states else []
    return states


def _job_metric(cfg, seq, N, out, jobs, res):
    stage = cfg.states_stage or N
    alg = seq.algebra(stage)
    mu, nu = _states(cfg, alg, np.random.default_rng(cfg.seed))[:2]
    T, S = ind.tower_from_state(seq, stage, mu), ind.tower_from_state(seq, stage, nu)
    pm = ind.product_metric(seq, T, S, stage, cfg.solver, jobs)
    rows = [[n] + _metric_row(r) for n, r in enumerate(pm.stages, 1)]
    write_csv(out / "metric.csv", ["stage", "value", "lower", "upper", "iterations", "method",
                                   "converged", "flags"], rows)
    write_csv(out / "product_metric.csv", ["truncation", "partial", "lower", "upper", "tail"],
              [[stage, pm.partial, pm.lower, pm.upper, pm.tail]])
    write_csv(out / "plot_metric.tsv", ["stage", "value"], [[n, r.value] for n, r in
                                                            enumerate(pm.stages, 1)], "\t")
    res.files += ["metric.csv", "product_metric.csv", "plot_metric.tsv"]
    res.nonconverged += _nonconverged(pm.stages)
    res.summary.append(f"stage {stage} distance: {hfmt(pm.stages[-1].value)} "
                       f"in [{hfmt(pm.stages[-1].lower_bound)}, {hfmt(pm.stages[-1].upper_bound)}]")
    res.summary.append(f"product metric through stage {stage}: partial {hfmt(pm.partial)}, "
                       f"certified [{hfmt(pm.lower)}, {hfmt(pm.upper)}]")


def _job_distance_matrix(cfg, seq, N, out, jobs, res):
    stage = cfg.states_stage or N
    states = _states(cfg, seq.algebra(stage), np.random.default_rng(cfg.seed))
    if len(states) < 2:
        raise ConfigError(["distance_matrix needs at least two states"])
    M = distance_matrix(seq.seminorm(stage), states, cfg.solver, jobs)
    n = len(states)
    write_csv(out / "distance_matrix.csv", [""] + [f"s{j + 1}" for j in range(n)],
              [[f"s{i + 1}"] + [M[i][j].value for j in range(n)] for i in range(n)])
    rows = [[i + 1, j + 1] + _metric_row(M[i][j]) for i in range(n) for j in range(i + 1, n)]
    write_csv(out / "distances.csv", ["i", "j", "value", "lower", "upper", "iterations", "method",
                                      "converged", "flags"], rows)
    write_csv(out / "plot_distances.tsv", ["pair", "value"],
              [[k + 1, r[2]] for k, r in enumerate(rows)], "\t")
    res.files += ["distance_matrix.csv", "distances.csv", "plot_distances.tsv"]
    res.nonconverged += _nonconverged(M[i][j] for i in range(n) for j in range(i + 1, n))
    res.summary.append(f"{n} states at stage {stage}, {len(rows)} pairs")


def _seminorm_rows(cfg, seq, N, jobs, res):
    pairs = ind.sample_tower_pairs(seq, cfg.pairs, seed=cfg.seed, N=N)
    pd = ind.pair_distances(seq, pairs, N, cfg.solver, jobs)
    res.nonconverged += sum(_nonconverged(m.stages) for m in pd.metrics)
    rows = []
    for k, a in enumerate(_elements(cfg, seq, N)):
        lb = ind.limit_seminorm_lower_bound(seq, a, pd)
        ub = ind.prop36_upper_bound(seq, a)
        bad = lb.value > ub + cfg.check_tol * max(1.0, ub)
        rows.append([a.stage, k, lb.value, ub, lb.used, len(lb.skipped), "violation" if bad else "ok"])
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows, pd


def _job_limit_seminorm(cfg, seq, N, out, jobs, res, name="limit_seminorm"):
    rows, pd = _seminorm_rows(cfg, seq, N, jobs, res)
    write_csv(out / f"{name}.csv", ["stage", "element_id", "lower", "upper", "pairs_used",
                                    "pairs_skipped", "status"], rows)
    plot = []
    for n in range(1, N + 1):
        ratios = [r[2] / r[3] for r in rows if r[0] == n and r[3] > 0 and math.isfinite(r[3])]
        plot.append([n, max(ratios, default=0.0)])
    write_csv(out / f"plot_{name}.tsv", ["stage", "max_lower_over_upper"], plot, "\t")
    res.files += [f"{name}.csv", f"plot_{name}.tsv"]
    res.violations += sum(r[6] == "violation" for r in rows)
    skipped = sum(r[5] for r in rows)
    if skipped:
        res.warnings.append(f"{skipped} pair evaluations skipped (rho interval reaches 0)")
    res.summary.append(f"{len(pd)} tower pairs, {len(rows)} elements, truncation {N}")
    res.summary.append("largest lower/upper ratio: " + hfmt(max(p[1] for p in plot)))


def _job_verify_prop36(cfg, seq, N, out, jobs, res):
    _job_limit_seminorm(cfg, seq, N, out, jobs, res, name="prop36")


def _job_verify_section4(cfg, seq, N, out, jobs, res):
    ladder, bounds = build_ladder(cfg, seq)
    problems = ladder.consistency_problems()
    if problems:
        res.violations += len(problems)
        res.summary += ["inconsistent ladder:"] + [f"  {p}" for p in problems]
        return
    pa = ind.pair_distances(ladder.seq_A, ind.sample_tower_pairs(ladder.seq_A, cfg.pairs, cfg.seed, N),
                            N, cfg.solver, jobs)
    pb = ind.pair_distances(ladder.seq_B, ind.sample_tower_pairs(ladder.seq_B, cfg.pairs, cfg.seed + 1, N),
                            N, cfg.solver, jobs)
    res.nonconverged += sum(_nonconverged(m.stages) for m in pa.metrics + pb.metrics)
    eA = _elements(cfg, ladder.seq_A, N)
    eB = [e for n in range(1, N) for e in ind.sample_elements(ladder.seq_B, n, cfg.elements,
                                                              seed=cfg.seed * 1000 + 500 + n)]
    rep = verify_iso_bounds(ladder, bounds, eA, eB, pa, pb, cfg.check_tol)
    header = ["stage", "element_id", "lhs_lower", "rhs", "margin", "status"]
    for direction in ("forward", "backward"):
        rows = [[r.stage, r.element_id, r.lhs_lower, r.rhs, r.margin, r.status]
                for r in rep.rows if r.direction == direction]
        write_csv(out / f"section4_{direction}.csv", header, rows)
        m = rep.margins(direction)
        res.summary.append(f"{direction}: {m.get('count', 0)} elements, min margin "
                           f"{hfmt(m.get('min_margin', float('nan')))}, max lhs/rhs "
                           f"{hfmt(m.get('max_ratio', float('nan')))}")
    plot = []
    for n in range(1, N + 1):
        for direction in ("forward", "backward"):
            ratios = [r.lhs_lower / r.rhs for r in rep.rows
                      if r.stage == n and r.direction == direction and r.rhs > 0]
            if ratios:
                plot.append([n, direction, max(ratios)])
    write_csv(out / "plot_section4.tsv", ["stage", "direction", "max_lhs_over_rhs"], plot, "\t")
    res.files += ["section4_forward.csv", "section4_backward.csv", "plot_section4.tsv"]
    res.violations += len(rep.violations)
    res.summary.append(f"ladder: {ladder.label}; sup lambda {hfmt(max(bounds.lam))}, "
                       f"sup gamma {hfmt(max(bounds.gamma))} ({bounds.provenance})")
    comp = compose_constant_sequences(bounds)
    res.summary.append("composite sups: " + ", ".join(f"{k} {hfmt(v)}" for k, v in comp.sups.items())
                       + f"; sup-product check {'ok' if comp.sup_product_ok else 'FAILED'}")
    if not comp.sup_product_ok:
        res.violations += 1
    if rep.epistemic != "certified":
        res.warnings.append("constants are sampled lower bounds; checks are necessary only")


def _job_probe(cfg, seq, N, out, jobs, res):
    base = ind.tower_from_state(seq, N, AlgState.maximally_mixed(seq.algebra(N)))
    sub = seq if N == seq.depth else ind.InductiveSequence(
        seq.seminorms[:N], seq.homs[:N - 1], seq.label, seq.kind,
        seq.points[:N] if seq.points else None)
    rng = np.random.default_rng(cfg.seed)
    samples = []
    for _ in range(cfg.samples):
        n = int(rng.integers(1, N + 1))
        a = sub.algebra(n).random_element(rng, hermitian=True)
        samples.append(ind.LimitElement(n, a * float(rng.uniform())))
    rows = []
    for eps in cfg.epsilon:
        rep = ind.total_boundedness_probe(sub, base, eps, samples=samples, bound=cfg.probe_bound)
        rows.append([eps, rep.sample_size, rep.net_size, rep.max_element_norm])
    write_csv(out / "covering.csv", ["epsilon", "sample_size", "net_size", "max_element_norm"], rows)
    write_csv(out / "plot_covering.tsv", ["epsilon", "net_size"], [[r[0], r[2]] for r in rows], "\t")
    res.files += ["covering.csv", "plot_covering.tsv"]
    res.summary.append("net sizes: " + ", ".join(f"eps {hfmt(r[0])} -> {r[2]}" for r in rows))


_JOBS = {
    "validate": _job_validate,
    "metric": _job_metric,
    "distance_matrix": _job_distance_matrix,
    "limit_seminorm": _job_limit_seminorm,
    "verify_prop36": _job_verify_prop36,
    "verify_section4": _job_verify_section4,
    "probe_total_boundedness": _job_probe,
}


def main(argv: list[str] | None = None) -> int:
    p = argparse.ArgumentParser(prog="cqms", description=__doc__.split("\n")[0])
    p.add_argument("--config", required=True, type=Path, help="job configuration file")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker hint")
    p.add_argument("--strict", action="store_true", help="treat warnings as failures")
    args = p.parse_args(argv)
    try:
        cfg = parse_config(args.config.read_text())
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        res = run_job(cfg, args.out, max(1, args.jobs), args.strict)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"cqms: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(res.summary))
    return res.status


if __name__ == "__main__":
    sys.exit(main())
