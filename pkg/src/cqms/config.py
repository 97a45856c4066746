"""Job configuration: a hand-writable `[section]` / `key = value` format.

Matrices are written row-major with `;` between rows and whitespace between
entries; complex entries are `re,im`.  Elements with several blocks separate
the blocks with `|`.  Parsing is strict: unknown sections and keys are
errors, and all problems are reported together with their line numbers.

    [job]
    kind = verify_prop36
    seed = 7
    pairs = 200
    elements = 20

    [sequence]
    builtin = interval_example
    depth = 4
    points_per_stage = 9
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any

import numpy as np

from .mk import METHODS, SolverConfig
from .seminorms import metric_table_problems

JOB_KINDS = ("validate", "metric", "distance_matrix", "limit_seminorm", "verify_prop36",
             "verify_section4", "probe_total_boundedness")
SEQUENCE_BUILTINS = ("interval_example", "constant_metric", "constant_matrix", "uhf_like", "custom")
LADDER_BUILTINS = ("identity", "scaled", "dilated")
SEMINORM_KINDS = ("metric", "commutator", "group")

Matrix = tuple[tuple[complex, ...], ...]


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


# -- spec dataclasses (hashable, comparable) ----------------------------------

@dataclass(frozen=True)
class StageSpec:
    blocks: tuple[int, ...]
    seminorm: str
    metric: Matrix | None = None
    points: tuple[float, ...] | None = None
    dirac: Matrix | None = None
    copies: int = 1
    group: str | None = None
    unitaries: tuple[Matrix, ...] = ()
    lengths: tuple[float, ...] = ()
    scale: float = 1.0


@dataclass(frozen=True)
class HomSpec:
    multiplicities: tuple[tuple[int, ...], ...]
    unitaries: tuple[Matrix, ...] = ()


@dataclass(frozen=True)
class SequenceSpec:
    builtin: str = "interval_example"
    depth: int = 4
    points_per_stage: int = 9
    new_points: int = 6
    scale: float = 1.0
    k: int = 2
    stages: tuple[StageSpec, ...] = ()
    homs: tuple[HomSpec, ...] = ()


@dataclass(frozen=True)
class LadderSpec:
    builtin: str = "scaled"
    factor: float = 3.0
    dilation: float = 2.0


@dataclass(frozen=True)
class BoundsSpec:
    lam: tuple[float, ...] | None = None
    gamma: tuple[float, ...] | None = None
    alpha: tuple[float, ...] | None = None
    beta: tuple[float, ...] | None = None
    theta: tuple[float, ...] | None = None
    provenance: str = "analytic"


@dataclass(frozen=True)
class StateSpec:
    kind: str                       # dirac | probabilities | maximally_mixed | pure
    point: int = 0
    block: int = 0
    values: tuple[complex, ...] = ()


@dataclass(frozen=True)
class ElementSpec:
    stage: int
    blocks: tuple[Matrix, ...]


@dataclass(frozen=True)
class JobConfig:
    kind: str
    seed: int = 0
    truncation: int | None = None
    pairs: int = 50
    elements: int = 10
    samples: int = 200
    epsilon: tuple[float, ...] = (0.5, 0.25, 0.1)
    probe_bound: str = "limit"
    check_tol: float = 1e-7
    solver: SolverConfig = field(default_factory=SolverConfig)
    sequence: SequenceSpec = field(default_factory=SequenceSpec)
    ladder: LadderSpec | None = None
    bounds: BoundsSpec | None = None
    states_stage: int | None = None
    states: tuple[StateSpec, ...] = ()
    random_states: int = 0
    element_specs: tuple[ElementSpec, ...] = ()

    def with_seed(self, seed: int) -> "JobConfig":
        return replace(self, seed=seed, solver=replace(self.solver, seed=seed))


# -- low-level value parsing ---------------------------------------------------

def _complex(tok: str) -> complex:
    if "," in tok:
        re_, im = tok.split(",", 1)
        return complex(float(re_), float(im))
    return complex(float(tok), 0.0)


def parse_matrix(text: str, kind=_complex) -> tuple[tuple, ...]:
    rows = [r.split() for r in text.split(";")]
    if any(not r for r in rows):
        raise ValueError("empty matrix row")
    out = tuple(tuple(kind(t) for t in r) for r in rows)
    if len({len(r) for r in out}) != 1:
        raise ValueError("ragged matrix rows")
    return out


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split())


def _floats(text: str) -> tuple[float, ...]:
    vals = tuple(float(t) for t in text.split())
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _pos_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise ValueError(f"expected a positive integer, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise ValueError(f"expected a nonnegative integer, got {v}")
    return v


def _pos_float(text: str) -> float:
    v = float(text)
    if not (v > 0) or math.isinf(v):
        raise ValueError(f"expected a positive finite number, got {text}")
    return v


def _choice(options):
    def parse(text: str) -> str:
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


def fmt_float(x: float) -> str:
    return repr(float(x))


def fmt_complex(z: complex) -> str:
    return f"{fmt_float(z.real)},{fmt_float(z.imag)}"


def fmt_matrix(m, entry=fmt_complex) -> str:
    return "; ".join(" ".join(entry(x) for x in row) for row in m)


# -- reader ---------------------------------------------------------------------

_SECTION = re.compile(r"^\[([A-Za-z_]+)(?:\.(\d+))?\]$")


def _read(text: str) -> tuple[list[tuple[str, int | None, dict[str, tuple[str, int]], int]], list[str]]:
    """Sections as (name, index, {key: (value, line)}, header line)."""
    sections, problems = [], []
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            current = (m.group(1), int(m.group(2)) if m.group(2) else None, {}, lineno)
            sections.append(current)
            continue
        if "=" not in line:
            problems.append(f"line {lineno}: expected 'key = value' or '[section]'")
            continue
        if current is None:
            problems.append(f"line {lineno}: key outside any section")
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if key in current[2]:
            problems.append(f"line {lineno}: duplicate key {key!r} in [{_name(current)}]")
            continue
        current[2][key] = (value, lineno)
    return sections, problems


def _name(sec) -> str:
    return sec[0] if sec[1] is None else f"{sec[0]}.{sec[1]}"


class _Section:
    """Typed access to one section's keys, recording problems with line numbers."""

    def __init__(self, sec, problems: list[str]):
        self.name = _name(sec)
        self.keys = sec[2]
        self.line = sec[3]
        self.problems = problems
        self.used: set[str] = set()

    def get(self, key: str, parse, default: Any = None, required: bool = False):
        self.used.add(key)
        if key not in self.keys:
            if required:
                self.problems.append(f"line {self.line}: [{self.name}] is missing required key {key!r}")
            return default
        value, lineno = self.keys[key]
        try:
            return parse(value)
        except (ValueError, TypeError) as exc:
            self.problems.append(f"line {lineno}: [{self.name}] {key}: {exc}")
            return default

    def indexed(self, prefix: str) -> dict[int, str]:
        out = {}
        for key in self.keys:
            if key.startswith(prefix + "."):
                self.used.add(key)
                idx = key[len(prefix) + 1:]
                if idx.isdigit():
                    out[int(idx)] = key
                else:
                    self.problems.append(f"line {self.keys[key][1]}: [{self.name}] bad key {key!r}")
        return dict(sorted(out.items()))

    def finish(self):
        for key, (_, lineno) in self.keys.items():
            if key not in self.used:
                self.problems.append(f"line {lineno}: [{self.name}] unknown key {key!r}")


# -- parse -------------------------------------------------------------------

def parse_config(text: str) -> JobConfig:
    sections, problems = _read(text)
    by_name: dict[str, Any] = {}
    stages: dict[int, Any] = {}
    homs: dict[int, Any] = {}
    for sec in sections:
        name, idx = sec[0], sec[1]
        if name in ("stage", "hom") and idx is not None:
            target = stages if name == "stage" else homs
            if idx in target:
                problems.append(f"line {sec[3]}: duplicate section [{_name(sec)}]")
            target[idx] = sec
        elif name in ("job", "solver", "sequence", "ladder", "bounds", "states", "elements") and idx is None:
            if name in by_name:
                problems.append(f"line {sec[3]}: duplicate section [{name}]")
            by_name[name] = sec
        else:
            problems.append(f"line {sec[3]}: unknown section [{_name(sec)}]")
    if "job" not in by_name:
        problems.append("line 1: missing [job] section")
        raise ConfigError(problems)

    opened: list[_Section] = []

    def open_(sec) -> _Section:
        s = _Section(sec, problems)
        opened.append(s)
        return s

    job = open_(by_name["job"])
    kind = job.get("kind", _choice(JOB_KINDS), required=True)
    kw: dict[str, Any] = dict(
        seed=job.get("seed", int, 0),
        truncation=job.get("truncation", _pos_int),
        pairs=job.get("pairs", _pos_int, 50),
        elements=job.get("elements", _pos_int, 10),
        samples=job.get("samples", _pos_int, 200),
        epsilon=job.get("epsilon", lambda t: tuple(_pos_float(x) for x in t.split()), (0.5, 0.25, 0.1)),
        probe_bound=job.get("probe_bound", _choice(("limit", "stage")), "limit"),
        check_tol=job.get("check_tol", _pos_float, 1e-7),
    )
    if "solver" in by_name:
        s = open_(by_name["solver"])
        try:
            kw["solver"] = SolverConfig(
                method=s.get("method", _choice(METHODS), "auto"),
                max_iters=s.get("max_iters", _pos_int, 5000),
                tol=s.get("tol", _pos_float, 1e-7),
                grid_resolution=s.get("grid_resolution", _pos_int, 101),
                seed=kw["seed"] or 0,
            )
        except ValueError as exc:
            problems.append(f"line {s.line}: [solver] {exc}")
    else:
        kw["solver"] = SolverConfig(seed=kw["seed"] or 0)

    if "sequence" in by_name:
        kw["sequence"] = _parse_sequence(open_(by_name["sequence"]), stages, homs, open_, problems)
    elif stages or homs:
        problems.append("line 1: [stage.N]/[hom.N] sections need a [sequence] section with builtin = custom")

    if "ladder" in by_name:
        s = open_(by_name["ladder"])
        kw["ladder"] = LadderSpec(s.get("builtin", _choice(LADDER_BUILTINS), "scaled"),
                                  s.get("factor", _pos_float, 3.0), s.get("dilation", _pos_float, 2.0))
    if "bounds" in by_name:
        s = open_(by_name["bounds"])
        pos = lambda t: tuple(_pos_float(x) for x in t.split())  # noqa: E731
        kw["bounds"] = BoundsSpec(s.get("lambda", pos), s.get("gamma", pos), s.get("alpha", pos),
                                  s.get("beta", pos), s.get("theta", pos),
                                  s.get("provenance", _choice(("analytic", "sampled")), "analytic"))
    if "states" in by_name:
        s = open_(by_name["states"])
        kw["states_stage"] = s.get("stage", _pos_int)
        kw["random_states"] = s.get("random", _nonneg_int, 0)
        specs = []
        for idx, key in s.indexed("state").items():
            value, lineno = s.keys[key]
            try:
                specs.append(parse_state(value))
            except ValueError as exc:
                problems.append(f"line {lineno}: [states] {key}: {exc}")
        kw["states"] = tuple(specs)
    if "elements" in by_name:
        s = open_(by_name["elements"])
        specs = []
        for idx, key in s.indexed("element").items():
            value, lineno = s.keys[key]
            try:
                specs.append(parse_element(value))
            except ValueError as exc:
                problems.append(f"line {lineno}: [elements] {key}: {exc}")
        kw["element_specs"] = tuple(specs)

    for s in opened:
        s.finish()
    if kind == "verify_section4" and "ladder" not in by_name:
        problems.append(f"line {job.line}: verify_section4 needs a [ladder] section")
    if kind in ("metric",) and len(kw.get("states", ())) + kw.get("random_states", 0) < 2:
        problems.append(f"line {job.line}: metric needs two states in [states]")
    if problems:
        raise ConfigError(problems)
    return JobConfig(kind=kind, **kw)


def _parse_sequence(s: _Section, stages, homs, open_, problems) -> SequenceSpec:
    builtin = s.get("builtin", _choice(SEQUENCE_BUILTINS), "interval_example")
    allowed = {
        "interval_example": ("depth", "points_per_stage", "new_points", "scale"),
        "constant_metric": ("depth",),
        "constant_matrix": ("depth", "k"),
        "uhf_like": ("depth",),
        "custom": (),
    }.get(builtin, ())
    kw = {}
    parsers = {"depth": _pos_int, "points_per_stage": _pos_int, "new_points": _pos_int,
               "scale": _pos_float, "k": _pos_int}
    for key in ("depth", "points_per_stage", "new_points", "scale", "k"):
        if key in s.keys and key not in allowed:
            continue  # reported as unknown by finish()
        val = s.get(key, parsers[key])
        if val is not None:
            kw[key] = val
    if builtin == "custom":
        if not stages:
            problems.append(f"line {s.line}: custom sequence needs [stage.1] ...")
        if sorted(stages) != list(range(1, len(stages) + 1)):
            problems.append(f"line {s.line}: stages must be numbered 1..N without gaps")
        if sorted(homs) != list(range(1, len(stages))):
            problems.append(f"line {s.line}: custom sequence with {len(stages)} stages needs "
                            f"[hom.1] .. [hom.{len(stages) - 1}]")
        stage_specs = tuple(_parse_stage(open_(stages[i])) for i in sorted(stages))
        hom_specs = tuple(_parse_hom(open_(homs[i])) for i in sorted(homs))
        return SequenceSpec("custom", depth=len(stage_specs), stages=stage_specs, homs=hom_specs)
    if stages or homs:
        problems.append(f"line {s.line}: [stage.N]/[hom.N] sections only apply to builtin = custom")
    return SequenceSpec(builtin, **kw)


def _parse_stage(s: _Section) -> StageSpec:
    blocks = s.get("blocks", lambda t: tuple(_pos_int(x) for x in t.split()), required=True)
    kind = s.get("seminorm", _choice(SEMINORM_KINDS), required=True)
    spec: dict[str, Any] = {"scale": s.get("scale", _pos_float, 1.0)}
    if kind == "metric":
        spec["metric"] = s.get("metric", lambda t: parse_matrix(t, float))
        spec["points"] = s.get("points", _floats)
        if (spec["metric"] is None) == (spec["points"] is None):
            s.problems.append(f"line {s.line}: [{s.name}] metric seminorm needs exactly one of "
                              "'metric' or 'points'")
        if spec["metric"] is not None:
            d = np.array(spec["metric"], dtype=float)
            line = s.keys["metric"][1]
            for p in metric_table_problems(d):
                s.problems.append(f"line {line}: [{s.name}] metric: {p}")
            if blocks and d.shape[0] != len(blocks):
                s.problems.append(f"line {line}: [{s.name}] metric table has {d.shape[0]} rows "
                                  f"for {len(blocks)} points")
        if blocks and any(b != 1 for b in blocks):
            s.problems.append(f"line {s.line}: [{s.name}] metric seminorm needs 1x1 blocks")
    elif kind == "commutator":
        spec["dirac"] = s.get("dirac", parse_matrix, required=True)
        spec["copies"] = s.get("copies", _pos_int, 1)
        D = spec["dirac"]
        if D is not None and blocks:
            n = len(D)
            if len(D[0]) != n:
                s.problems.append(f"line {s.keys['dirac'][1]}: [{s.name}] dirac must be square")
            elif n != sum(blocks) * spec["copies"]:
                s.problems.append(f"line {s.keys['dirac'][1]}: [{s.name}] dirac is {n}x{n}, needs "
                                  f"{sum(blocks) * spec['copies']} (copies x hilbert dimension)")
            elif not np.allclose(np.array(D), np.array(D).conj().T, atol=1e-12):
                s.problems.append(f"line {s.keys['dirac'][1]}: [{s.name}] dirac must be hermitian")
    elif kind == "group":
        spec["group"] = s.get("group", _choice(("cyclic", "clock_shift", "custom")), "custom")
        if spec["group"] == "custom":
            spec["unitaries"] = tuple(s.get(key, parse_matrix) for key in s.indexed("unitary").values())
            spec["lengths"] = s.get("lengths", lambda t: tuple(_pos_float(x) for x in t.split()), ())
            if len(spec["lengths"]) != len(spec["unitaries"]):
                s.problems.append(f"line {s.line}: [{s.name}] one length per unitary required")
    return StageSpec(blocks or (1,), kind or "metric", **spec)


def _parse_hom(s: _Section) -> HomSpec:
    m = s.get("multiplicities", lambda t: parse_matrix(t, int), required=True) or ((1,),)
    us = tuple(s.get(key, parse_matrix) for key in s.indexed("unitary").values())
    return HomSpec(m, us)


def parse_state(text: str) -> StateSpec:
    parts = text.split()
    if not parts:
        raise ValueError("empty state")
    kind, rest = parts[0], parts[1:]
    if kind == "dirac" and len(rest) == 1:
        return StateSpec("dirac", point=_nonneg_int(rest[0]))
    if kind == "probabilities" and rest:
        p = tuple(complex(float(x)) for x in rest)
        if any(x.real < 0 for x in p) or abs(sum(x.real for x in p) - 1) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        return StateSpec("probabilities", values=p)
    if kind == "maximally_mixed" and not rest:
        return StateSpec("maximally_mixed")
    if kind == "pure" and len(rest) >= 2:
        vals = tuple(_complex(t) for t in rest[1:])
        if not any(vals):
            raise ValueError("pure state vector is zero")
        return StateSpec("pure", block=_nonneg_int(rest[0]), values=vals)
    raise ValueError("expected 'dirac <i>', 'probabilities <p..>', 'maximally_mixed' or "
                     "'pure <block> <re,im ...>'")


def parse_element(text: str) -> ElementSpec:
    if ":" not in text:
        raise ValueError("expected '<stage> : <block> | <block> ...'")
    stage, body = text.split(":", 1)
    return ElementSpec(_pos_int(stage.strip()), tuple(parse_matrix(b) for b in body.split("|")))


# -- serialize -------------------------------------------------------------------

def _fmt_state(s: StateSpec) -> str:
    if s.kind == "dirac":
        return f"dirac {s.point}"
    if s.kind == "probabilities":
        return "probabilities " + " ".join(fmt_float(x.real) for x in s.values)
    if s.kind == "maximally_mixed":
        return "maximally_mixed"
    return f"pure {s.block} " + " ".join(fmt_complex(x) for x in s.values)


def _floats_str(xs) -> str:
    return " ".join(fmt_float(x) for x in xs)


def serialize_config(cfg: JobConfig) -> str:
    out = ["[job]", f"kind = {cfg.kind}", f"seed = {cfg.seed}"]
    if cfg.truncation is not None:
        out.append(f"truncation = {cfg.truncation}")
    out += [f"pairs = {cfg.pairs}", f"elements = {cfg.elements}", f"samples = {cfg.samples}",
            f"epsilon = {_floats_str(cfg.epsilon)}", f"probe_bound = {cfg.probe_bound}",
            f"check_tol = {fmt_float(cfg.check_tol)}", ""]
    sv = cfg.solver
    out += ["[solver]", f"method = {sv.method}", f"max_iters = {sv.max_iters}",
            f"tol = {fmt_float(sv.tol)}", f"grid_resolution = {sv.grid_resolution}", ""]
    sq = cfg.sequence
    out += ["[sequence]", f"builtin = {sq.builtin}"]
    if sq.builtin == "interval_example":
        out += [f"depth = {sq.depth}", f"points_per_stage = {sq.points_per_stage}",
                f"new_points = {sq.new_points}", f"scale = {fmt_float(sq.scale)}"]
    elif sq.builtin == "constant_matrix":
        out += [f"depth = {sq.depth}", f"k = {sq.k}"]
    elif sq.builtin != "custom":
        out += [f"depth = {sq.depth}"]
    out.append("")
    for i, st in enumerate(sq.stages, 1):
        out += [f"[stage.{i}]", "blocks = " + " ".join(map(str, st.blocks)), f"seminorm = {st.seminorm}",
                f"scale = {fmt_float(st.scale)}"]
        if st.metric is not None:
            out.append("metric = " + fmt_matrix(st.metric, fmt_float))
        if st.points is not None:
            out.append("points = " + _floats_str(st.points))
        if st.dirac is not None:
            out += ["dirac = " + fmt_matrix(st.dirac), f"copies = {st.copies}"]
        if st.seminorm == "group":
            out.append(f"group = {st.group}")
            for j, u in enumerate(st.unitaries, 1):
                out.append(f"unitary.{j} = " + fmt_matrix(u))
            if st.group == "custom":
                out.append("lengths = " + _floats_str(st.lengths))
        out.append("")
    for i, h in enumerate(sq.homs, 1):
        out += [f"[hom.{i}]", "multiplicities = " + fmt_matrix(h.multiplicities, str)]
        for j, u in enumerate(h.unitaries, 1):
            out.append(f"unitary.{j} = " + fmt_matrix(u))
        out.append("")
    if cfg.ladder is not None:
        lad = cfg.ladder
        out += ["[ladder]", f"builtin = {lad.builtin}", f"factor = {fmt_float(lad.factor)}",
                f"dilation = {fmt_float(lad.dilation)}", ""]
    if cfg.bounds is not None:
        b = cfg.bounds
        out.append("[bounds]")
        for key, val in (("lambda", b.lam), ("gamma", b.gamma), ("alpha", b.alpha),
                         ("beta", b.beta), ("theta", b.theta)):
            if val is not None:
                out.append(f"{key} = {_floats_str(val)}")
        out += [f"provenance = {b.provenance}", ""]
    if cfg.states or cfg.random_states or cfg.states_stage is not None:
        out.append("[states]")
        if cfg.states_stage is not None:
            out.append(f"stage = {cfg.states_stage}")
        out.append(f"random = {cfg.random_states}")
        for i, s in enumerate(cfg.states, 1):
            out.append(f"state.{i} = {_fmt_state(s)}")
        out.append("")
    if cfg.element_specs:
        out.append("[elements]")
        for i, e in enumerate(cfg.element_specs, 1):
            out.append(f"element.{i} = {e.stage} : " + " | ".join(fmt_matrix(b) for b in e.blocks))
        out.append("")
    return "\n".join(out)


def config_fields() -> list[str]:
    return [f.name for f in fields(JobConfig)]
