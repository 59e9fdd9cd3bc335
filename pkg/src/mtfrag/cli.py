"""Command-line front end: one JSON config per run, results as CSV or JSON.

Config layout::

    {
      "model":   {"kind": "map", "K": 2, "generator": [[-1, 1], [1, -1]],
                  "subordinators": [{"kill": 0, "drift": 1, "levy_atoms": [[x, w]]}, ...],
                  "jump_laws": [[null, [[x, q], ...]], ...]}
              or {"kind": "fragmentation", "K": 1, "alpha": -1,
                  "dislocations": [[{"weight": 1, "parts": [[0.5, 1], [0.5, 1]]}]],
                  "erosion": [0]},
      "command": {"name": "map-moments", ...command parameters...},
      "mc":      {"n_samples": 100000, "seed": 1, "workers": 1},
      "output":  {"path": "out.csv", "format": "csv"}
    }

Types are numbered from 1 in configs and outputs. Every output carries the
config hash, the seed and the library version. Exit codes: 0 success,
2 config error, 3 numeric error, 4 validation failure.

Event logs (``events_path`` of ``simulate``) hold one JSON object per line:
``{"run", "time", "parent", "atom", "children": [[mass, type], ...]}``.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import copy
import csv
import functools
import hashlib
import io
import json
import math
import sys

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, DomainError, MtfragError, NumericError, ParameterError, TruncationError
from .fragmentation import DislocationMeasure, MassPartition, simulate_forest, tagged_bernstein
from .malthus import malthusian_exponent
from .map_model import (
    JumpLaw,
    MapParams,
    SubordinatorParams,
    bernstein_derivative_at_zero,
    bernstein_matrix,
)
from .map_sim import chunk_streams, simulate_batch
from .matrix_core import as_ml_matrix, mat_exp, spectral_abscissa
from .moments import (
    death_moment_vector,
    negative_first_moment,
    negative_integer_moments,
    positive_integer_moments,
)
from .tree import first_passage_counts, build_tree, CoveringProfile, dimension_estimate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4

COMMANDS = ("map-moments", "death-moments", "malthus", "simulate", "tree", "dimension", "validate")
SAMPLING = {"simulate", "tree", "dimension"}

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_atoms = {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}}

TOP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "command"],
    "properties": {
        "model": {"type": "object", "required": ["kind"]},
        "command": {
            "type": "object",
            "required": ["name"],
            "properties": {"name": {"enum": list(COMMANDS)}},
        },
        "mc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_samples": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer", "minimum": 0},
                "workers": _pos_int,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"path": {"type": "string"}, "format": {"enum": ["csv", "json"]}},
        },
    },
}

MAP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "K", "generator", "subordinators"],
    "properties": {
        "kind": {"const": "map"},
        "K": _pos_int,
        "generator": {"type": "array", "items": {"type": "array", "items": _num}},
        "subordinators": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {"kill": _num, "drift": _num, "levy_atoms": _atoms},
            },
        },
        "jump_laws": {"type": "array", "items": {"type": "array", "items": {"anyOf": [{"type": "null"}, _atoms]}}},
    },
}

FRAG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "K", "dislocations"],
    "properties": {
        "kind": {"const": "fragmentation"},
        "K": _pos_int,
        "alpha": _num,
        "erosion": {"type": "array", "items": _num},
        "dislocations": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["weight", "parts"],
                    "properties": {
                        "weight": _num,
                        "parts": {
                            "type": "array",
                            "items": {"type": "array", "prefixItems": [_num, _pos_int], "minItems": 2, "maxItems": 2},
                        },
                    },
                },
            },
        },
    },
}

_types = {"type": "array", "items": _num, "minItems": 1}
COMMAND_SCHEMAS = {
    "map-moments": {"k_max": {"type": "integer", "minimum": 0}, "k_min": {"type": "integer", "maximum": -1}},
    "death-moments": {"p": _types},
    "malthus": {"grid": {"type": "integer", "minimum": 2}},
    "simulate": {
        "start_type": _pos_int, "times": _types, "p": _types, "n_runs": _pos_int,
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "mass_floor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "events_path": {"type": "string"},
    },
    "tree": {"start_type": _pos_int, "mass_floor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
    "dimension": {
        "start_type": _pos_int, "n_runs": _pos_int, "levels": _types,
        "mass_floor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
    "validate": {},
}
NEEDS_KIND = {
    "map-moments": "map", "death-moments": "map", "malthus": "fragmentation",
    "tree": "fragmentation", "dimension": "fragmentation",
}


def _path(error):
    out = ""
    for part in error.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else str(part))
    return out or "<root>"


def _validate(doc, schema, prefix=""):
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = _path(e)
        if prefix:
            where = prefix if where == "<root>" else f"{prefix}{'' if where.startswith('[') else '.'}{where}"
        raise ConfigError(f"{where}: {e.message}")


# ------------------------------------------------------------ parsing


class RunConfig:
    """Validated run configuration with the model already constructed."""

    def __init__(self, raw, model, command, params, mc, output, alpha=0.0):
        self.raw = raw
        self.model = model
        self.alpha = alpha
        self.command = command
        self.params = params
        self.mc = mc
        self.output = output

    @property
    def kind(self):
        return "map" if isinstance(self.model, MapParams) else "fragmentation"

    @property
    def seed(self):
        return self.mc.get("seed")

    @property
    def config_hash(self):
        body = {k: v for k, v in self.raw.items() if k != "output"}
        mc = dict(body.get("mc", {}))
        mc.pop("workers", None)
        body["mc"] = mc
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _build_map(m):
    K = m["K"]
    G = np.array(m["generator"], dtype=float)
    if G.shape != (K, K):
        raise ConfigError(f"model.generator: expected {K}x{K}, got shape {G.shape}")
    if len(m["subordinators"]) != K:
        raise ConfigError(f"model.subordinators: expected {K} entries, got {len(m['subordinators'])}")
    try:
        as_ml_matrix(G)
        for i, r in enumerate(G.sum(axis=1)):
            if abs(r) > 1e-12:
                raise ConfigError(f"model.generator[{i}]: row sums to {float(r)!r}, not 0")
        subs = []
        for i, s in enumerate(m["subordinators"]):
            try:
                subs.append(SubordinatorParams(s.get("kill", 0.0), s.get("drift", 0.0), tuple(map(tuple, s.get("levy_atoms", [])))))
            except ParameterError as exc:
                raise ConfigError(f"model.subordinators[{i}]: {exc}") from exc
        laws = None
        if "jump_laws" in m:
            laws = m["jump_laws"]
            if len(laws) != K or any(len(r) != K for r in laws):
                raise ConfigError(f"model.jump_laws: expected {K}x{K}")
            fixed = []
            for i, row in enumerate(laws):
                out = []
                for j, law in enumerate(row):
                    try:
                        out.append(None if law is None else JumpLaw(tuple(map(tuple, law))))
                    except ParameterError as exc:
                        raise ConfigError(f"model.jump_laws[{i}][{j}]: {exc}") from exc
                fixed.append(out)
            laws = fixed
        return MapParams(G, subs, laws)
    except ParameterError as exc:
        raise ConfigError(f"model: {exc}") from exc


def _build_fragmentation(m):
    K = m["K"]
    if len(m["dislocations"]) != K:
        raise ConfigError(f"model.dislocations: expected {K} entries, got {len(m['dislocations'])}")
    atoms = []
    for i, row in enumerate(m["dislocations"]):
        out = []
        for a, atom in enumerate(row):
            where = f"model.dislocations[{i}][{a}]"
            parts = []
            for s, t in atom["parts"]:
                if t > K:
                    raise ConfigError(f"{where}.parts: type {t} exceeds K = {K}")
                parts.append((s, t - 1))
            try:
                if not atom["weight"] > 0:
                    raise ParameterError(f"weight must be > 0, got {atom['weight']!r}")
                out.append((atom["weight"], MassPartition(tuple(parts))))
            except ParameterError as exc:
                raise ConfigError(f"{where}: {exc}") from exc
        atoms.append(out)
    erosion = m.get("erosion", [0.0] * K)
    if len(erosion) != K:
        raise ConfigError(f"model.erosion: expected {K} entries")
    try:
        model = DislocationMeasure(tuple(atoms), erosion)
    except ParameterError as exc:
        raise ConfigError(f"model: {exc}") from exc
    alpha = float(m.get("alpha", 0.0))
    if alpha != 0 and np.any(model.erosion > 0):
        raise ConfigError("model.erosion: erosion is only supported with alpha = 0")
    return model, alpha


def parse_config(document):
    """Parse and validate a JSON config document (text or already-loaded dict).

    Raises:
        ConfigError: syntax error (with line and column), schema violation or
            model invariant violation, naming the offending field.
    """
    if isinstance(document, (str, bytes)):
        try:
            raw = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    else:
        raw = copy.deepcopy(document)
    _validate(raw, TOP_SCHEMA)
    kind = raw["model"]["kind"]
    if kind == "map":
        _validate(raw["model"], MAP_SCHEMA, "model")
        model, alpha = _build_map(raw["model"]), 0.0
    elif kind == "fragmentation":
        _validate(raw["model"], FRAG_SCHEMA, "model")
        model, alpha = _build_fragmentation(raw["model"])
    else:
        raise ConfigError(f"model.kind: unknown kind {kind!r}")
    name = raw["command"]["name"]
    schema = {
        "type": "object",
        "additionalProperties": False,
        "properties": {"name": {"const": name}, **COMMAND_SCHEMAS[name]},
    }
    _validate(raw["command"], schema, "command")
    need = NEEDS_KIND.get(name)
    if need and need != kind:
        raise ConfigError(f"command.name: {name} needs a {need} model, got {kind}")
    if name in ("tree", "dimension") and not alpha < 0:
        raise ConfigError(f"model.alpha: {name} needs alpha < 0")
    params = {k: v for k, v in raw["command"].items() if k != "name"}
    mc = dict(raw.get("mc", {}))
    mc.setdefault("workers", 1)
    output = dict(raw.get("output", {}))
    output.setdefault("format", "csv")
    cfg = RunConfig(raw, model, name, params, mc, output, alpha)
    if _samples(cfg) and "seed" not in mc:
        raise ConfigError("mc.seed: required because this command runs a sampler")
    return cfg


def _samples(cfg):
    return cfg.command in SAMPLING or (cfg.command == "map-moments" and "k_min" in cfg.params)


# ------------------------------------------------------- parallel chunks


def _chunked(fn, seed, n, workers, key=(), chunk=4096):
    """Run ``fn(rng, size)`` over reproducible chunks; results in chunk order."""
    jobs = [(start, size, g) for start, size, g in chunk_streams(seed, n, chunk, key=key)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_call_chunk, [(fn, g, size) for _, size, g in jobs]))
    return [fn(g, size) for _, size, g in jobs]


def _call_chunk(args):
    fn, g, size = args
    return fn(g, size)


# ------------------------------------------------------------ commands


class Result:
    """Tabular rows plus a JSON-ready summary."""

    def __init__(self, columns, rows, summary=None, failed=False):
        self.columns = columns
        self.rows = rows
        self.summary = summary or {}
        self.failed = failed


def _moment_rows(moments, se=None):
    rows = []
    for mv in moments:
        for i, v in enumerate(mv.values):
            err = "exact" if mv.exact else (float(mv.std_error[i]) if mv.std_error is not None else "")
            rows.append((mv.order, i + 1, float(v), err, mv.exact))
    return rows


def cmd_map_moments(cfg):
    k_max = cfg.params.get("k_max", 3)
    rows = _moment_rows(positive_integer_moments(cfg.model, k_max))
    summary = {}
    if "k_min" in cfg.params:
        n = cfg.mc.get("n_samples", 100_000)
        nfm = negative_first_moment(cfg.model, n, cfg.seed)
        neg = negative_integer_moments(cfg.model, cfg.params["k_min"], nfm.direct)
        for mv in neg:
            for i, v in enumerate(mv.values):
                rows.append((mv.order, i + 1, float(v), "", False))
        summary["n_minus_one_gap_se"] = nfm.gap_se.tolist()
        summary["n_minus_one_consistent"] = nfm.consistent
    return Result(("p", "type", "value", "std_error", "exact"), rows, summary)


def cmd_death_moments(cfg):
    rows = []
    for p in cfg.params.get("p", [1.0]):
        mv = death_moment_vector(cfg.model, float(p))
        for i, v in enumerate(mv.values):
            rows.append((float(p), i + 1, float(v), "exact", True))
    return Result(("p", "type", "value", "std_error", "exact"), rows)


def cmd_malthus(cfg):
    md = malthusian_exponent(cfg.model)
    grid = np.linspace(0.0, 1.0, cfg.params.get("grid", 21))
    rows = [("p_star", "", md.p_star)]
    rows += [("b", i + 1, float(v)) for i, v in enumerate(md.b)]
    rows += [("lambda", float(p), float(md.lambda_curve(float(p)))) for p in grid]
    summary = {"p_star": md.p_star, "b": md.b.tolist(),
               "lambda": [[float(p), float(md.lambda_curve(float(p)))] for p in grid]}
    return Result(("quantity", "key", "value"), rows, summary)


def _map_moment_chunk(params, start, times, ps, rng, size):
    res = simulate_batch(params, start, size, rng, times=times)
    out = np.zeros((len(times), len(ps), params.K, 2))
    for a in range(len(times)):
        x, j = res.positions_at[a], res.types_at[a]
        for b, p in enumerate(ps):
            with np.errstate(over="ignore"):
                v = np.where(np.isfinite(x), np.exp(-p * x), 0.0)
            for k in range(params.K):
                s = v * (j == k)
                out[a, b, k] = s.sum(), (s * s).sum()
    return out


def cmd_simulate(cfg):
    start = cfg.params.get("start_type", 1) - 1
    if cfg.kind == "map":
        cfg.model._check_type(start)
        times = tuple(float(t) for t in cfg.params.get("times", [1.0]))
        ps = tuple(float(p) for p in cfg.params.get("p", [1.0]))
        n = cfg.mc.get("n_samples", 100_000)
        fn = functools.partial(_map_moment_chunk, cfg.model, start, times, ps)
        acc = sum(_chunked(fn, cfg.seed, n, cfg.mc["workers"], key=(2,)))
        rows = []
        for a, t in enumerate(times):
            for b, p in enumerate(ps):
                exact = mat_exp(-bernstein_matrix(cfg.model, p), t)[start]
                for k in range(cfg.model.K):
                    s1, s2 = acc[a, b, k]
                    mean = s1 / n
                    se = math.sqrt(max(s2 / n - mean * mean, 0.0) / (n - 1))
                    rows.append((t, p, start + 1, k + 1, mean, se, float(exact[k])))
        return Result(("t", "p", "start_type", "type", "estimate", "std_error", "exact"), rows)
    n_runs = cfg.params.get("n_runs", 1)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 3]))
    forest = simulate_forest(cfg.model, cfg.alpha, start, n_runs, rng,
                             mass_floor=cfg.params.get("mass_floor"), horizon=cfg.params.get("horizon"))
    if "events_path" in cfg.params:
        write_events(forest, cfg.params["events_path"])
    rows = [
        (int(forest.run[k]), k, int(forest.parent[k]), float(forest.mass[k]), int(forest.type[k]) + 1,
         float(forest.birth[k]), float(forest.death[k]), bool(forest.censored[k]))
        for k in range(len(forest))
    ]
    return Result(("run", "id", "parent", "mass", "type", "birth", "death", "censored"), rows,
                  {"n_nodes": len(forest)})


def write_events(forest, path):
    """Write dislocation events as JSON lines (see module docstring)."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in forest.events():
            rec = {"run": int(forest.run[e.parent]), "time": e.time, "parent": e.parent, "atom": e.atom,
                   "children": [[m, t + 1] for m, t in e.children]}
            fh.write(json.dumps(rec) + "\n")


def cmd_tree(cfg):
    start = cfg.params.get("start_type", 1) - 1
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 4]))
    forest = simulate_forest(cfg.model, cfg.alpha, start, 1, rng,
                             mass_floor=cfg.params.get("mass_floor", 1e-3))
    tree = build_tree(forest)
    rows = [(k, p, m, t + 1, b, d, c) for k, p, m, t, b, d, c in tree.rows()]
    return Result(("id", "parent", "mass", "type", "birth", "death", "censored"), rows,
                  {"height": tree.height, "n_nodes": len(tree), "n_leaves": int(tree.leaves.size)})


def _covering_chunk(model, alpha, start, levels, floor, rng, size):
    forest = simulate_forest(model, alpha, start, size, rng, mass_floor=floor)
    return first_passage_counts(forest, levels)


def cmd_dimension(cfg):
    start = cfg.params.get("start_type", 1) - 1
    floor = cfg.params.get("mass_floor", 1e-4)
    levels = np.array(cfg.params.get("levels", np.logspace(-1, math.log10(floor), 7).tolist()), dtype=float)
    if levels.min() < floor:
        raise ConfigError(f"command.levels: level {float(levels.min())!r} is below the mass floor {floor!r}")
    n_runs = cfg.params.get("n_runs", 1000)
    fn = functools.partial(_covering_chunk, cfg.model, cfg.alpha, start, levels, floor)
    counts = np.concatenate(_chunked(fn, cfg.seed, n_runs, cfg.mc["workers"], key=(5,), chunk=64))
    est = dimension_estimate(CoveringProfile(cfg.alpha, levels, counts),
                             rng=np.random.SeedSequence([cfg.seed, 6]))
    summary = {"slope": est.slope, "band": list(est.band)}
    try:
        summary["target"] = malthusian_exponent(cfg.model).p_star / abs(cfg.alpha)
    except ParameterError:
        summary["target"] = None
    rows = [(float(e), float(r), float(c)) for e, r, c in zip(levels, levels ** abs(cfg.alpha), counts.mean(axis=0))]
    return Result(("level", "radius", "mean_count"), rows, summary)


def _check(rows, name, ok, detail=""):
    rows.append((name, bool(ok), detail))


def cmd_validate(cfg):
    rows = []
    m = cfg.model
    grid = (0.0, 0.25, 0.5, 1.0, 2.0, 5.0)
    if cfg.kind == "map":
        for p in grid:
            Phi = bernstein_matrix(m, p)
            off = Phi - np.diag(np.diag(Phi))
            _check(rows, f"ml_negated_phi[p={p:g}]", np.all(off <= 0))
        _check(rows, "phi_at_zero", np.allclose(bernstein_matrix(m, 0.0), np.diag(m.kills) - m.generator, atol=1e-12))
        if m.is_irreducible():
            for p in grid[1:]:
                ab = spectral_abscissa(-bernstein_matrix(m, p)).abscissa
                _check(rows, f"phi_invertible[p={p:g}]", -ab > 0, f"abscissa {ab:.17g}")
            mom = positive_integer_moments(m, 5)
            for k in range(1, 6):
                lhs = bernstein_matrix(m, float(k)) @ mom[k].values
                res = float(np.abs(lhs - k * mom[k - 1].values).max())
                _check(rows, f"moment_recursion[k={k}]", res <= 1e-10 * max(1.0, np.abs(lhs).max()), f"residual {res:.3e}")
            _check(rows, "jensen", np.all(mom[2].values >= mom[1].values ** 2 * (1 - 1e-12)))
            if m.has_killing():
                F0 = death_moment_vector(m, 0.0).values
                _check(rows, "death_moment_at_zero", np.allclose(F0, 1.0, atol=1e-12))
        if not m.has_killing():
            h = 1e-6
            fd = (bernstein_matrix(m, h) - bernstein_matrix(m, -h)) / (2 * h)
            err = float(np.abs(fd - bernstein_derivative_at_zero(m)).max())
            _check(rows, "derivative_at_zero", err <= 1e-6, f"error {err:.3e}")
    else:
        phi = tagged_bernstein(m)
        for p in (-1.0, -0.5, 0.0, 1.0, 2.0):
            A = -phi(p)
            off = A - np.diag(np.diag(A))
            _check(rows, f"ml_negated_tagged_phi[p={p:g}]", np.all(off >= 0))
        lam = [-spectral_abscissa(-phi(p - 1.0)).abscissa for p in np.linspace(0, 1, 11)]
        _check(rows, "lambda_increasing", np.all(np.diff(lam) > 0) or m.K == 0)
        try:
            md = malthusian_exponent(m)
        except ParameterError as exc:
            _check(rows, "malthusian", False, str(exc))
        else:
            resid = float(np.abs(phi(md.p_star - 1.0) @ md.b).max())
            _check(rows, "lambda_at_p_star", abs(md.lambda_curve(md.p_star)) <= 1e-10)
            _check(rows, "malthus_eigenvector", resid <= 1e-10, f"residual {resid:.3e}")
            _check(rows, "malthus_vector_positive", np.all(md.b > 0))
            if m.is_conservative():
                _check(rows, "conservative_p_star_one", abs(md.p_star - 1.0) <= 1e-10)
        if cfg.seed is not None and m.is_conservative():
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
            f = simulate_forest(m, 0.0, 0, 100, rng, horizon=1.0)
            run, mass, _ = f.front(1.0)
            tot = np.bincount(run, weights=mass, minlength=100)
            _check(rows, "mass_conservation", np.allclose(tot, 1.0, atol=1e-12))
    failed = not all(ok for _, ok, _ in rows)
    return Result(("check", "passed", "detail"), rows, {"passed": not failed}, failed)


HANDLERS = {
    "map-moments": cmd_map_moments,
    "death-moments": cmd_death_moments,
    "malthus": cmd_malthus,
    "simulate": cmd_simulate,
    "tree": cmd_tree,
    "dimension": cmd_dimension,
    "validate": cmd_validate,
}


# ------------------------------------------------------------ output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def render(cfg, result):
    """Serialize a result as CSV or JSON text, embedding hash, seed and version."""
    meta = {"config_hash": cfg.config_hash, "seed": cfg.seed, "version": __version__}
    if cfg.output["format"] == "json":
        doc = {
            "meta": meta,
            "command": cfg.command,
            "summary": result.summary,
            "columns": list(result.columns),
            "rows": [[_json_value(v) for v in r] for r in result.rows],
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow([*result.columns, "config_hash", "seed", "version"])
    tail = [meta["config_hash"], "" if cfg.seed is None else str(cfg.seed), __version__]
    for r in result.rows:
        w.writerow([*map(_fmt, r), *tail])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def run(cfg):
    """Execute ``cfg`` and write its output. Returns the exit code."""
    result = HANDLERS[cfg.command](cfg)
    text = render(cfg, result)
    path = cfg.output.get("path")
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_VALIDATION if result.failed else EXIT_OK


def _error(code, exc):
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    sys.stderr.write(json.dumps(rec) + "\n")
    return code


def main(argv=None):
    ap = argparse.ArgumentParser(prog="mtfrag", description="Multi-type MAP and fragmentation toolkit.")
    ap.add_argument("config", help="JSON config file ('-' for stdin)")
    ap.add_argument("--seed", type=int, help="override mc.seed")
    ap.add_argument("--out", help="override output.path")
    ap.add_argument("--workers", type=int, help="override mc.workers")
    args = ap.parse_args(argv)
    try:
        if args.config == "-":
            text = sys.stdin.read()
        else:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if isinstance(raw, dict):
            if args.seed is not None:
                raw.setdefault("mc", {})["seed"] = args.seed
            if args.workers is not None:
                raw.setdefault("mc", {})["workers"] = args.workers
            if args.out is not None:
                raw.setdefault("output", {})["path"] = args.out
        cfg = parse_config(raw)
    except OSError as exc:
        return _error(EXIT_CONFIG, ConfigError(str(exc)))
    except ConfigError as exc:
        return _error(EXIT_CONFIG, exc)
    try:
        return run(cfg)
    except (NumericError, DomainError, TruncationError) as exc:
        return _error(EXIT_NUMERIC, exc)
    except (ParameterError, MtfragError) as exc:
        return _error(EXIT_CONFIG, exc)


if __name__ == "__main__":
    sys.exit(main())
