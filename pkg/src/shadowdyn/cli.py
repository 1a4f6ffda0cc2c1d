"""Command-line entry point.

Every command writes ``summary.json`` (sorted keys, full config echoed) plus
CSV data into ``--out``.  Exit codes: 0 pass, 1 usage or config error,
2 verified mathematical failure.

Configuration comes from defaults, then an optional flat ``key=value`` file
(``--config``), then command-line flags.  All randomness derives from
``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .cantor import build
from .certificates import DynamicsError
from .chain_recurrence import BoxGrid, basin_assign, build_graph, chain_classes
from .expansivity import (
    cat_segment_witness, countable_expansivity_refuter, cube_box_witness, cw_witness_check,
    product_arc_witness, sensitivity_lower_bound,
)
from .pseudo_orbit import PseudoOrbit, defect, validate
from .shadowing import modulus, shadow, verify_shadowing
from .systems import (
    CatMap, CirclePoint, CubeSeq, CubeShift, FullShift, NorthSouth, ProductPoint, ProductSystem,
    SymbolSeq, TorusPoint, coord_names, make_system,
)

COMMANDS = ("shadow", "cantor", "chainrec", "sensitivity", "cwx", "refute")
EXIT_PASS, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    system: str = "cat"
    eps: float | None = None
    delta: float | None = None
    kmax: int = 3
    horizon: int | None = None
    resolution: str | None = None
    seed: int = 0
    out: str = "out"
    threads: int | None = None
    input: str | None = None
    length: int = 100
    samples: int = 16
    deltas: str | None = None
    point: str | None = None
    direction: str = "UNSTABLE"
    basin_samples: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("out")
        return d


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, value: str):
    kind = _TYPES[key]
    if value is None:
        return None
    if "int" in kind:
        return int(value)
    if "float" in kind:
        return float(value)
    return str(value)


def read_config_file(path: str) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment; dashes and underscores are equivalent."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _TYPES or key == "command":
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _coerce(key, value)
        except ValueError as exc:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="shadowdyn", description="Shadowing, Cantor-set and chain-recurrence pipelines.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="flat key=value file; flags override it")
        s.add_argument("--system", choices=["cat", "ns", "shift", "cube", "product", "identity"])
        s.add_argument("--eps", type=float)
        s.add_argument("--delta", type=float)
        s.add_argument("--kmax", type=int)
        s.add_argument("--horizon", type=int)
        s.add_argument("--resolution", help="boxes per axis: N or N1,N2,...")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--threads", type=int)
        s.add_argument("--input", help="pseudo-orbit CSV with header index,<coords>")
        s.add_argument("--length", type=int)
        s.add_argument("--samples", type=int)
        s.add_argument("--deltas", help="comma-separated radii")
        s.add_argument("--point", help="comma-separated coordinates of the base point")
        s.add_argument("--direction", choices=["UNSTABLE", "STABLE"])
        s.add_argument("--basin-samples", type=int, dest="basin_samples")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for key in _TYPES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    values["command"] = args.command
    cfg = RunConfig(**values)
    if cfg.eps is not None and not cfg.eps > 0:
        raise UsageError("eps must be positive")
    if cfg.delta is not None and not cfg.delta > 0:
        raise UsageError("delta must be positive")
    if cfg.kmax < 0 or cfg.length < 2 or cfg.samples < 1 or cfg.basin_samples < 0:
        raise UsageError("kmax >= 0, length >= 2, samples >= 1 and basin_samples >= 0 are required")
    if cfg.horizon is not None and cfg.horizon < 0:
        raise UsageError("horizon must be non-negative")
    return cfg


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _floats(text: str) -> list:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def parse_point(system, text: str | None):
    """Base point from ``--point`` or the per-system default."""
    if isinstance(system, FullShift):
        if text is None:
            return SymbolSeq.constant(0, system.alphabet_size)
        syms = [int(v) for v in _floats(text)]
        return SymbolSeq(syms, -(len(syms) // 2), (0,), (0,), system.alphabet_size)
    if isinstance(system, CubeShift):
        vals = [0.5] if text is None else _floats(text)
        if len(vals) == 1:
            return CubeSeq.constant(vals[0])
        return CubeSeq(vals, -(len(vals) // 2), 0.5, 0.5)
    defaults = {"cat": [0.0, 0.0], "ns": [0.1], "product": [0.0, 0.0, 0.0], "identity": [0.0]}
    vals = defaults[system.name] if text is None else _floats(text)
    if len(vals) != system.dim:
        raise UsageError(f"{system.name} points need {system.dim} coordinates")
    return system.from_coords(np.array([vals]))[0]


def _threads(cfg: RunConfig) -> int:
    # results do not depend on the worker count, only wall time does
    return cfg.threads if cfg.threads else (os.cpu_count() or 1)


def _write(out: Path, name: str, text: str) -> None:
    (out / name).write_text(text)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v))


def _points_csv(system, points, lo: int = 0) -> str:
    return _csv(["index"] + coord_names(system),
                [[lo + i] + [_fmt(c) for c in p.coords()] for i, p in enumerate(points)])


def _summary(out: Path, cfg: RunConfig, status: str, **payload) -> None:
    doc = {"config": cfg.to_dict(), "status": status, **payload}
    _write(out, "summary.json", json.dumps(doc, sort_keys=True, indent=1, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o).__name__}")


DEFAULT_EPS = {"cat": 0.2, "shift": 0.5, "cube": 0.25, "product": 0.1, "ns": 0.1, "identity": 0.1}


def _generate_pseudo_orbit(system, cfg: RunConfig, rng) -> PseudoOrbit:
    """Orbit of the base point with a seeded perturbation of size below ``delta`` per step."""
    delta = cfg.delta if cfg.delta is not None else 1e-6
    x = parse_point(system, cfg.point) if cfg.point else system.random_point(rng)

    def kick(f, p):
        q = f.apply(p)
        if isinstance(f, ProductSystem):
            return ProductPoint(kick(f.left, p.left), kick(f.right, p.right))
        if isinstance(f, CatMap):
            du, dv = rng.uniform(-1.0, 1.0, 2) * 0.999 * delta
            return TorusPoint(q.u + du, q.v + dv)
        if isinstance(f, NorthSouth):
            return CirclePoint(q.t + rng.uniform(-1.0, 1.0) * 0.999 * delta)
        m = 0
        while 2.0 ** -m >= delta:
            m += 1
        if isinstance(f, FullShift):
            return q.with_coord(m, int(rng.integers(f.alphabet_size)))
        if isinstance(f, CubeShift):
            return q.with_coord(m, float(rng.random()))
        raise UsageError(f"no pseudo-orbit generator for {f.name}")

    pts = [x]
    for _ in range(cfg.length - 1):
        pts.append(kick(system, pts[-1]))
    return PseudoOrbit(system, pts, 0)


def read_pseudo_orbit(system, path: str) -> PseudoOrbit:
    if not system.vectorized:
        raise UsageError("CSV input is only supported for real-coordinate systems")
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != ["index"] + coord_names(system):
        raise UsageError(f"expected header {','.join(['index'] + coord_names(system))}")
    try:
        idx = [int(r[0]) for r in rows[1:]]
        coords = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise UsageError(f"malformed pseudo-orbit file: {exc}") from exc
    if not idx or idx != list(range(idx[0], idx[0] + len(idx))) or coords.shape[1] != system.dim:
        raise UsageError("indices must be consecutive and rows must have one value per coordinate")
    try:
        return PseudoOrbit(system, system.from_coords(coords), idx[0])
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_shadow(cfg: RunConfig, system, out: Path) -> int:
    rng = np.random.default_rng(cfg.seed)
    po = read_pseudo_orbit(system, cfg.input) if cfg.input else _generate_pseudo_orbit(system, cfg, rng)
    _write(out, "pseudo_orbit.csv", _points_csv(system, po.points, po.lo))
    payload = {"defect": defect(po), "window": [po.lo, po.hi]}
    if cfg.eps is not None:
        mod = modulus(system, cfg.eps)
        payload["modulus"] = mod.to_dict()
        check = validate(po, mod.delta)
        if not check:
            _summary(out, cfg, "fail", certificate=check.to_dict(), **payload)
            return EXIT_FAIL
    try:
        res = shadow(po, cfg.eps)
    except DynamicsError as exc:
        _summary(out, cfg, "fail", certificate=exc.certificate.to_dict(), error=str(exc), **payload)
        return EXIT_FAIL
    horizon = max(-po.lo, po.hi)
    cert = verify_shadowing(po, res.point, res.achieved_eps, horizon)
    orbit = system.orbit(res.point, po.lo, po.hi)
    _write(out, "shadow_orbit.csv", _points_csv(system, orbit, po.lo))
    status = "pass" if cert.passed else "fail"
    _summary(out, cfg, status, result=res.to_dict(), certificate=cert.to_dict(), **payload)
    return EXIT_PASS if cert.passed else EXIT_FAIL


def _write_levels(out: Path, C) -> None:
    for k in range(C.depth + 1):
        _write(out, f"level_{k}.csv", C.to_csv(k))


def cmd_cantor(cfg: RunConfig, system, out: Path) -> int:
    eps = cfg.eps if cfg.eps is not None else DEFAULT_EPS[system.name]
    horizon = 50 if cfg.horizon is None else cfg.horizon
    x = parse_point(system, cfg.point)
    try:
        C = build(system, x, eps, cfg.kmax, horizon, cfg.seed, cfg.direction, _threads(cfg))
    except DynamicsError as exc:
        _summary(out, cfg, "fail", certificate=exc.certificate.to_dict(), error=str(exc))
        return EXIT_FAIL
    _write_levels(out, C)
    ok = C.membership.passed
    _summary(out, cfg, "pass" if ok else "fail", cantor=C.to_dict(), points=len(C.top))
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_chainrec(cfg: RunConfig, system, out: Path) -> int:
    if not cfg.resolution:
        raise UsageError("chainrec needs --resolution")
    res = [int(v) for v in _floats(cfg.resolution)]
    try:
        grid = BoxGrid.for_system(system, res)
        graph = build_graph(system, grid, cfg.delta, seed=cfg.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    except DynamicsError as exc:
        _summary(out, cfg, "fail", certificate=exc.certificate.to_dict(), error=str(exc))
        return EXIT_FAIL
    classes = chain_classes(graph)
    _write(out, "graph.txt", graph.to_edge_list())
    _write(out, "classes.csv", classes.to_csv())
    payload = {"classes": classes.to_dict(), "n_classes": classes.n_classes,
               "n_edges": graph.n_edges, "scheme": graph.scheme}
    status = EXIT_PASS
    if cfg.basin_samples:
        horizon = 500 if cfg.horizon is None else cfg.horizon
        rng = np.random.default_rng([cfg.seed, 0xBA5])
        rows, failures = [], 0
        for i in range(cfg.basin_samples):
            p = system.random_point(rng)
            try:
                a = basin_assign(system, p, classes, horizon)
                rows.append([i, a.class_id, a.entry_index, _fmt(a.envelope[-1] if a.envelope else 0.0)]
                            + [_fmt(c) for c in p.coords()])
            except DynamicsError:
                failures += 1
                rows.append([i, -1, -1, "nan"] + [_fmt(c) for c in p.coords()])
        _write(out, "basins.csv", _csv(["index", "class_id", "entry_index", "final_envelope"]
                                       + coord_names(system), rows))
        payload["basin_failures"] = failures
        if failures:
            status = EXIT_FAIL
    _summary(out, cfg, "pass" if status == EXIT_PASS else "fail", **payload)
    return status


def cmd_sensitivity(cfg: RunConfig, system, out: Path) -> int:
    deltas = _floats(cfg.deltas) if cfg.deltas else [cfg.delta if cfg.delta is not None else 1e-3]
    horizon = 30 if cfg.horizon is None else cfg.horizon
    est = sensitivity_lower_bound(system, cfg.samples, deltas, horizon, cfg.seed)
    _write(out, "samples.csv", _csv(["index", "max_diam", "delta", "n"], [
        [i, _fmt(g["max_diam"]), _fmt(g["delta"]), g["n"]] for i, g in enumerate(est.per_sample)]))
    ok = cfg.eps is None or est.eps_lower > cfg.eps
    _summary(out, cfg, "pass" if ok else "fail", estimate=est.to_dict())
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_cwx(cfg: RunConfig, system, out: Path) -> int:
    eps = cfg.eps if cfg.eps is not None else 0.1
    horizon = 50 if cfg.horizon is None else cfg.horizon
    if isinstance(system, CubeShift):
        w = cube_box_witness(parse_point(system, cfg.point), eps, horizon)
    elif isinstance(system, ProductSystem):
        x = parse_point(system, cfg.point or "0,0,0.25")
        w = product_arc_witness(x, x.right.t, cfg.delta or 0.01, eps, horizon)
    elif isinstance(system, CatMap):
        w = cat_segment_witness(parse_point(system, cfg.point), cfg.delta or 1e-3, eps, horizon)
    else:
        raise UsageError("cwx supports the cube, product and cat systems")
    cert = cw_witness_check(system, w)
    _write(out, "family.csv", w.to_csv(system))
    _summary(out, cfg, "pass" if cert.passed else "fail", certificate=cert.to_dict(),
             witness={"kind": w.kind, **w.info})
    return EXIT_PASS if cert.passed else EXIT_FAIL


def cmd_refute(cfg: RunConfig, system, out: Path) -> int:
    eps = cfg.eps if cfg.eps is not None else DEFAULT_EPS[system.name]
    horizon = 50 if cfg.horizon is None else cfg.horizon
    x = parse_point(system, cfg.point)
    try:
        C = countable_expansivity_refuter(system, x, eps, cfg.kmax, horizon, cfg.seed,
                                          threads=_threads(cfg))
    except DynamicsError as exc:
        _summary(out, cfg, "fail", certificate=exc.certificate.to_dict(), error=str(exc))
        return EXIT_FAIL
    _write_levels(out, C)
    ok = C.membership.passed
    _summary(out, cfg, "pass" if ok else "fail", cantor=C.to_dict(), points=len(C.top))
    return EXIT_PASS if ok else EXIT_FAIL


HANDLERS = {"shadow": cmd_shadow, "cantor": cmd_cantor, "chainrec": cmd_chainrec,
            "sensitivity": cmd_sensitivity, "cwx": cmd_cwx, "refute": cmd_refute}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        system = make_system(cfg.system)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return HANDLERS[cfg.command](cfg, system, out)
    except (UsageError, ValueError, TypeError) as exc:
        print(f"shadowdyn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
