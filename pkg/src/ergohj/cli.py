"""Command-line entry point: ``ergohj {critical,effective,aubry,corrector,curve,ergodic}``.

Each subcommand reads a JSON experiment config, writes JSON summaries and CSV
tables to ``--out`` and exits with 0 on success, 2 on a configuration error
and 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ergohj import aubry as aub
from ergohj import corrector as cor
from ergohj import critical as crit
from ergohj.env import (
    APSeriesModel,
    APTerm,
    EnvPoint,
    TorusSpace,
    equidistribution_test,
    generate_frequencies,
    sample_env,
)
from ergohj.hamiltonian import model_from_dict
from ergohj.metricgraph import GraphFactory, GridWindow, MetricField, NegativeCycle
from ergohj.stats import RandomSetSampler, volume_fraction

log = logging.getLogger("ergohj")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    model: dict
    window: dict
    omega: list[float] | None = None
    level_tol: float = 1e-3
    p_grid: dict | list | None = None
    ensemble_size: int = 3
    R_max: float | None = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path: Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        base = Path(path).parent
        if "model_file" in raw:
            mf = base / raw.pop("model_file")
            try:
                raw["model"] = json.loads(mf.read_text())
            except (FileNotFoundError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read model file {mf}: {exc}") from exc
        known = {"model", "window", "omega", "level_tol", "p_grid", "ensemble_size",
                 "R_max", "seed"}
        extra = {k: v for k, v in raw.items() if k not in known}
        kw = {k: v for k, v in raw.items() if k in known}
        if "model" not in kw or "window" not in kw:
            if "ergodic" not in extra:
                raise ConfigError("config needs 'model' and 'window' entries")
            kw.setdefault("model", {})
            kw.setdefault("window", {})
        return cls(extra=extra, **kw)


def _build(cfg: ExperimentConfig, args):
    try:
        model = model_from_dict(cfg.model)
        w = dict(cfg.window)
        kind = w.get("kind", "cell")
        stencil = args.stencil or w.get("stencil", "axis+diagonal")
        dim = int(w.get("dim", model.dim))
        if kind == "cell":
            window = GridWindow.cell(float(w["h"]), dim, stencil, float(w.get("period", 1.0)))
        elif kind == "free":
            window = GridWindow.free(float(w["R"]), float(w["h"]), dim, stencil,
                                     w.get("center"))
        else:
            raise ConfigError(f"unknown window kind {kind!r}")
        space = model.potential.space
        if cfg.omega is not None:
            omega = EnvPoint(tuple(float(c) for c in cfg.omega))
        else:
            omega = space.origin()
        if len(omega.coords) != space.dim:
            raise ConfigError("omega has the wrong number of torus coordinates")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"invalid model or window: {exc!r}") from exc
    return model, window, omega


def _tol(cfg, args) -> float:
    return float(args.level_tol if args.level_tol is not None else cfg.level_tol)


def _num(value, tol) -> dict:
    return {"value": float(value), "tol": float(tol)}


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _nodes_to_points(window, nodes) -> list:
    return [[float(c) for c in window.points[i]] for i in nodes]


def run_critical(cfg: ExperimentConfig, args, out: Path) -> dict:
    model, window, omega = _build(cfg, args)
    tol = _tol(cfg, args)
    rows = []
    searches = {}
    if window.periodic:
        searches["c"] = crit.critical_search(GraphFactory(window, model, omega), tol)
        lift = window.unrolled(crit.LIFT_PERIODS)
        searches["c_f"] = crit.critical_search(GraphFactory(lift, model, omega), tol)
    else:
        searches["c_f"] = crit.critical_search(GraphFactory(window, model, omega), tol)
    for name, s in searches.items():
        rows += [f"{name},{i},{a:.17g},{int(ok)}" for i, (a, ok) in enumerate(s.trace)]
    (out / "bisection_trace.csv").write_text("quantity,step,level,feasible\n"
                                             + "\n".join(rows) + "\n")
    summary = {k: _num(s.value, tol) for k, s in searches.items()}
    summary["window"] = window.to_dict()
    summary["omega"] = list(omega.coords)
    _write_json(out / "critical.json", summary)
    return summary


def _svg_curve(P, vals, path: Path) -> None:
    """Deterministic SVG polyline of a 1D table."""
    W, H, pad = 480, 320, 30
    x0, x1 = float(np.min(P)), float(np.max(P))
    y0, y1 = float(np.min(vals)), float(np.max(vals))
    sx = (W - 2 * pad) / ((x1 - x0) or 1.0)
    sy = (H - 2 * pad) / ((y1 - y0) or 1.0)
    pts = " ".join(f"{pad + (p - x0) * sx:.2f},{H - pad - (v - y0) * sy:.2f}"
                   for p, v in zip(P, vals))
    path.write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}">\n'
        f'<rect width="{W}" height="{H}" fill="white"/>\n'
        f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>\n'
        "</svg>\n")


def run_effective(cfg: ExperimentConfig, args, out: Path) -> dict:
    model, window, omega = _build(cfg, args)
    tol = _tol(cfg, args)
    pg = cfg.p_grid or {"step": 0.05, "extent": 1.0}
    try:
        if isinstance(pg, dict):
            P = crit.p_grid(float(pg["step"]), float(pg["extent"]), window.dim)
        else:
            P = np.asarray(pg, dtype=float).reshape(-1, window.dim)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid p_grid: {exc!r}") from exc
    factory = GraphFactory(window, model, omega)
    factory.pointwise_min  # noqa: B018 - computed once before threads share it

    def one(p):
        return crit.effective_hamiltonian(window, model, omega, p, tol, factory)

    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        vals = np.array(list(pool.map(one, P)))
    table = crit.EffectiveTable(P, vals, tol)
    (out / "effective.csv").write_text(table.to_csv())
    summary = {"samples": len(P), "min": _num(np.min(vals), tol)}
    try:
        fr = crit.flat_region(table, max(tol, 1e-3))
        half = 0.5 * (float(np.min(np.diff(np.unique(P[:, 0])))) if len(P) > 1 else 0.0)
        summary["flat_radius"] = _num(fr.radius, half + tol)
        summary["zero_in_interior"] = fr.zero_in_interior
    except ValueError as exc:
        summary["flat_region_error"] = str(exc)
    if args.svg and window.dim == 1:
        _svg_curve(P[:, 0], vals, out / "effective.svg")
    _write_json(out / "effective.json", summary)
    return summary


def _critical_level(model, window, omega, tol) -> tuple[float, float]:
    if window.periodic:
        cv = crit.stationary_critical_value(window, model, omega, tol)
        return cv.c_f, cv.c
    c_f = crit.free_critical_value(window, model, omega, tol)
    return c_f, c_f


def run_aubry(cfg: ExperimentConfig, args, out: Path) -> dict:
    model, window, omega = _build(cfg, args)
    tol = _tol(cfg, args)
    c_f, c = _critical_level(model, window, omega, tol)
    eq = aub.equilibria(window, model, omega, c_f, tol)
    A = aub.classical_aubry(window, model, omega, c_f)
    rnd = aub.random_aubry_approx(window, model, omega, c, cfg.ensemble_size, cfg.R_max,
                                  seed=args.seed if args.seed is not None else cfg.seed)
    report = aub.AubryReport(eq, A.nodes, rnd, {
        "c_f": _num(c_f, tol), "c": _num(c, tol), "delta": A.delta, "loop_tol": A.tol,
        "ensemble_size": cfg.ensemble_size, "window": window.to_dict()})
    d = report.to_dict()
    d["points"] = {k: _nodes_to_points(window, v) for k, v in
                   (("equilibria", eq), ("classical_aubry", A.nodes),
                    ("random_aubry_approx", rnd))}
    _write_json(out / "aubry.json", d)
    mask = np.zeros((window.n, 3), dtype=int)
    mask[eq, 0] = 1
    mask[A.nodes, 1] = 1
    mask[rnd, 2] = 1
    cols = ",".join(f"x{i + 1}" for i in range(window.dim))
    lines = [f"node,{cols},equilibrium,classical,random"]
    for i in range(window.n):
        lines.append(f"{i}," + ",".join(f"{c:.10g}" for c in window.points[i])
                     + "," + ",".join(str(b) for b in mask[i]))
    (out / "aubry_mask.csv").write_text("\n".join(lines) + "\n")
    return d


def _corrector_from_aubry(cfg, args):
    model, window, omega = _build(cfg, args)
    tol = _tol(cfg, args)
    c_f, c = _critical_level(model, window, omega, tol)
    factory = GraphFactory(window, model, omega)
    g = factory.graph(c)
    A = aub.classical_aubry_on_graph(factory.graph(c_f))
    if len(A.nodes):
        src = A.nodes
    else:
        src = np.array([window.index_of(cfg.extra.get("source", np.zeros(window.dim)))])
    u = cor.lax_extension(src, 0.0, graph=g)
    return model, window, omega, tol, c_f, c, g, A, u


def run_corrector(cfg: ExperimentConfig, args, out: Path) -> dict:
    model, window, omega, tol, c_f, c, g, A, u = _corrector_from_aubry(cfg, args)
    rep = cor.verify_field(u)
    d = rep.to_dict()
    d["level"] = _num(c, tol)
    src_nodes = np.asarray(A.nodes, dtype=np.int64)
    d["sources"] = [int(i) for i in src_nodes]
    _write_json(out / "corrector.json", d)
    field_csv = MetricField(g, u.values, np.full(g.n, -1), src_nodes, np.zeros(len(src_nodes)))
    (out / "field.csv").write_text(field_csv.to_csv())
    return d


def run_curve(cfg: ExperimentConfig, args, out: Path) -> dict:
    model, window, omega, tol, c_f, c, g, A, u = _corrector_from_aubry(cfg, args)
    rnd = aub.random_aubry_approx(window, model, omega, c, cfg.ensemble_size, cfg.R_max,
                                  seed=args.seed if args.seed is not None else cfg.seed)
    x = cfg.extra.get("x")
    x = int(rnd[0]) if x is None else window.index_of(x)
    curve = cor.calibrated_curve(x, u, rnd, model, omega,
                                 float(cfg.extra.get("max_span", 1.0)))
    (out / "curve.csv").write_text(curve.to_csv())
    d = {"start_node": x, "nodes": [int(i) for i in curve.nodes],
         "total_action": _num(curve.total_action, 1e-12),
         "max_action_gap": _num(float(np.max(np.abs(curve.actions - curve.distances))),
                                1e-12)}
    _write_json(out / "curve.json", d)
    return d


def run_ergodic(cfg: ExperimentConfig, args, out: Path) -> dict:
    e = cfg.extra.get("ergodic")
    if not isinstance(e, dict):
        raise ConfigError("ergodic config needs an 'ergodic' object")
    try:
        k = int(e.get("k", 2))
        basis = generate_frequencies(k, e.get("family", "sqrt_primes"), e.get("user_list"),
                                     int(e.get("dim", 1)))
        space = TorusSpace(basis)
        n = int(e.get("n_steps", 10_000))
        x_hat = e.get("x_hat", [1.0] * basis.dim)
        probes = e.get("probes") or [list(r) for r in np.eye(k, dtype=int)]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid ergodic config: {exc!r}") from exc
    rep = equidistribution_test(space, x_hat, n, probes)
    d = {"n_steps": n, "space": space.to_dict(),
         "birkhoff_avg": [float(v) for v in rep.birkhoff_avg],
         "space_avg": [float(v) for v in rep.space_avg],
         "max_gap": _num(rep.max_gap, 0.0)}
    seed = args.seed if args.seed is not None else cfg.seed
    series = APSeriesModel(space, tuple(APTerm(1.0, j, 0.0) for j in range(k)))
    samp = RandomSetSampler(series, space, lower=0.0)
    sp = volume_fraction(samp, "spatial", omega=sample_env(space, seed),
                         radius=float(e.get("radius", 50.0)), h=float(e.get("h", 0.01)))
    pr = volume_fraction(samp, "probabilistic", m=int(e.get("m", 2000)), seed=seed)
    d["volume_fraction"] = {"spatial": sp.to_dict(), "probabilistic": pr.to_dict()}
    _write_json(out / "ergodic.json", d)
    return d


COMMANDS = {
    "critical": run_critical,
    "effective": run_effective,
    "aubry": run_aubry,
    "corrector": run_corrector,
    "curve": run_curve,
    "ergodic": run_ergodic,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ergohj", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--stencil", choices=["axis", "axis+diagonal", "16"], default=None)
    p.add_argument("--level-tol", type=float, default=None)
    p.add_argument("--svg", action="store_true", help="also write an SVG plot when supported")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        args.out.mkdir(parents=True, exist_ok=True)
        result = COMMANDS[args.command](cfg, args, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (crit.BracketError, NegativeCycle, RuntimeError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    log.info("wrote %s", json.dumps(result, sort_keys=True)[:200])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
