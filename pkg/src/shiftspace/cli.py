"""Command-line driver: ``shiftspace <command> [options]``.

Exit status: 0 when every certificate passes, 2 when one fails (the report
is still written), 1 on bad input.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, _accel
from .approximation import entropy_chain, low_entropy_approx
from .entropy import entropy_curve, spacing_bound
from .geometry import FiniteRegion, GroupContext, box, interval
from .patterns import Alphabet, ShiftSpec, check_gluing, spec_from_json, spec_to_json
from .spectrum import isolation_premises, spectrum
from .suite import counting_suite
from .tiling import TileSet, certify_tileset, error_count, greedy_maximal, is_maximal, render_svg

COMMANDS = ("entropy", "tile", "glue", "approx", "chain", "spectrum", "verify")
DEFAULT_FORMAT = {"entropy": "csv", "tile": "json", "glue": "json", "approx": "json", "chain": "json",
                  "spectrum": "csv", "verify": "json"}
FORMULAS = {
    "estimate": "log|X_F| / |F|",
    "sparse_count": "(3|A|/eps)^ceil(eps n)",
    "tiling": "log p + log|A| * uncovered fraction",
    "qp": "h(Q) + (2/r) log(3r)",
    "spacing": "3 eps log(|A|/eps) + eps log|A|",
    "marker": "2 eps log(|A|/eps)",
}


class InputError(Exception):
    pass


@dataclass
class ExperimentConfig:
    command: str
    spec: str | None = None
    tileset: str | None = None
    marker_tileset: str | None = None
    window: str | None = None
    r: int | None = None
    eps: float | None = None
    c: float | None = None
    margin: int | None = None
    tile_side: int | None = None
    out: str = "out"
    seed: int = 0
    format: str | None = None
    extra: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise InputError(f"unknown command {self.command!r}")
        if self.r is not None and self.r < 1:
            raise InputError("parameter --r must be a positive integer")
        if self.eps is not None and not 0 < self.eps <= 1:
            raise InputError("parameter --eps must lie in (0, 1]")
        if self.c is not None and self.c < 0:
            raise InputError("parameter --c must be non-negative")
        if self.margin is not None and self.margin < 0:
            raise InputError("parameter --margin must be non-negative")
        if self.tile_side is not None and self.tile_side < 1:
            raise InputError("parameter --tile-side must be positive")
        if self.seed < 0:
            raise InputError("parameter --seed must be non-negative")
        fmt = self.format or DEFAULT_FORMAT[self.command]
        allowed = {"entropy": {"csv", "json"}, "tile": {"json", "svg"}, "spectrum": {"csv", "json"}}
        if fmt not in allowed.get(self.command, {"json"}):
            raise InputError(f"parameter --format {fmt!r} is not available for {self.command}")
        self.format = fmt
        needs = {"entropy": ["spec", "window"], "tile": ["tileset", "window"], "glue": ["spec", "r", "window"],
                 "approx": ["spec", "r", "eps", "window"], "chain": ["spec", "r", "eps", "c", "window"],
                 "spectrum": ["tileset", "eps", "window"], "verify": []}
        for name in needs[self.command]:
            if getattr(self, name) is None:
                raise InputError(f"parameter --{name} is required for {self.command}")

    def echo(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "extra" and v is not None}
        d.update(self.extra)
        return d


# --------------------------------------------------------------------------
# inputs


def _load_json(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path} at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_spec(path: str) -> ShiftSpec:
    obj = _load_json(path)
    try:
        return spec_from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid shift in {path}: {exc}") from None


def load_tileset(path: str, ctx: GroupContext | None = None) -> TileSet:
    obj = _load_json(path)
    try:
        return TileSet.from_json(obj, ctx)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise InputError(f"invalid tile set in {path}: {exc}") from None


def _int(s: str, what: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise InputError(f"parameter --window: {what} {s!r} is not an integer") from None


def parse_window(text: str, dimension: int) -> FiniteRegion:
    """``n`` (box of side n), ``a:b`` (the interval [a, b)) or ``n1xn2...`` (box)."""
    text = text.strip()
    if ":" in text:
        if dimension != 1:
            raise InputError("parameter --window: a:b ranges are one-dimensional")
        a, b = (_int(p, "bound") for p in text.split(":", 1))
        if b <= a:
            raise InputError("parameter --window: empty interval")
        return interval(a, b)
    sides = [_int(p, "side") for p in text.lower().split("x")]
    if len(sides) == 1:
        sides = sides * dimension
    if len(sides) != dimension or min(sides) < 1:
        raise InputError(f"parameter --window: need {dimension} positive sides")
    return box(GroupContext(dimension), sides)


def parse_windows(text: str, dimension: int) -> list[FiniteRegion]:
    """Comma-separated windows; ``n..m`` expands to every size from n to m."""
    out = []
    for part in text.split(","):
        if ".." in part:
            lo, hi = (_int(p, "size") for p in part.split("..", 1))
            if lo < 1 or hi < lo:
                raise InputError("parameter --window: bad size range")
            out.extend(parse_window(str(n), dimension) for n in range(lo, hi + 1))
        else:
            out.append(parse_window(part, dimension))
    return out


# --------------------------------------------------------------------------
# commands: each returns (passed, {filename: text})


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"version": __version__, "config": cfg.echo(), "formulas": FORMULAS, "numpy": np.__version__}


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _finite(x):
    if isinstance(x, float) and math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return x


def cmd_entropy(cfg: ExperimentConfig):
    spec = load_spec(cfg.spec)
    windows = parse_windows(cfg.window, spec.dimension)
    curve = entropy_curve(spec, windows, cfg.margin)
    if cfg.format == "csv":
        return True, {"entropy.csv": curve.to_csv()}
    rows = [{"window_id": i, "size": e.size, "count": e.count, "estimate": _finite(e.value), "flag": e.flag}
            for i, e in enumerate(curve.estimates)]
    return True, {"entropy.json": _dump({"provenance": _provenance(cfg), "spec": spec_to_json(spec),
                                         "estimates": rows, "last": _finite(curve.last)})}


def cmd_tile(cfg: ExperimentConfig):
    ts = load_tileset(cfg.tileset)
    W = parse_window(cfg.window, ts.ctx.dimension)
    T = greedy_maximal(ts, W)
    if cfg.format == "svg":
        try:
            return True, {"tiling.svg": render_svg(T)}
        except ValueError as exc:
            raise InputError(str(exc)) from None
    report = {"provenance": _provenance(cfg), "tiling": T.to_json(), "placements": len(T),
              "errors": error_count(T), "error_density": error_count(T) / len(W), "maximal": is_maximal(T)}
    passed = report["maximal"]
    if cfg.eps is not None:
        cert = certify_tileset(ts, cfg.eps, [W], r=cfg.r or 1)
        report["certificate"] = {"passed": cert.passed, "windows": cert.windows, "failure": cert.failure}
        passed = passed and cert.passed
    report["passed"] = passed
    return passed, {"tiling.json": _dump(report)}


def cmd_glue(cfg: ExperimentConfig):
    spec = load_spec(cfg.spec)
    m = max(1, cfg.margin if cfg.margin is not None else spec.default_margin())
    rows = []
    for W in parse_windows(cfg.window, spec.dimension):
        shift = np.zeros(spec.dimension, dtype=np.int64)
        shift[0] = int(W.points[:, 0].max() - W.points[:, 0].min()) + cfg.r + 1
        v = check_gluing(spec, cfg.r, W, W.translate(shift), m)
        rows.append({"size": len(W), "margin": m, **v.to_json(spec.alphabet)})
    passed = all(r["passed"] for r in rows)
    return passed, {"glue.json": _dump({"provenance": _provenance(cfg), "r": cfg.r, "pairs": rows,
                                        "passed": passed})}


def cmd_approx(cfg: ExperimentConfig):
    spec = load_spec(cfg.spec)
    W = parse_window(cfg.window, spec.dimension)
    sides = [cfg.tile_side] if cfg.tile_side else None
    _, rep = low_entropy_approx(spec, cfg.r, cfg.eps, W, tile_sides=sides, margin=cfg.margin)
    return rep.passed, {"approx.json": _dump({"provenance": _provenance(cfg), "report": rep.to_json()})}


def cmd_chain(cfg: ExperimentConfig):
    spec = load_spec(cfg.spec)
    W = parse_window(cfg.window, spec.dimension)
    sides = [cfg.tile_side] if cfg.tile_side else None
    rep = entropy_chain(spec, cfg.r, cfg.eps, cfg.c, W, tile_sides=sides, margin=cfg.margin)
    return rep.passed, {"chain.json": _dump({"provenance": _provenance(cfg), "report": rep.to_json()})}


def cmd_spectrum(cfg: ExperimentConfig):
    R = load_tileset(cfg.tileset)
    T = load_tileset(cfg.marker_tileset, R.ctx) if cfg.marker_tileset else R
    if cfg.spec:
        alphabet = load_spec(cfg.spec).alphabet
    else:
        alphabet = Alphabet.of_size(int(cfg.extra.get("alphabet_size", 2)))
    W = parse_window(cfg.window, R.ctx.dimension)
    rep = spectrum(alphabet, R, T, cfg.eps, W)
    files = {"spectrum.json": _dump({"provenance": _provenance(cfg), "report": rep.to_json()})}
    if cfg.format == "csv":
        files["spectrum.csv"] = rep.to_csv()
    return rep.passed, files


def cmd_verify(cfg: ExperimentConfig):
    rep = counting_suite(cfg.seed, int(cfg.extra.get("runs", 100)))
    d = rep.to_json()
    d["spacing_example"] = spacing_bound(2, 0.1).to_json()
    if cfg.spec:
        spec = load_spec(cfg.spec)
        if cfg.c is not None and cfg.r is not None and cfg.window:
            iso = isolation_premises(spec, cfg.c, cfg.r, parse_windows(cfg.window, spec.dimension), cfg.margin)
            d["isolation_premises"] = iso.to_json()
    passed = rep.passed and d.get("isolation_premises", {}).get("certified", True)
    d["passed"] = passed
    return passed, {"verify.json": _dump({"provenance": _provenance(cfg), "report": d})}


HANDLERS = {"entropy": cmd_entropy, "tile": cmd_tile, "glue": cmd_glue, "approx": cmd_approx,
            "chain": cmd_chain, "spectrum": cmd_spectrum, "verify": cmd_verify}


# --------------------------------------------------------------------------
# run


def write_outputs(out_dir: str, files: dict[str, str]) -> list[str]:
    """Write every file through a temporary name and rename at the end."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    staged = []
    for name, text in sorted(files.items()):
        fd, tmp = tempfile.mkstemp(dir=d, prefix=f".{name}.")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        staged.append((tmp, d / name))
    for tmp, final in staged:
        os.replace(tmp, final)
    return [str(final) for _, final in staged]


def run(cfg: ExperimentConfig) -> int:
    try:
        _accel.configure_threads()
        cfg.validate()
        passed, files = HANDLERS[cfg.command](cfg)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # domain errors raised by the library are input problems
        print(f"error: {exc}", file=sys.stderr)
        return 1
    paths = write_outputs(cfg.out, files)
    for p in paths:
        print(p)
    if not passed:
        print("certificate failed; see the report", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="shiftspace", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--spec", help="shift JSON file")
        s.add_argument("--tileset", help="tile set JSON file")
        s.add_argument("--marker-tileset", help="tile set for the marker shift (spectrum; default --tileset)")
        s.add_argument("--window", help="n, a:b, n1xn2, or comma lists and n..m ranges")
        s.add_argument("--r", type=int)
        s.add_argument("--eps", type=float)
        s.add_argument("--c", type=float)
        s.add_argument("--margin", type=int)
        s.add_argument("--tile-side", type=int)
        s.add_argument("--alphabet-size", type=int, default=None, help="spectrum alphabet when --spec is absent")
        s.add_argument("--runs", type=int, default=None, help="random covers in verify")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--format", choices=("csv", "json", "svg"))
    return p


def config_from_args(ns: argparse.Namespace) -> ExperimentConfig:
    extra = {}
    if ns.alphabet_size is not None:
        if ns.alphabet_size < 1:
            raise InputError("parameter --alphabet-size must be positive")
        extra["alphabet_size"] = ns.alphabet_size
    if ns.runs is not None:
        if ns.runs < 1:
            raise InputError("parameter --runs must be positive")
        extra["runs"] = ns.runs
    return ExperimentConfig(command=ns.command, spec=ns.spec, tileset=ns.tileset, marker_tileset=ns.marker_tileset,
                            window=ns.window, r=ns.r, eps=ns.eps, c=ns.c, margin=ns.margin,
                            tile_side=ns.tile_side, out=ns.out, seed=ns.seed, format=ns.format, extra=extra)


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
