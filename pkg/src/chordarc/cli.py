"""Command line entry point: ``chordarc <experiment> --config cfg.json --out reports/``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import ConfigError
from .harness.config import parse_config
from .harness.experiments import run
from .harness.report import UNSUPPORTED, emit_report

SVG_SERIES = {
    "equivalence": ("In/I1", "c"),
    "tail": ("ratio", "alpha"),
    "sewing": ("qs_constant", "alpha"),
    "characterization": ("In/bound", "c"),
}


def _load(kind: str, config: str | None, overrides: dict) -> dict:
    data = {}
    if config:
        try:
            data = json.loads(Path(config).read_text())
        except OSError as exc:
            raise click.ClickException(f"cannot read config {config}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            raise click.ClickException(f"{config}: invalid JSON: {exc}")
    if data.get("kind", kind) != kind:
        raise click.ClickException(f"config kind {data['kind']!r} does not match subcommand {kind!r}")
    data["kind"] = kind
    for key, val in overrides.items():
        if val is None or val == ():
            continue
        if key == "domain":
            data["domain"] = _domain_arg(val)
        elif key == "rel_tol":
            data.setdefault("quadrature", {})["rel_tol"] = val
        else:
            data[key] = list(val) if isinstance(val, tuple) else val
    return data


def _domain_arg(text: str) -> dict:
    kind, _, rest = text.partition(":")
    out = {"type": kind.strip()}
    for part in filter(None, (s.strip() for s in rest.split(","))):
        key, _, val = part.partition("=")
        out[key.strip()] = int(val) if key.strip() == "depth" else float(val)
    return out


def _execute(kind: str, config, out, overrides) -> None:
    try:
        cfg = parse_config(_load(kind, config, overrides))
    except ConfigError as exc:
        for path, msg in exc.errors:
            click.echo(f"config error at {path or '<root>'}: {msg}", err=True)
        sys.exit(2)
    rows = run(cfg)
    outdir = Path(out or cfg.output.dir)
    for fmt in cfg.output.formats:
        if fmt == "svg":
            quantity, param = (cfg.output.series.split("@") if cfg.output.series
                               else SVG_SERIES.get(kind, (None, None)))
            if cfg.sweep is None or quantity is None:
                continue
            emit_report(rows, "svg", outdir / f"{cfg.id}_{kind}.svg", quantity=quantity, param=cfg.sweep.param)
        else:
            emit_report(rows, fmt, outdir / f"{cfg.id}_{kind}.{fmt}")
    failures = 0
    for r in rows:
        flags = r.flags
        bad = [k for k, f in flags.items() if f is False]
        unsupported = [k for k, f in flags.items() if f == UNSUPPORTED]
        state = "FAIL" if bad else "ok"
        extra = f" failed={','.join(bad)}" if bad else ""
        extra += f" unsupported={','.join(unsupported)}" if unsupported else ""
        click.echo(f"{state:4} {r.row_id}{extra}")
        failures += bool(bad)
    click.echo(f"{len(rows)} rows, {failures} failing; reports in {outdir}")
    sys.exit(1 if failures else 0)


def _common(fn):
    fn = click.option("--config", "config", type=click.Path(dir_okay=False), help="JSON config file.")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False), help="Report directory.")(fn)
    fn = click.option("--domain", help="Domain, e.g. 'grating:c=0.6' or 'sector:alpha=0.5'.")(fn)
    fn = click.option("--p", "p", type=float, multiple=True, help="Exponent p (repeatable).")(fn)
    fn = click.option("--n", "n", type=int, multiple=True, help="Derivative order n (repeatable).")(fn)
    fn = click.option("--function", "functions", multiple=True, help="Test function, e.g. 'pole(w=-1i)'.")(fn)
    fn = click.option("--rel-tol", type=float, help="Quadrature relative tolerance.")(fn)
    fn = click.option("--jobs", type=int, help="Worker processes.")(fn)
    return fn


@click.group()
@click.version_option(package_name="chordarc")
def main():
    """Numerical experiments on Besov energies of harmonic functions in chord-arc domains."""


def _command(kind: str, name: str, doc: str):
    @main.command(name=name, help=doc)
    @_common
    def cmd(config, out, domain, p, n, functions, rel_tol, jobs):
        _execute(kind, config, out, {"domain": domain, "p": p, "n": n, "functions": functions,
                                     "rel_tol": rel_tol, "jobs": jobs})
    return cmd


_command("diagnostics", "diagnose", "Chord-arc, Ahlfors and Meyer-David constants of curves.")
_command("energy", "energy", "Interior Besov energy of test functions.")
_command("boundary_norm", "boundary-norm", "Boundary Besov norms of test-function traces.")
_command("equivalence", "equivalence", "Equivalence chain of energies and norms over a sweep.")
_command("characterization", "characterize", "Test-function bounds and geometric quantities at probe points.")
_command("tail", "tail", "Tail integrals along conformal vertical rays.")
_command("sewing", "sewing", "Sewing exponents and quasisymmetric constants.")
_command("carleson", "carleson", "Carleson box norms and the averaged Lusin inequality.")


if __name__ == "__main__":
    main()
