"""Command-line front end: constants, bounds, solve, construct, scan.

All output is batch-oriented (text, JSON, CSV, optional SVG line plots).
Exit codes: 0 success, 2 usage or parse error, 3 no result found.
"""

from __future__ import annotations

import csv
import json
import math
import os
import sys
from typing import Optional

import click
import numpy as np

from .constructions import budget_aware_games, theorem1_games
from .equilibrium import default_inits
from .games import dump_game, game_from_dict, social_welfare
from .lpoa import SearchConfig, game_lpoa, lower_bound_witness, lpoa_upper_scan, ratio_grid
from .mechanisms import (
    MECHANISM_NAMES,
    SignalDomainError,
    beta_equation,
    gamma_equation,
    get_mechanism,
    solve_constants,
)

__all__ = ["main"]


def _jsonable(obj):
    """Recursively convert payloads to JSON-safe values (inf -> 'inf')."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float):
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        if math.isnan(obj):
            return "nan"
    return obj


def _emit(payload: dict, text: str, as_json: bool, out: Optional[str]) -> None:
    if as_json:
        rendered = json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"
    else:
        rendered = text if text.endswith("\n") else text + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(rendered)
    else:
        click.echo(rendered, nl=False)


def _mechanism(name: str):
    try:
        return get_mechanism(name)
    except KeyError:
        raise click.UsageError(
            f"unknown mechanism {name!r}; expected one of {', '.join(MECHANISM_NAMES)}"
        )


def _check_arity(mech, n: int) -> None:
    if mech.arity is not None and n != mech.arity:
        raise click.UsageError(f"mechanism {mech.name!r} supports only n={mech.arity}")


def _parse_ratio_range(spec: str) -> tuple[float, float]:
    try:
        lo_s, hi_s = spec.split(":")
        lo, hi = float(lo_s), float(hi_s)
    except ValueError:
        raise click.UsageError(f"--ratio-range expects LO:HI, got {spec!r}")
    if not (0 < lo < hi):
        raise click.UsageError("--ratio-range needs 0 < LO < HI")
    return lo, hi


@click.group()
def main():
    """Divisible-resource allocation mechanisms and liquid price of anarchy."""


@main.command()
@click.option("--json", "as_json", is_flag=True, help="Emit machine-readable JSON.")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def constants(as_json: bool, out: Optional[str]):
    """Solve the transcendental mechanism constants and report residuals."""
    c = solve_constants()
    payload = {
        "beta": c.beta,
        "beta_residual": abs(beta_equation(c.beta)),
        "gamma": c.gamma,
        "gamma_residual": abs(gamma_equation(c.gamma)),
        "phi": c.phi,
        "phi_residual": abs(c.phi * c.phi - c.phi - 1.0),
    }
    text = (
        f"beta  = {c.beta:.15f}   (residual {payload['beta_residual']:.3e})\n"
        f"gamma = {c.gamma:.15f}   (residual {payload['gamma_residual']:.3e})\n"
        f"phi   = {c.phi:.15f}   (residual {payload['phi_residual']:.3e})\n"
    )
    _emit(payload, text, as_json, out)


def _witness_candidates(n: int, argmax: np.ndarray) -> list[np.ndarray]:
    candidates = [np.asarray(argmax, dtype=float)]
    for eps in (1e-2, 1e-3, 1e-4):
        s = np.zeros(n)
        s[0], s[1] = eps, 1.0
        candidates.append(s)
    candidates.append(np.ones(n))
    two_hot = np.zeros(n)
    two_hot[0] = two_hot[1] = 1.0
    candidates.append(two_hot)
    return candidates


@main.command()
@click.argument("mech_name", metavar="MECH")
@click.option("-n", "players", default=2, show_default=True, help="Number of players.")
@click.option("--points", default=400, show_default=True, help="Ratio grid points per scale.")
@click.option("--seed", default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def bounds(mech_name: str, players: int, points: int, seed: int, as_json: bool, out):
    """Scan the master ratio and certify the best lower-bound witness."""
    mech = _mechanism(mech_name)
    _check_arity(mech, players)
    cfg = SearchConfig(ratio_points=points, seed=seed)
    scan = lpoa_upper_scan(mech, players, cfg)

    best_witness = None
    for candidate in _witness_candidates(players, scan.argmax):
        try:
            report = lower_bound_witness(mech, candidate)
        except (SignalDomainError, ArithmeticError):
            continue
        if report.certified and (best_witness is None or report.ratio > best_witness.ratio):
            best_witness = report
        elif best_witness is None:
            best_witness = report

    payload = {
        "mechanism": mech.name,
        "n": players,
        "upper_scan": scan.to_dict(),
        "witness": None if best_witness is None else best_witness.to_dict(),
    }
    lines = [
        f"mechanism     {mech.name}  (n={players})",
        f"upper scan    {scan.sup_estimate:.9f}  at s = "
        + "[" + ", ".join(f"{x:.6g}" for x in scan.argmax) + "]",
    ]
    if best_witness is None:
        lines.append("witness       none evaluable")
    else:
        status = "certified" if best_witness.certified else "NOT certified"
        lines.append(
            f"witness       {best_witness.ratio:.9f}  ({status}, max gain "
            f"{best_witness.max_gain:.3e}) at s = "
            + "[" + ", ".join(f"{x:.6g}" for x in best_witness.signals) + "]"
        )
    _emit(payload, "\n".join(lines) + "\n", as_json, out)


@main.command()
@click.argument("gamefile", type=click.Path(exists=True, dir_okay=False))
@click.option("--mech", "mech_name", required=True, help="Mechanism name.")
@click.option("--seed", default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def solve(ctx, gamefile: str, mech_name: str, seed: int, as_json: bool, out):
    """Find equilibria of a game-spec JSON file and report welfare ratios."""
    mech = _mechanism(mech_name)
    try:
        with open(gamefile) as fh:
            spec = json.load(fh)
        game = game_from_dict(spec)
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"malformed JSON in {gamefile}: line {exc.lineno}: {exc.msg}")
    except (ValueError, KeyError, TypeError) as exc:
        raise click.UsageError(f"invalid game spec in {gamefile}: {exc}")
    _check_arity(mech, game.n)

    result = game_lpoa(game, mech, default_inits(game.n, seed=seed))
    payload = {
        "mechanism": mech.name,
        "gamefile": os.path.basename(gamefile),
        "lw_opt": result.lw_opt,
        "lpoa": result.value,
        "equilibria": [
            dict(e.to_dict(), lw=lw, sw=social_welfare(game, e.allocation))
            for e, lw in zip(result.equilibria, result.lw_values)
        ],
    }
    if result.value is None:
        _emit(payload, "no converged equilibrium found from the default initial profiles\n",
              as_json, out)
        ctx.exit(3)
    lines = [
        f"mechanism     {mech.name}",
        f"optimal LW    {result.lw_opt:.9f}",
        f"game LPoA     {result.value:.9f}  over {len(result.equilibria)} equilibria found"
        " (search is not exhaustive)",
    ]
    for idx, (e, lw) in enumerate(zip(result.equilibria, result.lw_values)):
        lines.append(
            f"  eq[{idx}]  s = [" + ", ".join(f"{x:.6g}" for x in e.signals) + "]"
            f"  LW = {lw:.9f}  classes = {'/'.join(e.classes)}"
        )
    _emit(payload, "\n".join(lines) + "\n", as_json, out)


@main.command()
@click.argument("kind", type=click.Choice(["thm1", "budget-aware"]))
@click.argument("mech_name", metavar="MECH")
@click.option("-n", "players", default=2, show_default=True)
@click.option("--emit-games", "emit_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for the two game-spec JSON files.")
@click.option("--json", "as_json", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None)
@click.pass_context
def construct(ctx, kind: str, mech_name: str, players: int, emit_dir, as_json: bool, out):
    """Build the paired lower-bound games and verify their shared equilibrium."""
    mech = _mechanism(mech_name)
    _check_arity(mech, players)
    build = theorem1_games if kind == "thm1" else budget_aware_games
    report = build(mech, players)
    payload = report.to_dict()
    if not report.ok:
        text = f"construction failed: {report.reason}\n"
        _emit(payload, text, as_json, out)
        ctx.exit(3)
    if emit_dir:
        os.makedirs(emit_dir, exist_ok=True)
        stem = f"{kind}_{mech.name}_n{players}"
        dump_game(report.game1, os.path.join(emit_dir, f"{stem}_g1.json"))
        dump_game(report.game2, os.path.join(emit_dir, f"{stem}_g2.json"))
    lines = [
        f"construction  {kind}  mechanism {mech.name}  n={players}",
        f"signals       [" + ", ".join(f"{x:.9g}" for x in report.signals) + "]",
        f"LW at eq      G1 {report.lw_eq_g1:.9f}   G2 {report.lw_eq_g2:.9f}",
        f"LW* (G2)      {report.lw_opt_g2:.9f}",
        f"LPoA bound    {report.bound:.9f}",
        f"verified      G1 {report.verified_g1}  G2 {report.verified_g2}"
        f"  budgets feasible {report.budget_feasible}",
    ]
    _emit(payload, "\n".join(lines) + "\n", as_json, out)


@main.command()
@click.argument("mech_name", metavar="MECH")
@click.option("-n", "players", default=2, show_default=True)
@click.option("--ratio-range", default="1e-8:1e8", show_default=True,
              help="LO:HI range for the own-signal-to-tail ratio.")
@click.option("--points", default=200, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV output path.")
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None,
              help="Optional SVG line plot of ratio vs log10(s1/C).")
def scan(mech_name: str, players: int, ratio_range: str, points: int, seed: int, out, svg_path):
    """Dump a master-ratio grid over the one-vs-equal-tail family as CSV."""
    mech = _mechanism(mech_name)
    _check_arity(mech, players)
    lo, hi = _parse_ratio_range(ratio_range)
    ratios = np.geomspace(lo, hi, points)
    rows = ratio_grid(mech, players, ratios)

    header = [f"s{i + 1}" for i in range(players)] + ["ratio"]
    if out:
        fh = open(out, "w", newline="")
    else:
        fh = sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        for s, value in rows:
            writer.writerow([repr(float(x)) for x in s] + [repr(float(value))])
    finally:
        if out:
            fh.close()

    if svg_path:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        xs = [math.log10(s[0] / s[1:].sum()) for s, _ in rows]
        ys = [value for _, value in rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(xs, ys, lw=1.5)
        ax.set_xlabel("log10(s1 / C)")
        ax.set_ylabel("master ratio")
        ax.set_title(f"{mech.name}, n={players}")
        fig.tight_layout()
        fig.savefig(svg_path, format="svg")
        plt.close(fig)


if __name__ == "__main__":
    main()
