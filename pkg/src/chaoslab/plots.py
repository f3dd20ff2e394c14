"""Self-contained gnuplot scripts built from JSON reports (data is inlined)."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from .errors import MissingReport


def _block(name: str, rows) -> str:
    lines = [f"${name} << EOD"]
    lines += [" ".join(repr(float(v)) if not isinstance(v, str) else v for v in row) for row in rows]
    lines.append("EOD")
    return "\n".join(lines)


def _script(term_out: str, body: list) -> str:
    head = ["# generated by chaoslab; run with: gnuplot <this file>",
            "set terminal pngcairo size 800,600",
            f"set output '{term_out}'"]
    return "\n".join(head + body) + "\n"


def _converge(rep: dict, stem: str) -> str:
    agg = rep["aggregates"]
    rows = list(zip(agg["deltas"], agg["distance"], agg["distance_se"]))
    return _script(stem + ".png", [
        _block("dist", rows),
        "set logscale xy",
        "set xlabel 'delta'",
        "set ylabel 'coupled L2 distance'",
        "plot $dist using 1:2:3 with yerrorlines title 'distance'",
    ])


def _tails(rep: dict, stem: str) -> str:
    agg = rep["aggregates"]
    body, plots = [], []
    for i, delta in enumerate(agg["deltas"]):
        rows = [(M, t) for M, t in zip(agg["m_list"], agg["tails"][i]) if t > 0]
        body.append(_block(f"d{i}", rows))
        plots.append(f"$d{i} using 1:2 with linespoints title 'delta={delta:g}'")
    body += ["set logscale y", "set xlabel 'M'", "set ylabel 'tail'"]
    body.append("plot " + ", \\\n     ".join(plots) if plots else "# no positive tails")
    return _script(stem + ".png", body)


def _remainder(rep: dict, stem: str) -> str:
    agg = rep["aggregates"]
    rows = [(r["delta"], r["s1"]) for r in agg["reports"] if r["s1"] > 0]
    body = [_block("s1", rows), "set logscale xy", "set xlabel 'delta'", "set ylabel 'S1'",
            f"pred = {agg['predicted_min_exponent']!r}"]
    if "s1_slope" in agg:
        body.append(f"slope = {agg['s1_slope']!r}")
        body.append("f(x) = a * x**slope")
        body.append("a = 1; fit f(x) $s1 using 1:2 via a")
        body.append("plot $s1 using 1:2 with points title 'S1', f(x) title sprintf('fit slope %.3f (pred %.3f)', slope, pred)")
    else:
        body.append("plot $s1 using 1:2 with points title 'S1'")
    return _script(stem + ".png", body)


def _coeffs(path: Path, stem: str) -> str:
    table = path.with_suffix(".csv")
    if not table.exists():
        raise MissingReport(f"{table} not found")
    with open(table) as fh:
        rows = [(int(r["m"]), int(r["l"]), float(r["value"])) for r in csv.DictReader(fh)]
    return _script(stem + ".png", [
        _block("a", rows),
        "set xlabel 'm'", "set ylabel 'l'", "set view map",
        "splot $a using 1:2:3 with points pointtype 5 palette title 'a_{m,l}'",
    ])


def emit_plots(reports: Sequence, out: Path) -> list:
    """Write one plot script per recognised report; returns the script paths."""
    out = Path(out)
    written = []
    for path in reports:
        path = Path(path)
        if not path.exists():
            raise MissingReport(f"{path} not found")
        rep = json.loads(path.read_text())
        cmd = rep.get("command")
        stem = str(out / f"{path.stem}_plot")
        if cmd == "converge":
            text = _converge(rep, Path(stem).name)
        elif cmd == "verify-a2":
            text = _tails(rep, Path(stem).name)
        elif cmd == "remainder":
            text = _remainder(rep, Path(stem).name)
        elif cmd == "coeffs":
            text = _coeffs(path, Path(stem).name)
        else:
            continue
        target = Path(stem + ".gp")
        target.write_text(text)
        written.append(target)
    return written
