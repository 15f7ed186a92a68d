"""gnuplot scripts for the CSV artifacts of a run directory."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List

from .errors import MissingArtifactError

REQUIRED = {
    "rho_loglog.gp": "envelope.csv",
    "epsilon.gp": "envelope.csv",
    "theta_drift.gp": "envelope.csv",
    "l_t.gp": "scatter/l_series.csv",
    "residual_h1.gp": "scatter/residual.csv",
}


def _header(title: str, out_png: str) -> str:
    return (
        "set terminal pngcairo size 900,600\n"
        f"set output '{out_png}'\n"
        "set datafile separator ','\n"
        f"set title '{title}'\n"
        "set key top right\n"
    )


def _scripts(omega: float) -> Dict[str, str]:
    return {
        "rho_loglog.gp": _header("amplitude and parametrix band", "rho_loglog.png")
        + "set logscale xy\nset xlabel 't'\nset ylabel 'rho'\n"
        "plot '../envelope.csv' skip 1 using 1:2 with lines title 'rho', \\\n"
        "     '' skip 1 using 1:($4*0.5):($4*1.5) with filledcurves fs transparent solid 0.2 title 'rho_bar x [1/2, 3/2]', \\\n"
        "     '' skip 1 using 1:4 with lines dt 2 title 'rho_bar'\n",
        "epsilon.gp": _header("relative deviation from the parametrix", "epsilon.png")
        + "set logscale x\nset xlabel 't'\nset ylabel 'epsilon'\n"
        "plot '../envelope.csv' skip 1 using 1:5 with lines title 'epsilon'\n",
        "theta_drift.gp": _header("phase drift", "theta_drift.png")
        + f"omega = {omega!r}\nset xlabel 'sqrt(t)'\nset ylabel 'theta - Omega t'\n"
        "plot '../envelope.csv' skip 1 using (sqrt($1)):($3 - omega*$1) with lines title 'theta - Omega t'\n",
        "l_t.gp": _header("auxiliary L2 energy", "l_t.png")
        + "set xlabel 't'\nset ylabel 'l(t)'\n"
        "plot '../scatter/l_series.csv' skip 1 using 1:2 with lines title 'l(t)'\n",
        "residual_h1.gp": _header("free-wave residual", "residual_h1.png")
        + "set logscale y\nset xlabel 't'\nset ylabel 'H1 residual'\n"
        "plot '../scatter/residual.csv' skip 1 using 1:2 with linespoints title 'residual H1', \\\n"
        "     '' skip 1 using 1:3 with linespoints title 'residual L2'\n",
    }


def emit_plots(report_dir) -> List[Path]:
    """Write the five gnuplot scripts into report_dir/plots and return their paths."""
    root = Path(report_dir)
    missing = sorted({f for f in REQUIRED.values() if not (root / f).is_file()})
    if missing:
        raise MissingArtifactError(f"missing CSV artifacts in {root}: {', '.join(missing)}")
    omega = 1.0
    meta = root / "envelope.json"
    if meta.is_file():
        omega = float(json.loads(meta.read_text()).get("omega", omega))
    out = root / "plots"
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, text in _scripts(omega).items():
        p = out / name
        p.write_text(text)
        paths.append(p)
    validate_scripts(out)
    return paths


def referenced_files(script: Path) -> List[Path]:
    files = []
    for line in script.read_text().splitlines():
        if line.lstrip().startswith(("plot", "'")) or "plot '" in line:
            for part in line.split("'")[1::2]:
                if part.endswith(".csv"):
                    files.append((script.parent / part).resolve())
    return files


def validate_scripts(plot_dir: Path) -> None:
    for s in Path(plot_dir).glob("*.gp"):
        for f in referenced_files(s):
            if not f.is_file():
                raise MissingArtifactError(f"{s.name} references missing file {f}")
