"""Quick-look plots of the CSV files written by ``ris-aging-de``.

Not part of the package contract. Usage::

    python docs/plot_results.py results/se-vs-doppler.csv [more.csv ...]

Writes a PNG next to each CSV. Needs matplotlib.
"""

import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

Y_COLUMNS = {
    "nmse-vs-snr": ("nmse_de", "nmse_mc"),
    "se-vs-time": ("de_se_n", "mc_se_n"),
}
X_LABELS = {
    "nmse-vs-snr": "pilot SNR [dB]",
    "se-vs-doppler": "f_D T_s",
    "se-vs-time": "channel use n",
    "se-vs-L": "RIS elements L",
    "se-vs-M": "BS antennas M",
    "convergence": "outer iteration",
    "init-sensitivity": "initialisation index",
}


def _num(text):
    return float(text) if text not in ("", None) else None


def plot(path):
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return None
    name = rows[0]["experiment"]
    y_de, y_mc = Y_COLUMNS.get(name, ("de_se", "mc_se"))
    groups = defaultdict(list)
    for r in rows:
        key = r["baseline"]
        if name == "nmse-vs-snr":
            key = f"{r['velocity_kmh']} km/h"
        groups[key].append(r)
    fig, ax = plt.subplots(figsize=(6, 4))
    for key, rs in groups.items():
        x = [float(r["sweep_value"]) for r in rs]
        de = [_num(r.get(y_de)) for r in rs]
        if any(v is not None for v in de):
            line, = ax.plot(x, [v if v is not None else float("nan") for v in de], label=f"{key} (DE)")
            color = line.get_color()
        else:
            color = None
        mc = [_num(r.get(y_mc)) for r in rs]
        if any(v is not None for v in mc):
            ax.plot(x, [v if v is not None else float("nan") for v in mc], "o", ms=3, color=color,
                    label=f"{key} (MC)")
    if name == "nmse-vs-snr":
        ax.set_yscale("log")
    ax.set_xlabel(X_LABELS.get(name, "sweep value"))
    ax.set_ylabel("NMSE" if name == "nmse-vs-snr" else "sum SE [bit/s/Hz]")
    ax.set_title(name)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    out = path.with_suffix(".png")
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


if __name__ == "__main__":
    for arg in sys.argv[1:]:
        print(plot(arg))
