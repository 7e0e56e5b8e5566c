"""Figure rendering for the metric CSVs: one PNG next to each report."""

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def render_ber(csv_path, png_path):
    _, rows = _read_csv(csv_path)
    series = defaultdict(list)
    for temp, stage, theta, ber in rows:
        label = stage if not theta else f"{stage} (theta={theta})"
        series[label].append((float(temp), float(ber)))
    fig, ax = plt.subplots(figsize=(6, 4))
    for label in sorted(series):
        points = sorted(series[label])
        ax.plot([p[0] for p in points], [p[1] for p in points], marker="o", label=label)
    ax.set_xlabel("temperature [C]")
    ax.set_ylabel("bit error rate")
    ax.set_title("Response error rate vs. reference read")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path)
    plt.close(fig)


def render_reliable_bits(csv_path, png_path):
    _, rows = _read_csv(csv_path)
    by_theta = defaultdict(list)
    for theta, _seg, count in rows:
        by_theta[int(theta)].append(int(count))
    thetas = sorted(by_theta)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.boxplot([by_theta[t] for t in thetas], tick_labels=[str(t) for t in thetas])
    ax.set_xlabel("flip-count threshold")
    ax.set_ylabel("qualified bits per segment")
    ax.set_title("Reliable-bit yield by threshold")
    ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(png_path)
    plt.close(fig)


def render_uniqueness(csv_path, png_path):
    _, rows = _read_csv(csv_path)
    labels = [f"{scope}\n{ctx}" if ctx else scope for scope, ctx, _n, _m in rows]
    means = [float(m) for _s, _c, _n, m in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(labels)), 4))
    ax.bar(range(len(labels)), means, color="#4878a8")
    ax.axhline(0.5, color="gray", linestyle="--", linewidth=1)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=7)
    ax.set_ylabel("mean fractional Hamming distance")
    ax.set_title("Response uniqueness")
    ax.set_ylim(0, 0.6)
    fig.tight_layout()
    fig.savefig(png_path)
    plt.close(fig)


def render_entropy_profile(csv_path, png_path):
    header, rows = _read_csv(csv_path)
    temps = header[1:]
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = [int(r[0]) for r in rows]
    for col, label in enumerate(temps, start=1):
        ax.plot(xs, [float(r[col]) for r in rows], linewidth=0.8,
                label=label.replace("entropy_", "").replace("C", " C"))
    ax.set_xlabel("bitmap row")
    ax.set_ylabel("entropy [bits]")
    ax.set_title("Per-row entropy across temperatures")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(png_path)
    plt.close(fig)


_RENDERERS = {
    "ber.csv": render_ber,
    "reliable_bits.csv": render_reliable_bits,
    "uniqueness.csv": render_uniqueness,
    "entropy_profile.csv": render_entropy_profile,
}


def render_all(directory) -> list[str]:
    """Render a PNG for every known CSV present in the directory."""
    directory = Path(directory)
    rendered = []
    for name, renderer in _RENDERERS.items():
        csv_path = directory / name
        if csv_path.exists():
            png_path = csv_path.with_suffix(".png")
            renderer(csv_path, png_path)
            rendered.append(str(png_path))
    return rendered
