"""Figure rendering for report outputs.

Each helper takes the same rows that go into the delimited output and writes
a PNG next to it. All figures use the Agg backend so runs stay headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .analysis import RegressionFit
from .metrics import EvaluationReport

_FIG_DPI = 120


def save_binomial_figure(rows: list[dict], path: str) -> None:
    """rows: {"k", "alpha", "expected_bias"}; one line per alpha over k."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    by_alpha: dict[float, list[tuple[int, float]]] = {}
    for row in rows:
        by_alpha.setdefault(row["alpha"], []).append((row["k"], row["expected_bias"]))
    for alpha in sorted(by_alpha):
        points = sorted(by_alpha[alpha])
        ax.plot([p[0] for p in points], [p[1] for p in points],
                marker="o", ms=3, label=f"alpha={alpha:g}")
    ax.set_xlabel("bag size k")
    ax.set_ylabel("expected |bias|")
    ax.set_title("Expected bias under attribute-independent scores")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)


def save_quantile_figure(
    curves: dict[str, list[dict]], fits: dict[str, RegressionFit], path: str
) -> None:
    """curves: query_id -> rows with mean_similarity/bias; fit lines overlaid."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for query_id, rows in sorted(curves.items()):
        xs = [r["mean_similarity"] for r in rows]
        ys = [r["bias"] for r in rows]
        ax.plot(xs, ys, lw=0.8, alpha=0.5)
        fit = fits.get(query_id)
        if fit is not None and xs:
            lo, hi = min(xs), max(xs)
            ax.plot([lo, hi], [fit.slope * lo + fit.intercept, fit.slope * hi + fit.intercept],
                    lw=1.4, ls="--", alpha=0.8)
    ax.axhline(0.0, color="k", lw=0.8, ls=":")
    ax.set_xlabel("mean similarity of quantile bin")
    ax.set_ylabel("bin |bias|")
    ax.set_title("Bias across similarity quantiles")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)


def save_tradeoff_figure(rows: list[dict], path: str) -> None:
    """rows: {"fair_probability", "abs_bias_mean", "abs_bias_se", "recall_mean", "recall_se"}."""
    rows = sorted(rows, key=lambda r: r["fair_probability"])
    ps = [r["fair_probability"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.6, 4.0))
    ax1.errorbar(ps, [r["abs_bias_mean"] for r in rows],
                 yerr=[2 * r["abs_bias_se"] for r in rows], marker="o", capsize=3)
    ax1.set_xlabel("fair probability p")
    ax1.set_ylabel("AbsBias@K")
    ax1.grid(alpha=0.3)
    ax2.errorbar([r["recall_mean"] for r in rows], [r["abs_bias_mean"] for r in rows],
                 xerr=[2 * r["recall_se"] for r in rows],
                 yerr=[2 * r["abs_bias_se"] for r in rows], marker="o", capsize=3)
    for p, row in zip(ps, rows):
        ax2.annotate(f"p={p:g}", (row["recall_mean"], row["abs_bias_mean"]),
                     fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax2.set_xlabel("Recall@K (%)")
    ax2.set_ylabel("AbsBias@K")
    fig.suptitle("Fairness/utility trade-off")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)


def save_spearman_figure(rows: list[dict], path: str) -> None:
    """rows: {"query_id", "spearman", "topk_bag_bias"}."""
    fig, ax = plt.subplots(figsize=(5.6, 4.2))
    ax.scatter([r["spearman"] for r in rows], [r["topk_bag_bias"] for r in rows], s=18)
    ax.axhline(0.0, color="k", lw=0.8, ls=":")
    ax.axvline(0.0, color="k", lw=0.8, ls=":")
    ax.set_xlabel("Spearman(score, group) over all candidates")
    ax.set_ylabel("top-K bag |bias|")
    ax.set_title("Model-encoded vs retrieval-window bias")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)


def save_evaluation_figure(report: EvaluationReport, path: str) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    biases = [row.bag_bias for row in report.per_query.values()]
    ax1.hist(biases, bins=min(20, max(5, len(biases))), color="#4878d0", edgecolor="k", lw=0.4)
    ax1.axvline(report.aggregate.abs_bias_at_k, color="crimson", lw=1.4,
                label=f"AbsBias@{report.k} = {report.aggregate.abs_bias_at_k:.4f}")
    ax1.set_xlabel("per-query bag |bias|")
    ax1.set_ylabel("queries")
    ax1.legend(fontsize=8)
    names = ["recall", "mAP"]
    values = [report.aggregate.recall_at_k_percent, report.aggregate.map_at_k_percent]
    ax2.bar(names, values, color=["#6acc64", "#d5bb67"], edgecolor="k", lw=0.4)
    ax2.set_ylabel("percent")
    ax2.set_ylim(0, 100)
    fig.suptitle(f"{report.method} @ K={report.k}")
    fig.tight_layout()
    fig.savefig(path, dpi=_FIG_DPI)
    plt.close(fig)
