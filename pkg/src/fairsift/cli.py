"""Command-line front end: seeded, manifest-tracked batch runs.

Exit codes: 0 success, 2 file/parse failure, 3 configuration failure.

Every output file gets a sidecar ``<name>.manifest.json`` recording the
resolved configuration; data files themselves carry no timestamps, so
re-running a command reproduces them byte-for-byte. Report-producing commands
also render a PNG figure beside the delimited output (``--no-figures`` turns
that off). ``FAIRSIFT_THREADS`` caps the per-query worker count; results are
merged deterministically either way.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__, analysis, attributes, corpus as corpus_mod, metrics, selection, similarity
from .errors import (
    ConfigError,
    FairsiftError,
    InvalidAlpha,
    InvalidScheme,
    InvalidSpec,
    MissingLabel,
    MissingPrediction,
)

class _DataFileError(FairsiftError):
    """A data error annotated with the file it came from."""


_DATA_ERRORS = (
    corpus_mod.MalformedRecord,
    corpus_mod.DuplicateId,
    corpus_mod.UnknownLabel,
    corpus_mod.UnknownRelevantId,
    MissingLabel,
    MissingPrediction,
    _DataFileError,
)

_CONFIG_ERRORS = (ConfigError, InvalidSpec, InvalidAlpha, InvalidScheme)


@contextmanager
def _naming_file(path):
    try:
        yield
    except _DATA_ERRORS as exc:
        raise _DataFileError(f"{path}: {exc}") from exc
    except InvalidScheme as exc:
        raise ConfigError(f"{path}: {exc}") from exc


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration failures
        self.exit(3, f"{self.prog}: error: {message}\n")


def _fail(code: int, message: str) -> int:
    print(f"fairsift: error: {message}", file=sys.stderr)
    return code


def _thread_count() -> int:
    raw = os.environ.get("FAIRSIFT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _map_queries(fn: Callable, queries: Sequence) -> list:
    threads = _thread_count()
    if threads == 1 or len(queries) <= 1:
        return [fn(q) for q in queries]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, queries))


def _write_manifest(out_path: Path, command: str, args: argparse.Namespace) -> None:
    config = {
        key: (str(value) if isinstance(value, Path) else value)
        for key, value in sorted(vars(args).items())
        if key != "func" and not key.startswith("_")
    }
    manifest = {
        "tool": "fairsift",
        "version": __version__,
        "command": command,
        "config": config,
        "created_utc": datetime.now(timezone.utc).isoformat(),
    }
    out_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_sidecar_manifest(data_path: str) -> dict | None:
    path = Path(f"{data_path}.manifest.json")
    if not path.exists():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError):
        return None


def _load_scheme(path: str) -> corpus_mod.AttributeScheme:
    with open(path, encoding="utf-8") as fh, _naming_file(path):
        return corpus_mod.parse_scheme(fh)


def _load_images(path: str, scheme) -> list[corpus_mod.ImageRecord]:
    with open(path, encoding="utf-8") as fh, _naming_file(path):
        return corpus_mod.parse_image_records(fh, scheme)


def _load_queries(path: str, d: int | None) -> list[corpus_mod.QueryRecord]:
    with open(path, encoding="utf-8") as fh, _naming_file(path):
        return corpus_mod.parse_query_records(fh, d)


def _load_corpus(args) -> corpus_mod.Corpus:
    scheme = _load_scheme(args.scheme)
    images = _load_images(args.images, scheme)
    if not images:
        raise ConfigError(f"image file {args.images} is empty")
    d = images[0].embedding.shape[0]
    queries = _load_queries(args.queries, d)
    return corpus_mod.Corpus(d, tuple(images), tuple(queries), scheme)


def _load_predictions(path: str, scheme) -> dict[str | None, attributes.PredictionSet]:
    with open(path, encoding="utf-8") as fh, _naming_file(path):
        return attributes.load_prediction_file(fh, scheme)


def _scoped_predictions(
    scoped: dict[str | None, attributes.PredictionSet],
    query_id: str,
    scheme,
) -> attributes.PredictionSet:
    merged = dict(scoped.get(None, attributes.PredictionSet(scheme, {})).entries)
    per_query = scoped.get(query_id)
    if per_query is not None:
        merged.update(per_query.entries)
    return attributes.PredictionSet(scheme, merged)


def _ground_truth_or_fail(crp: corpus_mod.Corpus) -> dict[str, corpus_mod.AttributeLabel]:
    labels = crp.ground_truth_labels()
    if not labels:
        raise ConfigError("corpus has no ground-truth labels")
    return labels


def _evaluation_labels(args, crp: corpus_mod.Corpus) -> dict[str, corpus_mod.AttributeLabel]:
    if args.labels == "ground_truth":
        return _ground_truth_or_fail(crp)
    scoped = _load_predictions(args.labels, crp.scheme)
    if None not in scoped:
        raise ConfigError(
            f"prediction file {args.labels} has only query-scoped records; "
            "evaluation needs global labels (or use ground_truth)")
    return scoped[None].labels()


def _parse_float_list(text: str, flag: str) -> list[float]:
    try:
        values = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects a comma-separated list of numbers") from None
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ConfigError(f"{flag} expects a comma-separated list of integers") from None
    if not values:
        raise ConfigError(f"{flag} is empty")
    return values


def _write_csv(path: Path, header: list[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


# ---------------------------------------------------------------- retrieve

def _selection_config(args, k: int) -> selection.SelectionConfig:
    try:
        return selection.SelectionConfig(
            k=k,
            fair_probability=args.fair_prob,
            seed=args.seed,
            odd_pick_policy=selection.OddPickPolicy(args.odd_pick),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_retrieve(args) -> int:
    crp = _load_corpus(args)
    if args.k < 1:
        raise ConfigError("--k must be >= 1")
    scheme = crp.scheme
    images = list(crp.images)

    scoped: dict[str | None, attributes.PredictionSet] | None = None
    if args.method in ("pbm", "pbm-tradeoff"):
        if args.predictions:
            scoped = _load_predictions(args.predictions, scheme)
        elif all(im.label is not None for im in images):
            scoped = {None: attributes.ground_truth_predictions(images, scheme)}
        else:
            raise ConfigError("PBM requires predictions or labels")
    elif args.predictions:
        scoped = _load_predictions(args.predictions, scheme)

    config = _selection_config(args, args.k)

    def run(query: corpus_mod.QueryRecord) -> similarity.RetrievalBag:
        if args.method == "topk":
            return similarity.rank_top_k(query, images, args.k)
        if args.method == "random":
            return selection.random_select(
                query, images, args.k, args.seed, args.restrict_to_relevant)
        preds = _scoped_predictions(scoped, query.id, scheme)
        if args.method == "pbm":
            return selection.pbm_select(query, images, preds, config)
        return selection.pbm_select_tradeoff(query, images, preds, config)

    bags = _map_queries(run, sorted(crp.queries, key=lambda q: q.id))

    def label_name(query_id: str, image_id: str) -> str | None:
        if scoped is not None:
            pred = _scoped_predictions(scoped, query_id, scheme).get(image_id)
            if pred is not None:
                return pred.label.name
        image = index.get(image_id)
        if image is not None and image.label is not None:
            return image.label.name
        return None

    index = crp.image_index()
    out_path = Path(args.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for bag in bags:
            for rank, item in enumerate(bag.items, start=1):
                fh.write(json.dumps({
                    "query_id": bag.query_id,
                    "rank": rank,
                    "image_id": item.image_id,
                    "score": item.score,
                    "label": label_name(bag.query_id, item.image_id),
                }) + "\n")
    _write_manifest(Path(f"{out_path}.manifest.json"), "retrieve", args)
    print(f"wrote {sum(len(b.items) for b in bags)} rows for {len(bags)} queries to {out_path}")
    return 0


# ---------------------------------------------------------------- evaluate

def _load_bags(path: str, k: int) -> list[similarity.RetrievalBag]:
    rows_by_query: dict[str, list[tuple[int, similarity.ScoredImage]]] = {}
    with open(path, encoding="utf-8") as fh, _naming_file(path):
        for line_no, line in corpus_mod._iter_lines(fh):
            obj = corpus_mod._parse_object(line, line_no)
            try:
                query_id = obj["query_id"]
                rank = int(obj["rank"])
                item = similarity.ScoredImage(obj["image_id"], float(obj["score"]))
            except (KeyError, TypeError, ValueError):
                raise corpus_mod.MalformedRecord(
                    line_no, "bag row needs query_id, rank, image_id, score") from None
            rows_by_query.setdefault(query_id, []).append((rank, item))
    bags = []
    for query_id in sorted(rows_by_query):
        ranked = sorted(rows_by_query[query_id], key=lambda pair: pair[0])[:k]
        bags.append(similarity.RetrievalBag(query_id, tuple(item for _, item in ranked), k))
    return bags


def cmd_evaluate(args) -> int:
    crp = _load_corpus(args)
    k = args.k
    method = args.method
    seed = None
    manifest = _read_sidecar_manifest(args.bags)
    if manifest is not None:
        cfg = manifest.get("config", {})
        if k is None:
            k = cfg.get("k")
        if method is None:
            method = cfg.get("method")
        seed = cfg.get("seed")
    if k is None:
        raise ConfigError("--k is required (no manifest found beside the bags file)")
    if method is None:
        method = "unknown"

    labels = _evaluation_labels(args, crp)
    bags = _load_bags(args.bags, int(k))
    if not bags:
        raise ConfigError(f"bags file {args.bags} is empty")
    report = metrics.build_report(bags, crp.queries, labels, method, seed)

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    text_path = Path(f"{prefix}.txt")
    text_path.write_text(report.to_text(), encoding="utf-8")
    with open(f"{prefix}.csv", "w", newline="", encoding="utf-8") as fh:
        report.write_csv(fh)
    if not args.no_figures:
        from . import plotting

        plotting.save_evaluation_figure(report, f"{prefix}.png")
    _write_manifest(Path(f"{prefix}.manifest.json"), "evaluate", args)
    print(report.to_text(), end="")
    return 0


# ---------------------------------------------------------------- predict

def cmd_predict(args) -> int:
    scheme = _load_scheme(args.scheme)
    images = _load_images(args.images, scheme)
    if not images:
        raise ConfigError(f"image file {args.images} is empty")

    out_path = Path(args.out)
    if args.variant == "zero-shot-embed":
        if not args.classes:
            raise ConfigError("--variant zero-shot-embed requires --classes")
        class_records = _load_images(args.classes, scheme)
        classes = attributes.ClassEmbeddings.from_records(class_records, scheme)
        pset = attributes.zero_shot_embed_predict(images, classes)
        with open(out_path, "w", encoding="utf-8") as fh:
            attributes.dump_predictions(pset, fh)
    elif args.variant == "zero-shot-prompt":
        if not args.prompted:
            raise ConfigError("--variant zero-shot-prompt requires --prompted")
        by_query: dict[str, list] = {}
        with open(args.prompted, encoding="utf-8") as fh:
            for line_no, line in corpus_mod._iter_lines(fh):
                obj = corpus_mod._parse_object(line, line_no)
                query_id = obj.get("id")
                raw_label = obj.get("label")
                if not isinstance(query_id, str) or not isinstance(raw_label, str):
                    raise corpus_mod.MalformedRecord(
                        line_no, "prompted record needs string fields 'id' and 'label'")
                vec = corpus_mod._parse_vector(obj, line_no, None)
                by_query.setdefault(query_id, []).append(
                    (scheme.label_from_name(raw_label).group, vec))
        if not by_query:
            raise ConfigError(f"prompted-embedding file {args.prompted} is empty")
        with open(out_path, "w", encoding="utf-8") as fh:
            for query_id in sorted(by_query):
                prompted = attributes.PromptedQueryEmbeddings(
                    query_id, scheme, tuple(by_query[query_id]))
                pset = attributes.zero_shot_prompt_predict(images, prompted)
                attributes.dump_predictions(pset, fh, query_id=query_id)
    else:  # classifier
        if not args.train_labels:
            raise ConfigError("--variant classifier requires --train-labels")
        scoped = _load_predictions(args.train_labels, scheme)
        if None not in scoped:
            raise ConfigError("training-label file has no global records")
        train_labels = scoped[None].labels()
        index = {im.id: im for im in images}
        train = []
        for image_id, label in sorted(train_labels.items()):
            image = index.get(image_id)
            if image is None:
                raise ConfigError(f"training label references unknown image {image_id!r}")
            train.append((image.embedding, label))
        clf = attributes.train_softmax_classifier(
            train, scheme, lr=args.lr, epochs=args.epochs, seed=args.seed)
        pset = attributes.classifier_predict(clf, images)
        with open(out_path, "w", encoding="utf-8") as fh:
            attributes.dump_predictions(pset, fh)
        print(f"classifier trained: lr={args.lr} epochs={args.epochs} "
              f"final_loss={clf.training_meta.final_loss:.6f}")

    _write_manifest(Path(f"{out_path}.manifest.json"), "predict", args)
    print(f"wrote predictions for {len(images)} images to {out_path}")
    return 0


# ---------------------------------------------------------------- analyze

def cmd_analyze_binomial(args) -> int:
    ks = _parse_int_list(args.k_grid, "--k-grid") if args.k_grid else [args.k]
    alphas = (_parse_float_list(args.alpha_grid, "--alpha-grid")
              if args.alpha_grid else [args.alpha])
    rows = []
    for k in ks:
        if k < 1:
            raise ConfigError("k values must be >= 1")
        for alpha in alphas:
            if not 0.0 <= alpha <= 1.0:
                raise ConfigError(f"alpha must be in [0, 1], got {alpha}")
            rows.append({"k": k, "alpha": alpha,
                         "expected_bias": analysis.expected_bias_binomial(k, alpha)})
    out_path = Path(args.out)
    _write_csv(out_path, ["k", "alpha", "expected_bias"],
               [[r["k"], repr(r["alpha"]), repr(r["expected_bias"])] for r in rows])
    if not args.no_figures:
        from . import plotting

        plotting.save_binomial_figure(rows, f"{out_path.with_suffix('')}.png")
    _write_manifest(Path(f"{out_path}.manifest.json"), "analyze binomial", args)
    for r in rows:
        print(f"k={r['k']} alpha={r['alpha']:g} expected_bias={r['expected_bias']:.6f}")
    return 0


def cmd_analyze_quantile(args) -> int:
    crp = _load_corpus(args)
    labels = _evaluation_labels(args, crp)
    if args.bins < 1:
        raise ConfigError("--bins must be >= 1")

    curves: dict[str, list[dict]] = {}
    fits: dict[str, analysis.RegressionFit] = {}
    labeled = [im for im in crp.images if im.id in labels]
    if not labeled:
        raise ConfigError("no labeled images to bin")

    def run(query):
        scores = similarity.score_images(query, labeled)
        scored = [(similarity.ScoredImage(im.id, float(s)), labels[im.id])
                  for im, s in zip(labeled, scores)]
        return query.id, analysis.quantile_bias_curve(scored, args.bins)

    for query_id, curve in _map_queries(run, sorted(crp.queries, key=lambda q: q.id)):
        rows = [{"quantile_low": b.quantile_low, "quantile_high": b.quantile_high,
                 "mean_similarity": b.mean_similarity, "bias": b.bias, "count": b.count}
                for b in curve.bins]
        curves[query_id] = rows
        points = [(b.mean_similarity, b.bias) for b in curve.bins]
        try:
            fits[query_id] = analysis.ols_fit(points)
        except analysis.DegenerateX:
            pass

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(
        Path(f"{prefix}.csv"),
        ["query_id", "quantile_low", "quantile_high", "mean_similarity", "bias", "count"],
        [[qid, repr(r["quantile_low"]), repr(r["quantile_high"]),
          repr(r["mean_similarity"]), repr(r["bias"]), r["count"]]
         for qid in sorted(curves) for r in curves[qid]],
    )
    _write_csv(
        Path(f"{prefix}.fits.csv"),
        ["query_id", "slope", "intercept", "r_squared"],
        [[qid, repr(fit.slope), repr(fit.intercept), repr(fit.r_squared)]
         for qid, fit in sorted(fits.items())],
    )
    if not args.no_figures:
        from . import plotting

        plotting.save_quantile_figure(curves, fits, f"{prefix}.png")
    _write_manifest(Path(f"{prefix}.manifest.json"), "analyze quantile", args)
    for qid, fit in sorted(fits.items()):
        print(f"{qid}: slope={fit.slope:+.6f} intercept={fit.intercept:.6f} r2={fit.r_squared:.4f}")
    return 0


def cmd_analyze_tradeoff(args) -> int:
    crp = _load_corpus(args)
    if args.k < 1:
        raise ConfigError("--k must be >= 1")
    if args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    p_grid = _parse_float_list(args.p_grid, "--p-grid")
    if any(not 0.0 <= p <= 1.0 for p in p_grid):
        raise ConfigError("--p-grid values must be in [0, 1]")

    images = list(crp.images)
    if args.predictions:
        scoped = _load_predictions(args.predictions, crp.scheme)
    else:
        if not all(im.label is not None for im in images):
            raise ConfigError("PBM requires predictions or labels")
        scoped = {None: attributes.ground_truth_predictions(images, crp.scheme)}
    gt_labels = _ground_truth_or_fail(crp)
    queries = sorted(crp.queries, key=lambda q: q.id)

    rows = []
    for p in p_grid:
        abs_vals, recall_vals = [], []
        for rep in range(args.reps):
            config = selection.SelectionConfig(
                k=args.k, fair_probability=p, seed=args.seed + rep,
                odd_pick_policy=selection.OddPickPolicy(args.odd_pick))

            def run(query):
                preds = _scoped_predictions(scoped, query.id, crp.scheme)
                return selection.pbm_select_tradeoff(query, images, preds, config)

            bags = _map_queries(run, queries)
            abs_vals.append(metrics.abs_bias_at_k(bags, gt_labels))
            recall_vals.append(metrics.recall_at_k(bags, queries))
        abs_arr = np.asarray(abs_vals)
        rec_arr = np.asarray(recall_vals)
        rows.append({
            "fair_probability": p,
            "reps": args.reps,
            "abs_bias_mean": float(abs_arr.mean()),
            "abs_bias_se": float(abs_arr.std(ddof=1) / np.sqrt(len(abs_arr))) if len(abs_arr) > 1 else 0.0,
            "recall_mean": float(rec_arr.mean()),
            "recall_se": float(rec_arr.std(ddof=1) / np.sqrt(len(rec_arr))) if len(rec_arr) > 1 else 0.0,
        })

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(
        Path(f"{prefix}.csv"),
        ["fair_probability", "reps", "abs_bias_mean", "abs_bias_se", "recall_mean", "recall_se"],
        [[repr(r["fair_probability"]), r["reps"], repr(r["abs_bias_mean"]),
          repr(r["abs_bias_se"]), repr(r["recall_mean"]), repr(r["recall_se"])] for r in rows],
    )
    if not args.no_figures:
        from . import plotting

        plotting.save_tradeoff_figure(rows, f"{prefix}.png")
    _write_manifest(Path(f"{prefix}.manifest.json"), "analyze tradeoff", args)
    for r in rows:
        print(f"p={r['fair_probability']:g} abs_bias={r['abs_bias_mean']:.4f}"
              f"(se {r['abs_bias_se']:.4f}) recall={r['recall_mean']:.2f}%"
              f"(se {r['recall_se']:.2f})")
    return 0


def cmd_analyze_spearman(args) -> int:
    crp = _load_corpus(args)
    labels = _evaluation_labels(args, crp)
    if args.k < 1:
        raise ConfigError("--k must be >= 1")
    labeled = [im for im in crp.images
               if im.id in labels and not labels[im.id].is_neutral]
    if len(labeled) < 2:
        raise ConfigError("need at least 2 non-neutral labeled images")
    images = list(crp.images)

    def run(query):
        scores = similarity.score_images(query, labeled)
        weights = [float(labels[im.id].signed_weight) for im in labeled]
        rho = analysis.spearman([float(s) for s in scores], weights)
        bag = similarity.rank_top_k(query, images, args.k)
        return {"query_id": query.id, "spearman": rho,
                "topk_bag_bias": metrics.bag_bias(bag, labels)}

    rows = _map_queries(run, sorted(crp.queries, key=lambda q: q.id))

    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(
        Path(f"{prefix}.csv"),
        ["query_id", "spearman", "topk_bag_bias"],
        [[r["query_id"], repr(r["spearman"]), repr(r["topk_bag_bias"])] for r in rows],
    )
    if not args.no_figures:
        from . import plotting

        plotting.save_spearman_figure(rows, f"{prefix}.png")
    _write_manifest(Path(f"{prefix}.manifest.json"), "analyze spearman", args)
    for r in rows:
        print(f"{r['query_id']}: spearman={r['spearman']:+.4f} "
              f"topk_bag_bias={r['topk_bag_bias']:.4f}")
    return 0


# ---------------------------------------------------------------- synth

def cmd_synth(args) -> int:
    spec = analysis.SyntheticSpec(
        n_images=args.n,
        d=args.d,
        alpha=args.alpha,
        neutral_fraction=args.neutral_fraction,
        model_bias=args.model_bias,
        n_queries=args.queries,
        seed=args.seed,
        relevant_size=args.relevant_size,
        noise_scale=args.noise_scale,
    )
    crp = analysis.generate_synthetic_corpus(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "images.jsonl", "w", encoding="utf-8") as fh:
        corpus_mod.dump_image_records(crp.images, fh)
    with open(out_dir / "queries.jsonl", "w", encoding="utf-8") as fh:
        corpus_mod.dump_query_records(crp.queries, fh)
    with open(out_dir / "scheme.json", "w", encoding="utf-8") as fh:
        corpus_mod.dump_scheme(crp.scheme, fh)
    prototypes = attributes.prototype_class_embeddings(crp.images, crp.scheme)
    proto_records = [
        corpus_mod.ImageRecord(f"class-{corpus_mod.AttributeLabel(key, crp.scheme).name}", vec,
                               corpus_mod.AttributeLabel(key, crp.scheme))
        for key, vec in prototypes.vectors
    ]
    with open(out_dir / "classes.jsonl", "w", encoding="utf-8") as fh:
        corpus_mod.dump_image_records(proto_records, fh)
    _write_manifest(out_dir / "manifest.json", "synth", args)

    alpha = analysis.realized_alpha(crp)
    print(f"wrote corpus to {out_dir} (N={args.n}, d={args.d}, queries={args.queries})")
    print(f"realized alpha: {'n/a' if alpha is None else f'{alpha:.4f}'}")
    try:
        rho = analysis.score_attribute_spearman(crp)
        print(f"spearman(score, group): {rho:+.4f}")
    except FairsiftError:
        print("spearman(score, group): n/a")
    return 0


# ---------------------------------------------------------------- validate

def cmd_validate(args) -> int:
    crp = _load_corpus(args)
    report = corpus_mod.validate_corpus(crp, k=args.k)
    print(f"corpus ok: {len(crp.images)} images, {len(crp.queries)} queries, d={crp.d}")
    for line in report.summary_lines():
        print(line)
    return 0


# ---------------------------------------------------------------- parser

def _add_corpus_flags(parser, queries_required=True):
    parser.add_argument("--images", required=True, help="image record file (JSONL)")
    parser.add_argument("--queries", required=queries_required, help="query record file (JSONL)")
    parser.add_argument("--scheme", required=True, help="attribute scheme file (JSON)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairsift", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"fairsift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retrieve", help="rank candidates for every query")
    _add_corpus_flags(p)
    p.add_argument("--method", required=True, choices=["topk", "pbm", "pbm-tradeoff", "random"])
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--predictions", help="attribute prediction file (JSONL)")
    p.add_argument("--fair-prob", type=float, default=1.0, dest="fair_prob")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--odd-pick", choices=["best-score", "random-group"],
                   default="best-score", dest="odd_pick")
    p.add_argument("--restrict-to-relevant", action="store_true", dest="restrict_to_relevant",
                   help="random method draws from each query's relevant set")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="score a bags file against a corpus")
    _add_corpus_flags(p)
    p.add_argument("--bags", required=True, help="retrieval output file from `retrieve`")
    p.add_argument("--k", type=int, default=None,
                   help="bag size (defaults to the bags file's manifest)")
    p.add_argument("--labels", default="ground_truth",
                   help="'ground_truth' or a prediction file used as labels")
    p.add_argument("--method", default=None, help="method name for the report header")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predict attributes for every image")
    p.add_argument("--images", required=True)
    p.add_argument("--scheme", required=True)
    p.add_argument("--variant", required=True,
                   choices=["zero-shot-embed", "zero-shot-prompt", "classifier"])
    p.add_argument("--classes", help="class-embedding file (zero-shot-embed)")
    p.add_argument("--prompted", help="prompted query-embedding file (zero-shot-prompt)")
    p.add_argument("--train-labels", dest="train_labels",
                   help="training label file (classifier)")
    p.add_argument("--lr", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    analyze = sub.add_parser("analyze", help="statistical analyses")
    asub = analyze.add_subparsers(dest="analysis", required=True)

    p = asub.add_parser("binomial", help="expected bias under attribute-independent scores")
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--k-grid", dest="k_grid", help="comma-separated k values")
    p.add_argument("--alpha-grid", dest="alpha_grid", help="comma-separated alpha values")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze_binomial)

    p = asub.add_parser("quantile", help="bias across similarity quantiles, with OLS fits")
    _add_corpus_flags(p)
    p.add_argument("--bins", type=int, default=100)
    p.add_argument("--labels", default="ground_truth")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_analyze_quantile)

    p = asub.add_parser("tradeoff", help="bias/recall frontier over the fair probability")
    _add_corpus_flags(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--p-grid", required=True, dest="p_grid")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predictions")
    p.add_argument("--odd-pick", choices=["best-score", "random-group"],
                   default="best-score", dest="odd_pick")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_analyze_tradeoff)

    p = asub.add_parser("spearman", help="per-query score/group rank correlation")
    _add_corpus_flags(p)
    p.add_argument("--k", type=int, default=100)
    p.add_argument("--labels", default="ground_truth")
    p.add_argument("--no-figures", action="store_true", dest="no_figures")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_analyze_spearman)

    p = sub.add_parser("synth", help="generate a seeded synthetic corpus")
    p.add_argument("--n", type=int, required=True, help="number of images")
    p.add_argument("--d", type=int, required=True, help="embedding dimension")
    p.add_argument("--alpha", type=float, required=True, help="group-0 ratio among labeled")
    p.add_argument("--neutral-fraction", type=float, default=0.0, dest="neutral_fraction")
    p.add_argument("--model-bias", type=float, default=0.0, dest="model_bias")
    p.add_argument("--queries", type=int, default=8)
    p.add_argument("--relevant-size", type=int, default=100, dest="relevant_size")
    p.add_argument("--noise-scale", type=float, default=0.25, dest="noise_scale")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True, dest="out_dir")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="parse and cross-check corpus files")
    _add_corpus_flags(p)
    p.add_argument("--k", type=int, default=100)
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _CONFIG_ERRORS as exc:
        return _fail(3, str(exc))
    except _DATA_ERRORS as exc:
        return _fail(2, str(exc))
    except FileNotFoundError as exc:
        return _fail(2, f"{exc.filename}: file not found")
    except OSError as exc:
        return _fail(2, str(exc))
    except FairsiftError as exc:
        return _fail(2, str(exc))


if __name__ == "__main__":
    sys.exit(main())
