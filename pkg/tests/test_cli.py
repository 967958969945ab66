import csv
import json
import os
import subprocess
import sys

import pytest

BASE = [sys.executable, "-m", "fairsift"]


def run_cli(*args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(BASE + [str(a) for a in args],
                          capture_output=True, text=True, env=env)


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    result = run_cli("synth", "--n", 400, "--d", 16, "--alpha", 0.65,
                     "--model-bias", 0.4, "--queries", 4, "--relevant-size", 40,
                     "--neutral-fraction", 0.1, "--seed", 5, "--out-dir", out)
    assert result.returncode == 0, result.stderr
    return out


def corpus_flags(corpus_dir):
    return ["--images", corpus_dir / "images.jsonl",
            "--queries", corpus_dir / "queries.jsonl",
            "--scheme", corpus_dir / "scheme.json"]


class TestSynth:
    def test_roundtrip_and_diagnostics(self, corpus_dir):
        assert (corpus_dir / "images.jsonl").exists()
        assert (corpus_dir / "classes.jsonl").exists()
        assert (corpus_dir / "manifest.json").exists()
        result = run_cli("validate", *corpus_flags(corpus_dir), "--k", 20)
        assert result.returncode == 0, result.stderr
        assert "corpus ok: 400 images" in result.stdout
        assert "alpha" in result.stdout

    def test_deterministic_files(self, tmp_path):
        outputs = []
        for name in ("a", "b"):
            out = tmp_path / name
            result = run_cli("synth", "--n", 60, "--d", 8, "--alpha", 0.5,
                             "--queries", 2, "--seed", 9, "--out-dir", out)
            assert result.returncode == 0, result.stderr
            outputs.append((out / "images.jsonl").read_bytes()
                           + (out / "queries.jsonl").read_bytes()
                           + (out / "classes.jsonl").read_bytes())
        assert outputs[0] == outputs[1]

    def test_invalid_alpha_exit_3(self, tmp_path):
        result = run_cli("synth", "--n", 10, "--d", 4, "--alpha", 1.5,
                         "--queries", 1, "--out-dir", tmp_path / "bad")
        assert result.returncode == 3


class TestRetrieve:
    def test_row_contract(self, corpus_dir, tmp_path):
        out = tmp_path / "bags.jsonl"
        result = run_cli("retrieve", *corpus_flags(corpus_dir),
                         "--method", "pbm", "--k", 50, "--out", out)
        assert result.returncode == 0, result.stderr
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 4 * 50
        by_query = {}
        for row in rows:
            assert set(row) == {"query_id", "rank", "image_id", "score", "label"}
            by_query.setdefault(row["query_id"], []).append(row["rank"])
        assert all(ranks == sorted(ranks) for ranks in by_query.values())
        assert (tmp_path / "bags.jsonl.manifest.json").exists()

    def test_tradeoff_deterministic(self, corpus_dir, tmp_path):
        contents = []
        for name in ("one.jsonl", "two.jsonl"):
            out = tmp_path / name
            result = run_cli("retrieve", *corpus_flags(corpus_dir),
                             "--method", "pbm-tradeoff", "--fair-prob", 0.5,
                             "--seed", 7, "--k", 30, "--out", out)
            assert result.returncode == 0, result.stderr
            contents.append(out.read_bytes())
        assert contents[0] == contents[1]

    def test_pbm_without_labels_exit_3(self, tmp_path):
        scheme = tmp_path / "scheme.json"
        scheme.write_text('{"name":"gender","groups":["male","female"],"allows_neutral":false}\n')
        images = tmp_path / "images.jsonl"
        images.write_text('{"id":"a","vec":[1,0]}\n{"id":"b","vec":[0,1]}\n')
        queries = tmp_path / "queries.jsonl"
        queries.write_text('{"id":"q","text":"t","vec":[1,0],"relevant":[]}\n')
        result = run_cli("retrieve", "--images", images, "--queries", queries,
                         "--scheme", scheme, "--method", "pbm", "--k", 2,
                         "--out", tmp_path / "bags.jsonl")
        assert result.returncode == 3
        assert "PBM requires predictions or labels" in result.stderr

    def test_missing_file_exit_2(self, corpus_dir, tmp_path):
        result = run_cli("retrieve", "--images", tmp_path / "nope.jsonl",
                         "--queries", corpus_dir / "queries.jsonl",
                         "--scheme", corpus_dir / "scheme.json",
                         "--method", "topk", "--k", 5, "--out", tmp_path / "x.jsonl")
        assert result.returncode == 2

    def test_thread_env_same_output(self, corpus_dir, tmp_path):
        outputs = []
        for name, threads in (("st.jsonl", "1"), ("mt.jsonl", "3")):
            out = tmp_path / name
            result = run_cli("retrieve", *corpus_flags(corpus_dir),
                             "--method", "pbm", "--k", 40, "--out", out,
                             env_extra={"FAIRSIFT_THREADS": threads})
            assert result.returncode == 0, result.stderr
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]

    def test_random_method(self, corpus_dir, tmp_path):
        out = tmp_path / "rand.jsonl"
        result = run_cli("retrieve", *corpus_flags(corpus_dir),
                         "--method", "random", "--k", 10, "--seed", 3,
                         "--restrict-to-relevant", "--out", out)
        assert result.returncode == 0, result.stderr
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 4 * 10


class TestEvaluate:
    def test_pbm_beats_topk(self, corpus_dir, tmp_path):
        values = {}
        for method in ("topk", "pbm"):
            bags = tmp_path / f"{method}.jsonl"
            result = run_cli("retrieve", *corpus_flags(corpus_dir),
                             "--method", method, "--k", 50, "--out", bags)
            assert result.returncode == 0, result.stderr
            prefix = tmp_path / f"eval_{method}"
            result = run_cli("evaluate", *corpus_flags(corpus_dir),
                             "--bags", bags, "--out-prefix", prefix)
            assert result.returncode == 0, result.stderr
            text = (tmp_path / f"eval_{method}.txt").read_text()
            for line in text.splitlines():
                if line.startswith("abs_bias_at_k:"):
                    values[method] = float(line.split(":")[1])
            assert (tmp_path / f"eval_{method}.csv").exists()
            assert (tmp_path / f"eval_{method}.png").stat().st_size > 1000
            assert (tmp_path / f"eval_{method}.manifest.json").exists()
        assert values["pbm"] < values["topk"]
        assert values["pbm"] == 0.0  # ground-truth labels, ample pools, even K

    def test_k_read_from_manifest(self, corpus_dir, tmp_path):
        bags = tmp_path / "bags.jsonl"
        run_cli("retrieve", *corpus_flags(corpus_dir), "--method", "topk",
                "--k", 20, "--out", bags)
        result = run_cli("evaluate", *corpus_flags(corpus_dir), "--bags", bags,
                         "--out-prefix", tmp_path / "ev", "--no-figures")
        assert result.returncode == 0, result.stderr
        assert "k: 20" in (tmp_path / "ev.txt").read_text()
        assert "method: topk" in (tmp_path / "ev.txt").read_text()

    def test_prediction_file_as_label_source(self, corpus_dir, tmp_path):
        pred = tmp_path / "pred.jsonl"
        result = run_cli("predict", "--images", corpus_dir / "images.jsonl",
                         "--scheme", corpus_dir / "scheme.json",
                         "--variant", "zero-shot-embed",
                         "--classes", corpus_dir / "classes.jsonl", "--out", pred)
        assert result.returncode == 0, result.stderr
        bags = tmp_path / "bags.jsonl"
        run_cli("retrieve", *corpus_flags(corpus_dir), "--method", "topk",
                "--k", 20, "--out", bags)
        result = run_cli("evaluate", *corpus_flags(corpus_dir), "--bags", bags,
                         "--labels", pred, "--out-prefix", tmp_path / "ev",
                         "--no-figures")
        assert result.returncode == 0, result.stderr
        assert "abs_bias_at_k" in (tmp_path / "ev.txt").read_text()

    def test_ground_truth_missing_exit_3(self, tmp_path):
        scheme = tmp_path / "scheme.json"
        scheme.write_text('{"name":"gender","groups":["male","female"],"allows_neutral":false}\n')
        images = tmp_path / "images.jsonl"
        images.write_text('{"id":"a","vec":[1,0]}\n')
        queries = tmp_path / "queries.jsonl"
        queries.write_text('{"id":"q","text":"t","vec":[1,0],"relevant":["a"]}\n')
        bags = tmp_path / "bags.jsonl"
        bags.write_text(json.dumps(
            {"query_id": "q", "rank": 1, "image_id": "a", "score": 1.0, "label": None}) + "\n")
        result = run_cli("evaluate", "--images", images, "--queries", queries,
                         "--scheme", scheme, "--bags", bags, "--k", 1,
                         "--labels", "ground_truth", "--out-prefix", tmp_path / "ev",
                         "--no-figures")
        assert result.returncode == 3


class TestPredict:
    def test_zero_shot_embed_total(self, corpus_dir, tmp_path):
        out = tmp_path / "pred.jsonl"
        result = run_cli("predict", "--images", corpus_dir / "images.jsonl",
                         "--scheme", corpus_dir / "scheme.json",
                         "--variant", "zero-shot-embed",
                         "--classes", corpus_dir / "classes.jsonl", "--out", out)
        assert result.returncode == 0, result.stderr
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 400
        assert all(0.0 <= row["confidence"] <= 1.0 for row in rows)

    def test_classifier_variant_logs_loss(self, corpus_dir, tmp_path):
        train = tmp_path / "train.jsonl"
        with open(corpus_dir / "images.jsonl") as fh:
            with open(train, "w") as out_fh:
                for i, line in enumerate(fh):
                    if i >= 200:
                        break
                    obj = json.loads(line)
                    if "label" in obj:
                        out_fh.write(json.dumps({"id": obj["id"], "label": obj["label"]}) + "\n")
        out = tmp_path / "pred.jsonl"
        result = run_cli("predict", "--images", corpus_dir / "images.jsonl",
                         "--scheme", corpus_dir / "scheme.json",
                         "--variant", "classifier", "--train-labels", train,
                         "--epochs", 50, "--lr", 0.5, "--out", out)
        assert result.returncode == 0, result.stderr
        assert "final_loss=" in result.stdout
        assert len(out.read_text().splitlines()) == 400

    def test_prompt_variant(self, corpus_dir, tmp_path):
        prompted = tmp_path / "prompted.jsonl"
        with open(corpus_dir / "classes.jsonl") as fh:
            class_rows = [json.loads(line) for line in fh]
        query_ids = ("q0000", "q0001", "q0002", "q0003")
        with open(prompted, "w") as fh:
            for query_id in query_ids:
                for row in class_rows:
                    fh.write(json.dumps(
                        {"id": query_id, "label": row["label"], "vec": row["vec"]}) + "\n")
        out = tmp_path / "pred.jsonl"
        result = run_cli("predict", "--images", corpus_dir / "images.jsonl",
                         "--scheme", corpus_dir / "scheme.json",
                         "--variant", "zero-shot-prompt", "--prompted", prompted,
                         "--out", out)
        assert result.returncode == 0, result.stderr
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 400 * len(query_ids)  # per query
        assert {row["query"] for row in rows} == set(query_ids)
        bags = tmp_path / "bags.jsonl"
        result = run_cli("retrieve", *corpus_flags(corpus_dir), "--method", "pbm",
                         "--predictions", out, "--k", 20, "--out", bags)
        assert result.returncode == 0, result.stderr

    def test_prompt_without_file_exit_3(self, corpus_dir, tmp_path):
        result = run_cli("predict", "--images", corpus_dir / "images.jsonl",
                         "--scheme", corpus_dir / "scheme.json",
                         "--variant", "zero-shot-prompt", "--out", tmp_path / "p.jsonl")
        assert result.returncode == 3


class TestAnalyze:
    def test_binomial_value(self, tmp_path):
        out = tmp_path / "binom.csv"
        result = run_cli("analyze", "binomial", "--k", 100, "--alpha", 0.5,
                         "--out", out, "--no-figures")
        assert result.returncode == 0, result.stderr
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 1
        assert float(rows[0]["expected_bias"]) == pytest.approx(0.0796, abs=0.0005)

    def test_binomial_grid_and_figure(self, tmp_path):
        out = tmp_path / "grid.csv"
        result = run_cli("analyze", "binomial", "--k-grid", "2,10,50",
                         "--alpha-grid", "0.5,0.69", "--out", out)
        assert result.returncode == 0, result.stderr
        with open(out) as fh:
            assert len(list(csv.DictReader(fh))) == 6
        assert (tmp_path / "grid.png").stat().st_size > 1000

    def test_tradeoff_monotone(self, corpus_dir, tmp_path):
        prefix = tmp_path / "tradeoff"
        result = run_cli("analyze", "tradeoff", *corpus_flags(corpus_dir),
                         "--k", 40, "--p-grid", "0,0.5,1", "--reps", 4,
                         "--seed", 1, "--out-prefix", prefix, "--no-figures")
        assert result.returncode == 0, result.stderr
        with open(f"{prefix}.csv") as fh:
            rows = list(csv.DictReader(fh))
        biases = [float(row["abs_bias_mean"]) for row in rows]
        assert biases == sorted(biases, reverse=True)
        assert biases[-1] == 0.0

    def test_quantile_outputs(self, corpus_dir, tmp_path):
        prefix = tmp_path / "quant"
        result = run_cli("analyze", "quantile", *corpus_flags(corpus_dir),
                         "--bins", 20, "--out-prefix", prefix)
        assert result.returncode == 0, result.stderr
        with open(f"{prefix}.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4 * 20
        with open(f"{prefix}.fits.csv") as fh:
            fits = list(csv.DictReader(fh))
        assert len(fits) == 4
        assert (tmp_path / "quant.png").stat().st_size > 1000

    def test_spearman_outputs(self, corpus_dir, tmp_path):
        prefix = tmp_path / "spear"
        result = run_cli("analyze", "spearman", *corpus_flags(corpus_dir),
                         "--k", 40, "--out-prefix", prefix, "--no-figures")
        assert result.returncode == 0, result.stderr
        with open(f"{prefix}.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 4
        # built with positive model bias, so scores correlate with group_a
        assert all(float(row["spearman"]) > 0.1 for row in rows)


def test_unknown_subcommand_exit_3():
    result = run_cli("frobnicate")
    assert result.returncode == 3
