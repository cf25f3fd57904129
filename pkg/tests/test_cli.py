import json
import subprocess
import sys

import numpy as np
import pytest

from hiersparse.cli import format_model, main, parse_model
from hiersparse.data import SplitSpec, SynthConfig, filter_cohort, read_dataset, serialize_dataset, synth_generate
from hiersparse.experiment import PenaltyFactory, repeated_splits
from hiersparse.hierarchy import balanced_tree, read_hierarchy, serialize_hierarchy, tree_groups
from hiersparse.solver import SolverConfig

FAST = ["--max-iters", "300", "--tol", "1e-6"]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    code = main(["synth", "--branching", "2,2,4", "--rows", "240", "--density", "4",
                 "--coef", "1.5", "--seed", "5", "--out-dir", str(out)])
    assert code == 0
    return out


def inputs(d):
    return ["--data", str(d / "data.txt"), "--hierarchy", str(d / "hierarchy.tsv")]


def test_synth_outputs_match_generator(synth_dir):
    tree = balanced_tree([2, 2, 4])
    assert read_hierarchy(synth_dir / "hierarchy.tsv") == tree
    active = sorted(n.id for n in tree.nodes if tree.level(n.id) == 1)
    cfg = SynthConfig(tree, (active[0], active[2]), 1.5, 4.0, 240, 0.0, 0.05, seed=5)
    ds, beta = synth_generate(cfg)
    assert (synth_dir / "data.txt").read_text() == serialize_dataset(ds)
    got, manifest = parse_model((synth_dir / "true_beta.txt").read_text())
    assert np.array_equal(got, beta)
    assert manifest["active_subtrees"] == [active[0], active[2]]


def test_synth_explicit_active_and_root(tmp_path):
    assert main(["synth", "--branching", "3,2", "--active", "n", "--rows", "20",
                 "--density", "2", "--out-dir", str(tmp_path)]) == 0
    beta, _ = parse_model((tmp_path / "true_beta.txt").read_text())
    assert np.count_nonzero(beta[1:]) == 6


def test_model_roundtrip():
    beta = np.array([0.125, 0.0, -1.0 / 3.0, 0.0, 2.5])
    back, manifest = parse_model(format_model(beta, {"k": 1}))
    assert np.array_equal(back, beta) and manifest == {"k": 1}


class TestTrain:
    def test_huge_lambda_null_model(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "m.txt"
        code = main(["train", *inputs(synth_dir), "--penalty", "tsgl", "--lambda", "1e9",
                     "--out", str(out)])
        assert code == 0
        assert "nonzero_count=0" in capsys.readouterr().out
        beta, manifest = parse_model(out.read_text())
        assert not beta[1:].any()
        assert manifest["penalty"]["kind"] == "tsgl"

    def test_missing_hierarchy(self, synth_dir, tmp_path, capsys):
        code = main(["train", "--data", str(synth_dir / "data.txt"), "--penalty", "tsgl",
                     "--lambda", "1", "--out", str(tmp_path / "m.txt")])
        assert code == 1
        assert "--hierarchy" in capsys.readouterr().err

    def test_bad_flag_exit_1(self, synth_dir, capsys):
        assert main(["train", *inputs(synth_dir), "--penalty", "bogus", "--lambda", "1",
                     "--out", "-"]) == 1

    def test_bad_data_exit_1(self, tmp_path, capsys):
        (tmp_path / "d.txt").write_text("3 0:1\n")
        code = main(["train", "--data", str(tmp_path / "d.txt"), "--penalty", "l1",
                     "--lambda", "1", "--out", str(tmp_path / "m.txt")])
        assert code == 1
        assert "non-binary label" in capsys.readouterr().err

    def test_numerical_failure_exit_2(self, tmp_path, capsys):
        (tmp_path / "d.txt").write_text("1 0:1e308\n0 0:-1e308\n1 0:1e308\n")
        code = main(["train", "--data", str(tmp_path / "d.txt"), "--penalty", "none",
                     "--lambda", "0", "--out", str(tmp_path / "m.txt")])
        assert code == 2
        assert "numerical failure" in capsys.readouterr().err

    def test_byte_identical(self, synth_dir, tmp_path, capsys):
        paths = [tmp_path / "a.txt", tmp_path / "b.txt"]
        for p in paths:
            assert main(["train", *inputs(synth_dir), "--penalty", "sgl", "--lambda", "3",
                         "--alpha", "0.3", "--weights", "sqrt", "--out", str(p)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_report(self, synth_dir, tmp_path, capsys):
        model = tmp_path / "m.txt"
        main(["train", *inputs(synth_dir), "--penalty", "tsgl", "--lambda", "2", "--out", str(model)])
        capsys.readouterr()
        assert main(["report", "--model", str(model), "--hierarchy",
                     str(synth_dir / "hierarchy.tsv"), "--format", "json", "--top-k", "5"]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert len(rep["top_coefficients"]) <= 5
        assert [s["level"] for s in rep["sparsity_by_level"]] == [0, 1, 2, 3]
        assert main(["report", "--model", str(model), "--out", str(tmp_path / "r.txt")]) == 0
        assert "non-zero coefficients" in (tmp_path / "r.txt").read_text()


class TestExperiment:
    def test_four_penalties_one_repeat(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "s.json"
        code = main(["experiment", *inputs(synth_dir), "--penalty", "l2,l1,sgl,tsgl",
                     "--repeats", "1", "--n-lambdas", "3", "--folds", "3", *FAST, "--out", str(out)])
        assert code == 0
        table = capsys.readouterr().out.splitlines()
        assert len(table) == 2 + 4
        doc = json.loads(out.read_text())
        assert [s["kind"] for s in doc["summaries"]] == ["l2", "l1", "sgl", "tsgl"]
        assert all(s["f1_std"] == 0.0 for s in doc["summaries"])
        assert doc["manifest"]["protocol"]["repeats"] == 1

    def test_defaults_follow_protocol(self):
        from hiersparse.cli import build_parser

        args = build_parser().parse_args(["experiment", "--data", "x"])
        assert (args.repeats, args.train_frac, args.folds) == (10, 0.6, 5)

    def test_byte_identical(self, synth_dir, tmp_path, capsys):
        outs = [tmp_path / "a.json", tmp_path / "b.json"]
        for p in outs:
            assert main(["experiment", *inputs(synth_dir), "--penalty", "l1,tsgl", "--repeats", "2",
                         "--n-lambdas", "3", "--folds", "3", *FAST, "--seed", "9", "--out", str(p)]) == 0
        assert outs[0].read_bytes() == outs[1].read_bytes()

    def test_missing_hierarchy(self, synth_dir, capsys):
        code = main(["experiment", "--data", str(synth_dir / "data.txt"), "--penalty", "l1,tsgl"])
        assert code == 1
        assert "--hierarchy" in capsys.readouterr().err

    def test_unknown_kind(self, synth_dir, capsys):
        assert main(["experiment", *inputs(synth_dir), "--penalty", "l1,lasso"]) == 1


class TestCohort:
    def run(self, synth_dir, tmp_path, name, *extra):
        out = tmp_path / name
        code = main(["cohort", *inputs(synth_dir), "--penalty", "l1", "--repeats", "2",
                     "--lambdas", "4,1,0.25", "--folds", "3", *FAST, "--out", str(out), *extra])
        return code, out

    def test_root_equals_full(self, tmp_path, capsys):
        # Every row carries at least one code.
        tree = balanced_tree([2, 3])
        rng = np.random.default_rng(0)
        lines = []
        for _ in range(60):
            cols = sorted(set(rng.choice(6, size=int(rng.integers(1, 4))).tolist()))
            lines.append(f"{int(rng.integers(0, 2))} " + " ".join(f"{c}:1" for c in cols))
        (tmp_path / "data.txt").write_text("\n".join(lines) + "\n")
        (tmp_path / "hierarchy.tsv").write_text(serialize_hierarchy(tree))
        common = [*inputs(tmp_path), "--penalty", "l1,tsgl", "--repeats", "2", "--lambdas", "3,1",
                  "--folds", "3", *FAST]
        assert main(["cohort", *common, "--cohort-node", "n", "--out", str(tmp_path / "c.json")]) == 0
        assert main(["experiment", *common, "--out", str(tmp_path / "e.json")]) == 0
        c = json.loads((tmp_path / "c.json").read_text())
        e = json.loads((tmp_path / "e.json").read_text())
        assert c["summaries"] == e["summaries"]

    def test_empty_cohort(self, tmp_path, capsys):
        (tmp_path / "data.txt").write_text("1 0:1\n0 1:1\n")
        (tmp_path / "hierarchy.tsv").write_text(serialize_hierarchy(balanced_tree([3])))
        code = main(["cohort", *inputs(tmp_path), "--penalty", "l1", "--cohort-columns", "2"])
        assert code == 1
        assert "0 rows" in capsys.readouterr().err

    def test_subset_matches_filter(self, synth_dir, tmp_path, capsys):
        code, out = self.run(synth_dir, tmp_path, "c.json", "--cohort-node", "n.0")
        assert code == 0
        doc = json.loads(out.read_text())
        tree = read_hierarchy(synth_dir / "hierarchy.tsv")
        ds = read_dataset(synth_dir / "data.txt", tree.n_leaves + 1)
        sub = filter_cohort(ds, tree.descendant_columns("n.0"))
        assert doc["manifest"]["cohort"]["rows"] == sub.n_rows < ds.n_rows
        expect = repeated_splits(sub, PenaltyFactory("l1"), SolverConfig(300, 1e-6), repeats=2,
                                 split=SplitSpec(0.6, 0), lambdas=[4, 1, 0.25], n_folds=3)
        assert doc["summaries"][0] == json.loads(json.dumps(expect.to_dict()))

    def test_needs_selector(self, synth_dir, capsys):
        assert main(["cohort", *inputs(synth_dir), "--penalty", "l1"]) == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "hiersparse", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("hiersparse ")
