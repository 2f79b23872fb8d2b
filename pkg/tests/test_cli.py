import csv
import json
import shutil

import pytest

from deteval.cli import main


def run_cli(*argv):
    return main([str(a) for a in argv])


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestTile:
    def test_field_fixture(self, fixtures_dir, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "tile",
            "--ground-truth-dir", fixtures_dir / "tiling",
            "--image-sizes-csv", fixtures_dir / "tiling" / "image_sizes.csv",
        )
        assert code == 0
        rows = _read_csv(out / "tiles_manifest.csv")
        assert rows[0] == ["tile_id", "src_image", "x0", "y0", "w", "h"]
        assert len(rows) - 1 == 16
        xs = {int(r[2]) for r in rows[1:]}
        ys = {int(r[3]) for r in rows[1:]}
        assert xs == {0, 416, 832, 1184} and ys == {0, 416, 832, 884}
        discarded = (out / "discarded_tiles.txt").read_text().splitlines()
        kept = sorted(p.stem for p in (out / "tiles").glob("*.txt"))
        assert len(discarded) == 14 and len(kept) == 2
        assert (out / "run_manifest.json").is_file()

    def test_tile_equal_to_image_is_passthrough(self, fixtures_dir, tmp_path):
        src = tmp_path / "annot"
        src.mkdir()
        (src / "a.txt").write_text("0 0.500000 0.500000 0.200000 0.200000\n")
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "tile",
            "--ground-truth-dir", src,
            "--tile-size", "416x416",
            "--image-size", "416x416",
        )
        assert code == 0
        rows = _read_csv(out / "tiles_manifest.csv")
        assert len(rows) - 1 == 1
        tile_file = next((out / "tiles").glob("*.txt"))
        assert tile_file.read_text() == "0 0.500000 0.500000 0.200000 0.200000\n"

    def test_empty_annotation_dir_exits_2(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        code = run_cli(
            "--output-dir", tmp_path / "out", "tile",
            "--ground-truth-dir", empty,
            "--image-size", "416x416",
        )
        assert code == 2
        err = capsys.readouterr().err
        assert json.loads(err.strip())["error"] == "CliError"

    def test_missing_dimension_source_exits_2(self, fixtures_dir, tmp_path):
        assert run_cli(
            "--output-dir", tmp_path / "out", "tile",
            "--ground-truth-dir", fixtures_dir / "tiling",
        ) == 2

    def test_raster_adapter_reads_sizes_and_writes_crops(self, tmp_path):
        Image = pytest.importorskip("PIL.Image")
        images = tmp_path / "images"
        annots = tmp_path / "annots"
        images.mkdir(), annots.mkdir()
        Image.new("RGB", (832, 832), (30, 120, 30)).save(images / "plot.png")
        (annots / "plot.txt").write_text("0 0.250000 0.250000 0.100000 0.100000\n")
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "tile",
            "--ground-truth-dir", annots,
            "--images-dir", images,
            "--tile-size", "416x416",
        )
        assert code == 0
        rows = _read_csv(out / "tiles_manifest.csv")
        assert len(rows) - 1 == 4  # sizes came from the raster itself
        crops = sorted((out / "tiles").glob("*.png"))
        assert len(crops) == 1  # only the populated tile is cropped
        with Image.open(crops[0]) as crop:
            assert crop.size == (416, 416)


class TestAugment:
    def test_deterministic_outputs(self, fixtures_dir, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            code = run_cli(
                "--output-dir", out, "--seed", "11", "augment",
                "--ground-truth-dir", fixtures_dir / "detection" / "truth",
                "--samples", "4",
            )
            assert code == 0
        files_a = sorted(p.name for p in (out_a / "augmented").glob("*.txt"))
        files_b = sorted(p.name for p in (out_b / "augmented").glob("*.txt"))
        assert files_a == files_b and len(files_a) == 8
        for name in files_a:
            assert (out_a / "augmented" / name).read_bytes() == (
                out_b / "augmented" / name
            ).read_bytes()

    def test_seed_changes_outputs(self, fixtures_dir, tmp_path):
        outs = {}
        for seed in (1, 2):
            out = tmp_path / f"s{seed}"
            run_cli(
                "--output-dir", out, "--seed", str(seed), "augment",
                "--ground-truth-dir", fixtures_dir / "detection" / "truth",
                "--samples", "6",
            )
            outs[seed] = b"".join(
                p.read_bytes() for p in sorted((out / "augmented").glob("*.txt"))
            )
        assert outs[1] != outs[2]


class TestSplit:
    def test_allocation_and_manifest(self, tmp_path):
        ids_file = tmp_path / "ids.txt"
        ids_file.write_text("".join(f"img{k:04d}\n" for k in range(141)))
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "--seed", "5", "split",
            "--ids-file", ids_file, "--ratio", "15:3:2",
        )
        assert code == 0
        rows = _read_csv(out / "split_manifest.csv")[1:]
        counts = {}
        for _, partition in rows:
            counts[partition] = counts.get(partition, 0) + 1
        assert counts == {"train": 106, "val": 21, "test": 14}

    def test_sampling_before_split(self, tmp_path):
        ids_file = tmp_path / "ids.txt"
        ids_file.write_text("".join(f"img{k:04d}\n" for k in range(1410)))
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "--seed", "3", "split",
            "--ids-file", ids_file, "--ratio", "15:3:2", "--sample-count", "141",
        )
        assert code == 0
        rows = _read_csv(out / "split_manifest.csv")[1:]
        assert len(rows) == 141

    def test_too_few_ids_exits_2(self, tmp_path):
        ids_file = tmp_path / "ids.txt"
        ids_file.write_text("a\nb\n")
        assert run_cli("--output-dir", tmp_path / "o", "split", "--ids-file", ids_file) == 2


class TestEvaluate:
    def _run(self, fixtures_dir, out, *extra):
        return run_cli(
            "--output-dir", out, "evaluate",
            "--ground-truth-dir", fixtures_dir / "detection" / "truth",
            "--predictions-dir", fixtures_dir / "detection" / "preds",
            "--class-registry", fixtures_dir / "detection" / "classes.txt",
            *extra,
        )

    def test_fixture_report(self, fixtures_dir, tmp_path):
        out = tmp_path / "out"
        assert self._run(fixtures_dir, out) == 0
        doc = json.loads((out / "evaluation.json").read_text())
        assert doc["map50"] == pytest.approx(17 / 24, abs=1e-12)
        assert doc["per_class"]["wb"]["ap"]["value"] == pytest.approx(11 / 12, abs=1e-12)
        assert doc["per_class"]["bb"]["accuracy"]["value"] == pytest.approx(1 / 3, abs=1e-12)
        assert "true negatives" in doc["conventions"]["true_negatives"]
        assert (out / "pr_curve_wb.csv").is_file()
        assert (out / "pr_curve_bb.csv").is_file()
        curve = _read_csv(out / "pr_curve_wb.csv")
        assert curve[0] == ["threshold", "precision", "recall"]
        assert len(curve) - 1 == 4

    def test_parse_error_names_file_and_line(self, fixtures_dir, tmp_path, capsys):
        truth = tmp_path / "truth"
        truth.mkdir()
        (truth / "img1.txt").write_text("0 0.5 0.5 0.1 0.2\n0 0.5 0.5 1.9 0.2\n")
        code = run_cli(
            "--output-dir", tmp_path / "out", "evaluate",
            "--ground-truth-dir", truth,
            "--predictions-dir", truth,
            "--class-registry", fixtures_dir / "detection" / "classes.txt",
        )
        assert code == 2
        message = json.loads(capsys.readouterr().err.strip())["message"]
        assert "img1.txt" in message and "line 2" in message

    def test_id_mismatch_without_flag_exits_2(self, fixtures_dir, tmp_path, capsys):
        preds = tmp_path / "preds"
        preds.mkdir()
        shutil.copy(
            fixtures_dir / "detection" / "preds" / "img1.txt", preds / "img1.txt"
        )
        code = run_cli(
            "--output-dir", tmp_path / "out", "evaluate",
            "--ground-truth-dir", fixtures_dir / "detection" / "truth",
            "--predictions-dir", preds,
            "--class-registry", fixtures_dir / "detection" / "classes.txt",
        )
        assert code == 2
        record = json.loads(capsys.readouterr().err.strip())
        assert record["context"]["missing_predictions"] == ["img2"]

    def test_allow_partial_treats_missing_as_empty(self, fixtures_dir, tmp_path):
        preds = tmp_path / "preds"
        preds.mkdir()
        shutil.copy(
            fixtures_dir / "detection" / "preds" / "img1.txt", preds / "img1.txt"
        )
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "--allow-partial", "evaluate",
            "--ground-truth-dir", fixtures_dir / "detection" / "truth",
            "--predictions-dir", preds,
            "--class-registry", fixtures_dir / "detection" / "classes.txt",
        )
        assert code == 0
        doc = json.loads((out / "evaluation.json").read_text())
        assert doc["missing_predictions"] == ["img2"]
        assert doc["image_count"] == 2

    def test_empty_predictions_all_fn(self, fixtures_dir, tmp_path):
        preds = tmp_path / "preds"
        preds.mkdir()
        for name in ("img1.txt", "img2.txt"):
            (preds / name).write_text("")
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "evaluate",
            "--ground-truth-dir", fixtures_dir / "detection" / "truth",
            "--predictions-dir", preds,
            "--class-registry", fixtures_dir / "detection" / "classes.txt",
        )
        assert code == 0
        doc = json.loads((out / "evaluation.json").read_text())
        assert doc["map50"] == 0.0
        for row in doc["per_class"].values():
            assert row["tp"] == 0 and row["fp"] == 0 and row["fn"] > 0
            assert row["ap"]["value"] == 0.0

    def test_predictions_equal_truths_all_ones(self, fixtures_dir, tmp_path):
        preds = tmp_path / "preds"
        preds.mkdir()
        for src in (fixtures_dir / "detection" / "truth").glob("*.txt"):
            lines = src.read_text().splitlines()
            (preds / src.name).write_text(
                "".join(f"{line} 1.000000\n" for line in lines if line.strip())
            )
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "evaluate",
            "--ground-truth-dir", fixtures_dir / "detection" / "truth",
            "--predictions-dir", preds,
            "--class-registry", fixtures_dir / "detection" / "classes.txt",
        )
        assert code == 0
        doc = json.loads((out / "evaluation.json").read_text())
        assert doc["map50"] == 1.0
        for row in doc["per_class"].values():
            for metric in ("ap", "precision", "recall", "f1", "accuracy"):
                assert row[metric]["value"] == 1.0

    def test_jobs_do_not_change_bytes(self, fixtures_dir, tmp_path):
        outputs = {}
        for jobs in (1, 8):
            out = tmp_path / f"j{jobs}"
            code = run_cli(
                "--output-dir", out, "--jobs", str(jobs), "evaluate",
                "--ground-truth-dir", fixtures_dir / "detection" / "truth",
                "--predictions-dir", fixtures_dir / "detection" / "preds",
                "--class-registry", fixtures_dir / "detection" / "classes.txt",
            )
            assert code == 0
            outputs[jobs] = {
                name: (out / name).read_bytes()
                for name in ("evaluation.json", "pr_curve_wb.csv", "pr_curve_bb.csv")
            }
        assert outputs[1] == outputs[8]


class TestStats:
    def test_height_fixture(self, fixtures_dir, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "stats",
            "--inputs", fixtures_dir / "stats" / "height_accuracy.csv",
        )
        assert code == 0
        doc = json.loads((out / "stats.json").read_text())
        entry = doc["responses"][0]
        assert entry["response"] == "height_accuracy"
        assert entry["effect"] == "stratum"
        assert entry["anova"]["df"] == [2, 27]
        assert entry["anova"]["f_ratio"] == pytest.approx(23.47, abs=0.01)
        assert entry["anova"]["prob_gt_f"] < 1e-4
        assert len(entry["shapiro_wilk"]) == 3
        assert len(entry["pairwise_t"]) == 3
        rows = _read_csv(out / "stats.csv")
        assert rows[0] == ["response", "effect", "F_ratio", "prob_gt_F"]

    def test_two_identical_groups(self, tmp_path):
        path = tmp_path / "resp.csv"
        path.write_text(
            "group,observation\n" +
            "".join(f"a,{v}\n" for v in (1, 2, 3, 4)) +
            "".join(f"b,{v}\n" for v in (1, 2, 3, 4))
        )
        out = tmp_path / "out"
        assert run_cli("--output-dir", out, "stats", "--inputs", path) == 0
        entry = json.loads((out / "stats.json").read_text())["responses"][0]
        assert entry["anova"]["f_ratio"] == pytest.approx(0.0, abs=1e-12)
        assert entry["anova"]["prob_gt_f"] == pytest.approx(1.0, abs=1e-12)

    def test_single_group_reports_error(self, tmp_path, capsys):
        path = tmp_path / "solo.csv"
        path.write_text("group,observation\nonly,1\nonly,2\n")
        out = tmp_path / "out"
        code = run_cli("--output-dir", out, "stats", "--inputs", path)
        assert code == 2
        entry = json.loads((out / "stats.json").read_text())["responses"][0]
        assert ">= 2 groups" in entry["error"]

    def test_jobs_do_not_change_bytes(self, fixtures_dir, tmp_path):
        extra = tmp_path / "second.csv"
        extra.write_text(
            "group,observation\n" +
            "".join(f"a,{v}\n" for v in (1.0, 2.0, 3.5, 2.2)) +
            "".join(f"b,{v}\n" for v in (4.0, 5.5, 6.1, 5.0))
        )
        outputs = {}
        for jobs in (1, 8):
            out = tmp_path / f"j{jobs}"
            code = run_cli(
                "--output-dir", out, "--jobs", str(jobs), "stats",
                "--inputs", fixtures_dir / "stats" / "height_accuracy.csv", extra,
            )
            assert code == 0
            outputs[jobs] = {
                name: (out / name).read_bytes() for name in ("stats.json", "stats.csv")
            }
        assert outputs[1] == outputs[8]


class TestDesirabilityCommand:
    def test_four_variant_ranking(self, fixtures_dir, tmp_path):
        out = tmp_path / "out"
        code = run_cli(
            "--output-dir", out, "desirability",
            "--profile", fixtures_dir / "desirability" / "profile.json",
            "--candidates", fixtures_dir / "desirability" / "candidates.csv",
        )
        assert code == 0
        rows = _read_csv(out / "desirability_ranking.csv")
        assert rows[0][:3] == ["rank", "label", "D"]
        assert rows[1][1] == "yolov5m"
        assert 0.90 <= float(rows[1][2]) <= 1.0
        assert rows[-1][1] == "yolov5x" and float(rows[-1][2]) == 0.0

    def test_missing_response_names_candidate(self, fixtures_dir, tmp_path, capsys):
        bad = tmp_path / "cands.csv"
        bad.write_text("label,response,value\nonly,map50,0.9\n")
        code = run_cli(
            "--output-dir", tmp_path / "out", "desirability",
            "--profile", fixtures_dir / "desirability" / "profile.json",
            "--candidates", bad,
        )
        assert code == 2
        record = json.loads(capsys.readouterr().err.strip())
        assert "only" in record["message"] and "accuracy_wb" in record["message"]


class TestReport:
    def _populate(self, fixtures_dir, out):
        run_cli(
            "--output-dir", out, "evaluate",
            "--ground-truth-dir", fixtures_dir / "detection" / "truth",
            "--predictions-dir", fixtures_dir / "detection" / "preds",
            "--class-registry", fixtures_dir / "detection" / "classes.txt",
        )
        run_cli(
            "--output-dir", out, "stats",
            "--inputs", fixtures_dir / "stats" / "height_accuracy.csv",
        )
        run_cli(
            "--output-dir", out, "desirability",
            "--profile", fixtures_dir / "desirability" / "profile.json",
            "--candidates", fixtures_dir / "desirability" / "candidates.csv",
        )

    def test_full_pipeline_sections_present(self, fixtures_dir, tmp_path):
        out = tmp_path / "out"
        self._populate(fixtures_dir, out)
        assert run_cli("--output-dir", out, "report") == 0
        doc = json.loads((out / "report.json").read_text())
        assert doc["sections"]["evaluation"] != "absent"
        assert doc["sections"]["stats"] != "absent"
        assert doc["sections"]["desirability"] != "absent"
        text = (out / "report.txt").read_text()
        assert "mAP@50" in text and "%" in text

    def test_partial_run_marks_absent(self, fixtures_dir, tmp_path):
        out = tmp_path / "out"
        run_cli(
            "--output-dir", out, "stats",
            "--inputs", fixtures_dir / "stats" / "height_accuracy.csv",
        )
        assert run_cli("--output-dir", out, "report") == 0
        doc = json.loads((out / "report.json").read_text())
        assert doc["sections"]["evaluation"] == "absent"
        assert doc["sections"]["stats"] != "absent"

    def test_rerun_is_byte_identical(self, fixtures_dir, tmp_path):
        out = tmp_path / "out"
        self._populate(fixtures_dir, out)
        run_cli("--output-dir", out, "report")
        first = (out / "report.json").read_bytes()
        run_cli("--output-dir", out, "report")
        assert (out / "report.json").read_bytes() == first


class TestManifest:
    def test_digests_stable_across_reruns(self, fixtures_dir, tmp_path):
        manifests = []
        for run in ("a", "b"):
            out = tmp_path / run
            run_cli(
                "--output-dir", out, "evaluate",
                "--ground-truth-dir", fixtures_dir / "detection" / "truth",
                "--predictions-dir", fixtures_dir / "detection" / "preds",
                "--class-registry", fixtures_dir / "detection" / "classes.txt",
            )
            manifests.append(json.loads((out / "run_manifest.json").read_text()))
        a, b = manifests
        a.pop("created_utc"), b.pop("created_utc")
        # config snapshots differ only in output_dir
        a["config"].pop("output_dir"), b["config"].pop("output_dir")
        assert a == b

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        config = tmp_path / "cfg.json"
        config.write_text('{"no_such_key": 1}')
        code = run_cli("--config", config, "report")
        assert code == 2
        assert "unknown config key" in capsys.readouterr().err
