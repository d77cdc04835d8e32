import csv
import json

import pytest

from segsketch.cli import main


def _generate(tmp_path, seed=0, extra=()):
    trace = str(tmp_path / f"trace{seed}.csv")
    truth = str(tmp_path / f"truth{seed}.csv")
    rc = main(
        [
            "generate",
            "--benign", "60",
            "--diverse", "3",
            "--attackers", "5",
            "--seed", str(seed),
            "--out-trace", trace,
            "--out-truth", truth,
            *extra,
        ]
    )
    assert rc == 0
    return trace, truth


def test_generate_writes_files_and_is_deterministic(tmp_path):
    trace_a, truth_a = _generate(tmp_path, seed=7)
    blob_a = open(trace_a, "rb").read()
    # Same flags and seed, fresh paths: byte-identical output.
    trace_b = str(tmp_path / "again.csv")
    truth_b = str(tmp_path / "again_truth.csv")
    rc = main(
        [
            "generate",
            "--benign", "60",
            "--diverse", "3",
            "--attackers", "5",
            "--seed", "7",
            "--out-trace", trace_b,
            "--out-truth", truth_b,
        ]
    )
    assert rc == 0
    assert open(trace_b, "rb").read() == blob_a
    assert open(truth_a, "rb").read().count(b"\n") == 60 + 3 + 5 + 1  # header


def test_generate_missing_required_flag_exits_nonzero(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["generate", "--out-trace", str(tmp_path / "t.csv")])
    assert err.value.code != 0


def test_unknown_detector_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["run", "--detector", "magic", "--trace", "x", "--truth", "y", "--out", "z"])
    assert err.value.code != 0


def test_run_writes_metrics_json(tmp_path):
    trace, truth = _generate(tmp_path)
    out = str(tmp_path / "metrics.json")
    rc = main(
        ["run", "--trace", trace, "--truth", truth, "--out", out, "--memory-kb", "32"]
    )
    assert rc == 0
    payload = json.loads(open(out).read())
    assert set(payload["metrics"]) == {"precision", "recall", "f1", "are", "tp", "fp", "fn"}
    assert payload["config"]["detector"] == "segsketch"
    assert payload["config"]["theta"] == 0.5
    assert "conventions" in payload


def test_run_fulladdr_requires_cutoff(tmp_path):
    trace, truth = _generate(tmp_path)
    with pytest.raises(SystemExit):
        main(
            ["run", "--detector", "fulladdr", "--trace", trace, "--truth", truth,
             "--out", str(tmp_path / "m.json")]
        )


def test_run_theta_tightening_shrinks_report(tmp_path):
    trace, truth = _generate(tmp_path, seed=3)
    reports = {}
    for theta in ("0.5", "0.65"):
        out = str(tmp_path / f"m{theta}.json")
        rep = str(tmp_path / f"r{theta}.csv")
        rc = main(
            ["run", "--trace", trace, "--truth", truth, "--out", out,
             "--report-out", rep, "--memory-kb", "32", "--theta", theta]
        )
        assert rc == 0
        with open(rep) as fh:
            reports[theta] = {row["host"] for row in csv.DictReader(fh)}
    assert reports["0.65"] <= reports["0.5"]


def test_run_receiver_direction(tmp_path):
    trace, truth = _generate(tmp_path, seed=4, extra=("--direction", "receiver"))
    out = str(tmp_path / "m.json")
    rc = main(
        ["run", "--trace", trace, "--truth", truth, "--out", out,
         "--direction", "receiver", "--memory-kb", "32"]
    )
    assert rc == 0
    metrics = json.loads(open(out).read())["metrics"]
    assert metrics["recall"] > 0.0  # receivers found when keying on dst


def test_run_save_sketch(tmp_path):
    trace, truth = _generate(tmp_path)
    out = str(tmp_path / "m.json")
    snap = str(tmp_path / "sketch.npz")
    rc = main(
        ["run", "--trace", trace, "--truth", truth, "--out", out,
         "--memory-kb", "32", "--save-sketch", snap]
    )
    assert rc == 0
    from segsketch.sketch import SegSketch

    loaded = SegSketch.load(snap)
    assert loaded.occupied.sum() > 0


def test_sweep_theta_grid(tmp_path):
    trace, truth = _generate(tmp_path, seed=5)
    out = str(tmp_path / "sweep.csv")
    rc = main(
        ["sweep", "--axis", "theta", "--trace", trace, "--truth", truth,
         "--out", out, "--memory-kb", "32"]
    )
    assert rc == 0
    rows = list(csv.DictReader(open(out)))
    assert [r["point"] for r in rows] == ["0.35", "0.5", "0.65"]
    assert all(r["detector"] == "segsketch" for r in rows)


def test_sweep_g_grid_and_bitmap_grid(tmp_path):
    trace, truth = _generate(tmp_path, seed=6)
    out = str(tmp_path / "g.csv")
    rc = main(
        ["sweep", "--axis", "G", "--trace", trace, "--truth", truth,
         "--out", out, "--memory-kb", "32"]
    )
    assert rc == 0
    assert [r["point"] for r in csv.DictReader(open(out))] == ["2", "4", "6", "8"]

    out2 = str(tmp_path / "b.csv")
    rc = main(
        ["sweep", "--axis", "bitmap", "--trace", trace, "--truth", truth,
         "--out", out2, "--memory-kb", "32"]
    )
    assert rc == 0
    assert [r["point"] for r in csv.DictReader(open(out2))] == ["0.25", "0.5", "0.75", "1.0"]


def test_sweep_g_axis_rejects_other_detectors(tmp_path):
    with pytest.raises(SystemExit):
        main(
            ["sweep", "--axis", "G", "--detector", "fulladdr", "--cutoff", "100",
             "--trace", "t", "--truth", "u", "--out", "o"]
        )


def test_sweep_memory_requires_trace(tmp_path):
    with pytest.raises(SystemExit):
        main(["sweep", "--axis", "memory", "--out", str(tmp_path / "o.csv")])


def test_analyze_single_point(tmp_path):
    out = str(tmp_path / "a.csv")
    rc = main(
        ["analyze", "--N", "10000", "--C", "1000", "--l", "16", "--G-value", "4",
         "--trials", "0", "--out", out]
    )
    assert rc == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 2  # one per strategy
    assert {r["strategy"] for r in rows} == {"full", "host"}
    assert all(float(r["gap_exact"]) > 0 for r in rows)


def test_analyze_default_grid_orders_are(tmp_path):
    out = str(tmp_path / "grid.csv")
    rc = main(["analyze", "--trials", "30", "--seed", "2", "--out", out])
    assert rc == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 24  # 3 prefix lengths x 4 widths x 2 strategies
    by_key = {(r["strategy"], r["l"], r["G"]): float(r["simulated_are"]) for r in rows}
    for g in ("2", "4", "6", "8"):
        assert by_key[("host", "16", g)] < by_key[("full", "16", g)]
    assert all(float(r["gap_exact"]) > 0 for r in rows)


def test_bench_smoke(tmp_path, capsys):
    trace, _truth = _generate(tmp_path, seed=8)
    out = str(tmp_path / "bench.json")
    rc = main(
        ["bench", "--trace", trace, "--memory-kb", "32", "--repetitions", "3", "--out", out]
    )
    assert rc == 0
    assert "Mpps" in capsys.readouterr().out
    assert json.loads(open(out).read())["mpps"] > 0


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit) as err:
        main(["run", "--help"])
    assert err.value.code == 0
    text = capsys.readouterr().out
    assert "default: 3" in text  # rows
    assert "default: 0.5" in text  # theta
    assert "default: 4" in text  # segment width
    assert "default: 512" in text  # host bitmap bytes


def test_missing_trace_file_is_reported_not_raised(tmp_path, capsys):
    rc = main(
        ["run", "--trace", str(tmp_path / "absent.csv"), "--truth", "x",
         "--out", str(tmp_path / "m.json")]
    )
    assert rc == 1
    assert "error:" in capsys.readouterr().err
