import json

import pytest

from pulse import cli, pipeline
from pulse.energy import dump_cost_table, default_cost_table, EnergyCostTable


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "suite"
    assert cli.main(["synth", "--out", str(out), "--kernels", "4", "--seed", "4"]) == 0
    return out


@pytest.fixture(scope="module")
def dataset(synth_dir):
    out = synth_dir.parent / "d.csv"
    assert cli.main(["build-dataset", "--trace-dir", str(synth_dir), "--out", str(out)]) == 0
    return out


def test_synth_writes_suite(synth_dir):
    rows = pipeline.read_manifest(synth_dir / "manifest.csv")
    assert len(rows) == 32
    assert len(list(synth_dir.glob("*.trace"))) == 256


def test_parse_trace_json(synth_dir, capsys):
    trace = sorted(synth_dir.glob("*.p4.trace"))[0]
    code, out, _ = run(capsys, "parse-trace", trace)
    assert code == 0
    doc = json.loads(out)
    assert doc["total_fj"] == sum(doc["per_component"].values())
    assert doc["region"]["cycles"] == doc["activity"]["region_cycles"]


def test_parse_trace_missing(capsys, tmp_path):
    code, _, err = run(capsys, "parse-trace", tmp_path / "none.trace")
    assert code == 2 and "pulse: error [MissingInputError]" in err


def test_parse_trace_bad(capsys, tmp_path):
    bad = tmp_path / "bad.trace"
    bad.write_text("1: cluster/pe0/trace: kernel_enter\nnot a line\n")
    code, _, err = run(capsys, "parse-trace", bad)
    assert code == 1 and "line 2" in err


def test_parse_trace_topology_flag(synth_dir, capsys):
    trace = sorted(synth_dir.glob("*.p1.trace"))[0]
    code, out, _ = run(capsys, "parse-trace", trace, "--topology", "8,4,16,32")
    assert code == 0
    with pytest.raises(SystemExit) as exc:
        cli.main(["parse-trace", str(trace), "--topology", "8,x"])
    assert exc.value.code == 2


def test_energy_model_env_and_flag(synth_dir, capsys, tmp_path, monkeypatch):
    trace = sorted(synth_dir.glob("*.p2.trace"))[0]
    _, out, _ = run(capsys, "parse-trace", trace)
    base = json.loads(out)["total_fj"]
    flat = default_cost_table().as_flat()
    doubled = tmp_path / "double.cost"
    doubled.write_text(dump_cost_table(EnergyCostTable.from_flat({k: 2 * v for k, v in flat.items()})))
    monkeypatch.setenv("PULSE_ENERGY_MODEL", str(doubled))
    _, out, _ = run(capsys, "parse-trace", trace)
    assert json.loads(out)["total_fj"] == 2 * base
    _, out, _ = run(capsys, "parse-trace", trace, "--energy-model", tmp_path / "missing.cost")
    assert out == ""


def test_build_train_report(dataset, capsys, tmp_path):
    ds = dataset
    assert len(pipeline.read_dataset(ds)) == 32
    assert len(pipeline.read_dataset(ds).feature_names) == 20
    code, out, _ = run(capsys, "train", "--dataset", ds, "--report", tmp_path / "r.csv",
                       "--model", tmp_path / "m.json", "--folds", "2", "--repeats", "2")
    assert code == 0 and "always-8" in out
    assert len(pipeline.parse_report_csv((tmp_path / "r.csv").read_text())) == 11
    code, out, _ = run(capsys, "report", "--model", tmp_path / "m.json", "--out", tmp_path / "i.csv")
    assert code == 0
    assert (tmp_path / "i.csv").read_text().startswith("feature_name,importance\n")


def test_train_prune(dataset, capsys, tmp_path):
    ds = dataset
    code, out, _ = run(capsys, "train", "--dataset", ds, "--report", tmp_path / "r.csv",
                       "--model", tmp_path / "m.json", "--folds", "2", "--repeats", "1", "--prune", "3")
    assert code == 0 and out.startswith("kept ")
    assert len(json.loads((tmp_path / "m.json").read_text())["feature_names"]) == 3


def test_missing_dataset_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "train", "--dataset", tmp_path / "no.csv", "--report", tmp_path / "r",
                       "--model", tmp_path / "m")
    assert code == 2 and "dataset not found" in err


def test_missing_trace_exit_2(synth_dir, capsys, tmp_path):
    import shutil

    work = tmp_path / "s"
    shutil.copytree(synth_dir, work)
    first = pipeline.read_manifest(work / "manifest.csv")[0].sample_id
    (work / f"{first}.p5.trace").unlink()
    code, _, err = run(capsys, "build-dataset", "--trace-dir", work, "--out", tmp_path / "d.csv")
    assert code == 2 and "missing trace p=5" in err


def test_validation_exit_1(capsys, tmp_path):
    ds = tmp_path / "d.csv"
    ds.write_text("sample_id,kernel,suite,dtype,size_bytes,f0,energy_1\n")
    code, _, err = run(capsys, "train", "--dataset", ds, "--report", tmp_path / "r", "--model", tmp_path / "m")
    assert code == 1 and "PipelineError" in err


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["train"])
    assert exc.value.code == 2


def test_config_file_and_flag_override(dataset, capsys, tmp_path):
    ds = dataset
    cfg = tmp_path / "train.cfg"
    cfg.write_text(f"# training run\ndataset = {ds}\nreport = {tmp_path / 'r.csv'}\n"
                   f"model = {tmp_path / 'm.json'}\nfolds = 2\nrepeats = 1\ntolerance_max = 4\n")
    code, _, _ = run(capsys, "train", "--config", cfg)
    assert code == 0
    assert len(pipeline.parse_report_csv((tmp_path / "r.csv").read_text())) == 5
    code, _, _ = run(capsys, "train", "--config", cfg, "--tolerance-max", "2")
    assert code == 0
    assert len(pipeline.parse_report_csv((tmp_path / "r.csv").read_text())) == 3


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    code, _, err = run(capsys, "report", "--config", cfg, "--model", "m", "--out", "o")
    assert code == 1 and "unknown key" in err
    code, _, err = run(capsys, "report", "--config", tmp_path / "none.cfg", "--model", "m", "--out", "o")
    assert code == 2
