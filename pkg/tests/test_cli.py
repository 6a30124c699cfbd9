import json

from conftest import build_acceptance_scenario
from fieldlog.cli import main as cli_main
from fieldlog.simulator import scenario_to_document


def test_sim_pipeline_compare_round_trip(tmp_path, capsys):
    scenario_file = tmp_path / "scenario.json"
    scenario_file.write_text(json.dumps(scenario_to_document(build_acceptance_scenario())))
    telemetry = tmp_path / "telemetry.jsonl"
    truth = tmp_path / "truth.csv"
    registry_file = tmp_path / "registry.json"

    assert cli_main([
        "sim", "--scenario", str(scenario_file), "--out", str(telemetry),
        "--truth", str(truth), "--registry-out", str(registry_file),
    ]) == 0
    assert telemetry.read_text().count("\n") > 1000
    assert len(truth.read_text().strip().splitlines()) == 13  # header + 12

    records = tmp_path / "records.csv"
    assert cli_main([
        "pipeline", "run", "--registry", str(registry_file),
        "--in", str(telemetry), "--out-records", str(records),
    ]) == 0
    assert len(records.read_text().strip().splitlines()) == 13

    # the truth file doubles as a perfect manual logbook: no discrepancies
    manual = tmp_path / "manual.csv"
    rows = ["field_id,work_type,date"]
    for line in truth.read_text().strip().splitlines()[1:]:
        cells = line.split(",")
        rows.append(f"{cells[2]},{cells[3]},{cells[5][:10]}")
    manual.write_text("\n".join(rows) + "\n")
    capsys.readouterr()
    assert cli_main(["compare", "--auto", str(records), "--manual", str(manual)]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["entries"] == []

    # a manual row set one day later shows up as a date mismatch
    shifted = rows[:1] + [r.replace("2024-04-01", "2024-04-02") for r in rows[1:2]] + rows[2:]
    manual.write_text("\n".join(shifted) + "\n")
    assert cli_main(["compare", "--auto", str(records), "--manual", str(manual)]) == 0
    report = json.loads(capsys.readouterr().out)
    kinds = {e["kind"] for e in report["entries"]}
    assert "date_mismatch" in kinds


def test_cli_seed_override_changes_bytes(tmp_path):
    scenario_file = tmp_path / "scenario.json"
    scenario_file.write_text(json.dumps(scenario_to_document(build_acceptance_scenario())))
    out_a = tmp_path / "a.jsonl"
    out_b = tmp_path / "b.jsonl"
    truth = tmp_path / "truth.csv"
    cli_main(["sim", "--scenario", str(scenario_file), "--out", str(out_a),
              "--truth", str(truth), "--seed", "1"])
    cli_main(["sim", "--scenario", str(scenario_file), "--out", str(out_b),
              "--truth", str(truth), "--seed", "2"])
    assert out_a.read_text() != out_b.read_text()
    cli_main(["sim", "--scenario", str(scenario_file), "--out", str(out_b),
              "--truth", str(truth), "--seed", "1"])
    assert out_a.read_text() == out_b.read_text()
