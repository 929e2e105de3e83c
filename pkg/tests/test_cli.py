import json
import shutil
from pathlib import Path

import pytest

from ctqa.cli import RunConfig, build_parser, main
from ctqa.ingest import dump_canonical
from ctqa.ingest.canonical import table_to_document
from tables import club_table, compensation_table

REPLAY = Path(__file__).parent / "data" / "replay"


@pytest.fixture
def comp_file(tmp_path):
    path = tmp_path / "tab-102.json"
    dump_canonical(compensation_table(), path)
    return path


def test_reconstruct_prints_blocks(comp_file, capsys):
    assert main(["reconstruct", str(comp_file)]) == 0
    out = capsys.readouterr().out
    assert '(L, 0, 0, 3, "Compensation cost:")' in out
    assert out.startswith("title: tab-102\ncolumn header: (T, 0, 0, 2,")


def test_reconstruct_invalid_table(tmp_path, capsys):
    doc = table_to_document(compensation_table())
    doc["column_tree"][0]["children"].pop()
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert main(["reconstruct", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "[coverage]" in err and "column 2" in err


def test_reconstruct_directory(tmp_path, comp_file):
    dump_canonical(club_table(), tmp_path / "club.json")
    out = tmp_path / "out"
    assert main(["reconstruct", str(tmp_path), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["club-career.txt", "tab-102.txt"]
    assert "(C, 7, 0, 416)" in (out / "club-career.txt").read_text()


def test_inspect(comp_file, capsys):
    assert main(["inspect", str(comp_file)]) == 0
    out = capsys.readouterr().out
    assert "'Compensation cost:'  level 0, rows 0-3" in out and "(C, 3, 2, 55)" in out


def test_ask_mock(comp_file, tmp_path, capsys):
    script = tmp_path / "script.json"
    script.write_text(json.dumps(["5. Answer: 61"]))
    rc = main(["ask", str(comp_file), "total cost in 2018?", "--backend", "mock", "--mock-script", str(script)])
    assert rc == 0
    out = capsys.readouterr().out
    assert "route: SINGLE" in out and "answer: 61" in out


def test_ask_multi_only(tmp_path, capsys):
    table = tmp_path / "big.json"
    shutil.copy(REPLAY / "dataset" / "tables" / "prov-a.json", table)
    script = tmp_path / "script.json"
    script.write_text(json.dumps(["kw", "(T, 1, 0, 0, 2015) (L, 1, 0, 0, district 0-0)", "5. Answer: 10"]))
    rc = main(["ask", str(table), "spending in district 0-0 in 2015?", "--backend", "mock",
               "--mock-script", str(script), "--mode", "multi_only"])
    assert rc == 0 and "route: MULTI" in capsys.readouterr().out


def test_ask_replay_miss(comp_file, tmp_path, capsys):
    (tmp_path / "tx").mkdir()
    rc = main(["ask", str(comp_file), "unrecorded question?", "--backend", "replay", "--transcript-dir",
               str(tmp_path / "tx")])
    assert rc == 3
    err = capsys.readouterr().err
    assert "replay_miss" in err
    # the digest printed is the one of the prompt actually sent
    assert len([w for w in err.split() if len(w) == 64]) == 1


def _eval(out, *extra):
    return main(["eval", "--dataset", "canonical", "--dataset-path", str(REPLAY / "dataset"), "--backend", "replay",
                 "--transcript-dir", str(REPLAY / "transcripts"), "--output-dir", str(out), *extra])


def test_eval_resumable(tmp_path):
    assert _eval(tmp_path / "full") == 0
    part = tmp_path / "part"
    assert _eval(part, "--limit", "9") == 0
    # simulate a crash mid-write
    with open(part / "predictions.jsonl", "a") as fh:
        fh.write('{"qa_id": "m0')
    assert _eval(part) == 0
    assert (part / "report.json").read_text() == (tmp_path / "full" / "report.json").read_text()
    lines = (part / "predictions.jsonl").read_text().splitlines()
    assert len(lines) == 22 == len({json.loads(line)["qa_id"] for line in lines})


def test_eval_split_and_error_sample(tmp_path):
    assert _eval(tmp_path, "--split", "dev", "--error-samples", "3", "--seed", "5") == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["n_total"] == 12 and set(report["by_split"]) == {"DEV"}
    assert len((tmp_path / "error_sample.jsonl").read_text().splitlines()) == 3


def test_eval_simple_mode(tmp_path):
    script = tmp_path / "script.json"
    script.write_text(json.dumps(["Answer: 1"] * 22))
    rc = main(["eval", "--dataset-path", str(REPLAY / "dataset"), "--backend", "mock", "--mock-script", str(script),
               "--mode", "simple", "--output-dir", str(tmp_path / "o")])
    assert rc == 0
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert set(report["by_route"]) == {"SIMPLE"}


def test_eval_unreadable_dataset(tmp_path):
    assert main(["eval", "--dataset-path", str(tmp_path / "nope"), "--backend", "replay",
                 "--transcript-dir", str(tmp_path), "--output-dir", str(tmp_path / "o")]) == 2


def test_record_with_mock_writes_transcripts(tmp_path):
    script = tmp_path / "script.json"
    script.write_text(json.dumps(["Answer: 1"] * 3))
    rc = main(["record", "--dataset-path", str(REPLAY / "dataset"), "--backend", "mock", "--mock-script",
               str(script), "--mode", "simple", "--limit", "3", "--output-dir", str(tmp_path / "o")])
    assert rc == 0
    assert len(list((tmp_path / "o" / "transcripts").glob("*.jsonl"))) == 3


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"temperature": 0.7, "concurrency_cap": 9, "context_limit": 2000,
                               "backend": "mock", "mock_script": "s.json"}))
    args = build_parser().parse_args(["eval", "--config", str(cfg), "--concurrency", "3"])
    env = {"CTQA_CONCURRENCY_CAP": "5", "CTQA_TEMPERATURE": "0.2"}
    rc = RunConfig.resolve(args, env)
    assert rc.concurrency_cap == 3      # flag beats env and file
    assert rc.temperature == 0.2        # env beats file
    assert rc.context_limit == 2000     # file beats default
    assert rc.generation_reserve == 512


def test_config_rejects_credentials_and_inconsistency(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"api_key": "sk-123"}))
    with pytest.raises(ValueError):
        RunConfig.resolve(build_parser().parse_args(["eval", "--config", str(cfg)]), {})
    with pytest.raises(ValueError):
        RunConfig.resolve(build_parser().parse_args(["eval", "--backend", "replay"]), {})
    with pytest.raises(ValueError):
        RunConfig.resolve(build_parser().parse_args(["eval", "--backend", "mock", "--mock-script", "s",
                                                     "--context-limit", "100"]), {})
