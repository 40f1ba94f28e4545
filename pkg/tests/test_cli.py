import json
import re
import signal
import subprocess
import sys

import pytest

from fovstream.cli import build_parser, main


def test_parser_has_all_subcommands():
    parser = build_parser()
    assert parser.prog == "fovstream"
    text = parser.format_help()
    for command in ("bench", "serve", "client", "make-fixture"):
        assert command in text


def test_make_fixture_and_bench_roundtrip(tmp_path, capsys):
    dataset = tmp_path / "scene"
    assert main(["make-fixture", "--out", str(dataset), "--frames", "4"]) == 0
    assert (dataset / "intrinsics.json").is_file()
    assert (dataset / "gaze_sweep.csv").is_file()

    out = tmp_path / "report.json"
    code = main([
        "bench", "--dataset", str(dataset), "--condition", "sema",
        "--frames", "4", "--fps", "60", "--link-mbps", "1000",
        "--out", str(out),
    ])
    captured = capsys.readouterr().out
    assert code == 0
    assert "Bandwidth (Mbps)" in captured
    assert "SEMA" in captured
    report = json.loads(out.read_text())
    assert report[0]["condition"] == "sema"
    assert report[0]["frames_received"] == 4
    assert report[0]["fps"] == 60.0


def test_bench_fps_comes_from_config_file(tmp_path, capsys):
    dataset = tmp_path / "scene"
    main(["make-fixture", "--out", str(dataset), "--frames", "3", "--no-objects"])
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"fps": 48, "link_mbps": None}))
    out = tmp_path / "report.json"
    code = main([
        "bench", "--dataset", str(dataset), "--config", str(config),
        "--condition", "ref", "--frames", "3", "--out", str(out),
    ])
    capsys.readouterr()
    assert code == 0
    assert json.loads(out.read_text())[0]["fps"] == 48.0


def test_missing_dataset_is_a_clean_error(tmp_path, capsys):
    code = main(["bench", "--dataset", str(tmp_path / "nope"), "--frames", "2"])
    capsys.readouterr()
    assert code == 2


def test_serve_then_client_over_the_wire(tmp_path, capsys):
    dataset = tmp_path / "scene"
    main(["make-fixture", "--out", str(dataset), "--frames", "4"])
    capsys.readouterr()
    proc = subprocess.Popen(
        [sys.executable, "-m", "fovstream.cli", "serve",
         "--dataset", str(dataset), "--host", "127.0.0.1",
         "--port", "0", "--ws-port", "0",
         "--condition", "sema", "--fps", "50", "--frames", "5"],
        stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True,
    )
    try:
        line = proc.stdout.readline()
        match = re.search(r"port (\d+)", line)
        assert match, f"no port in: {line!r}"
        port = int(match.group(1))

        code = main(["client", "--host", "127.0.0.1", "--port", str(port)])
        captured = capsys.readouterr().out
        assert code == 0
        assert "over 5 frames" in captured
        assert "clean=True" in captured
        assert "malformed" in captured
    finally:
        proc.send_signal(signal.SIGINT)
        try:
            proc.wait(timeout=10)
        except subprocess.TimeoutExpired:
            proc.kill()
            pytest.fail("serve did not shut down on SIGINT")
