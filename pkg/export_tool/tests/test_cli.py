"""Command line behavior: exit codes and printed summaries."""

import shutil

import pytest

from bundle_export.cli import main


def test_export_then_validate_ok(checkpoint_dir, tmp_path, capsys):
    out = tmp_path / "bundle"
    assert main(["export", "--checkpoint", str(checkpoint_dir),
                 "--out", str(out)]) == 0
    assert "bundle written to" in capsys.readouterr().out
    assert main(["validate", "--checkpoint", str(checkpoint_dir),
                 "--bundle", str(out), "--n", "8"]) == 0
    report_line = capsys.readouterr().out
    assert "validated 8 image / 8 text probes" in report_line


def test_validate_zero_probes_message(checkpoint_dir, exported_bundle, capsys):
    assert main(["validate", "--checkpoint", str(checkpoint_dir),
                 "--bundle", str(exported_bundle), "--n", "0"]) == 0
    assert "not validated" in capsys.readouterr().out


def test_usage_error_exits_1():
    with pytest.raises(SystemExit) as err:
        main(["export", "--checkpoint", "only"])
    assert err.value.code == 1


def test_bad_checkpoint_exits_2(tmp_path, capsys):
    assert main(["export", "--checkpoint", str(tmp_path / "missing"),
                 "--out", str(tmp_path / "out")]) == 2
    assert "cannot load checkpoint" in capsys.readouterr().err


def test_broken_bundle_exits_2(checkpoint_dir, exported_bundle, tmp_path, capsys):
    broken = tmp_path / "broken"
    shutil.copytree(exported_bundle, broken)
    (broken / "text_encoder.pt").write_bytes(b"junk")
    assert main(["validate", "--checkpoint", str(checkpoint_dir),
                 "--bundle", str(broken), "--n", "2"]) == 2
    assert "load failure" in capsys.readouterr().err


def test_fixture_flag_writes_files(checkpoint_dir, exported_bundle, tmp_path):
    fixtures = tmp_path / "fx"
    assert main(["validate", "--checkpoint", str(checkpoint_dir),
                 "--bundle", str(exported_bundle), "--n", "4",
                 "--fixtures", str(fixtures)]) == 0
    assert (fixtures / "probes.npz").is_file()
    assert (fixtures / "fixtures.json").is_file()
