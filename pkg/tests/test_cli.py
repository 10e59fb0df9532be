"""CLI subcommand behavior: formats, determinism, error handling."""

import os
from pathlib import Path

import pytest

import smf_helpers as sh
from midifusion.bvh import export_bvh, parse_bvh
from midifusion.cli import run_cli
from midifusion.skeleton import AnimationClip, default_humanoid, identity_pose


@pytest.fixture()
def demo_mid(tmp_path):
    """Format-0 file, 120 BPM: an E-major strum at beat 0, single note at beat 2."""
    events = (
        sh.note_on(0, 40, 100)
        + sh.note_on(0, 44, 96)
        + sh.note_on(0, 47, 90)
        + sh.note_off(480, 40)
        + sh.note_off(0, 44)
        + sh.note_off(0, 47)
        + sh.note_on(480, 60, 80)
        + sh.note_off(480, 60)
    )
    path = tmp_path / "demo.mid"
    path.write_bytes(sh.mthd(0, 1, 480) + sh.mtrk(events + sh.end_of_track()))
    return path


@pytest.fixture()
def base_bvh(tmp_path):
    skeleton = default_humanoid()
    clip = AnimationClip([identity_pose(skeleton.joint_count)] * 2, 30.0)
    path = tmp_path / "base.bvh"
    path.write_text(export_bvh(skeleton, clip))
    return path


def _run(capsys, *argv):
    code = run_cli(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestInspect:
    def test_fields(self, capsys, demo_mid):
        code, out, _ = _run(capsys, "inspect-midi", str(demo_mid))
        assert code == 0
        lines = dict(
            (ln.split("\t", 1)[0], ln.split("\t", 1)[1]) for ln in out.splitlines()
        )
        assert lines["format"] == "0"
        assert lines["tracks"] == "1"
        assert lines["division"] == "480"
        assert lines["notes"] == "4"
        assert lines["end_s"] == "1.500000"

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = _run(capsys, "inspect-midi", str(tmp_path / "nope.mid"))
        assert code == 1
        assert err.startswith("error: FileNotFoundError:")

    def test_bad_magic(self, capsys, tmp_path):
        bad = tmp_path / "bad.mid"
        bad.write_bytes(b"not a midi file")
        code, _, err = _run(capsys, "inspect-midi", str(bad))
        assert code == 1
        assert "BadMagic" in err


class TestNotes:
    def test_tsv(self, capsys, demo_mid):
        code, out, _ = _run(capsys, "notes", str(demo_mid))
        assert code == 0
        rows = [ln.split("\t") for ln in out.splitlines()]
        assert len(rows) == 4
        assert rows[0] == ["0.000000", "0.500000", "40", "100", "0", "0"]
        assert rows[3][2] == "60"

    def test_channel_filter(self, capsys, demo_mid):
        code, out, _ = _run(capsys, "notes", str(demo_mid), "--channel", "5")
        assert code == 0
        assert out == ""


class TestCompile:
    def test_timeline_text(self, capsys, demo_mid):
        code, out, _ = _run(capsys, "compile", str(demo_mid), "--profile", "guitar")
        assert code == 0
        rows = [ln.split("\t") for ln in out.splitlines()]
        # E-major chord (3 events) + fallback note (3 events)
        assert len(rows) == 6
        assert rows[0][1] == "attack"
        assert rows[0][2] == "E"
        assert [r[1] for r in rows].count("strike") == 2

    def test_output_file(self, capsys, demo_mid, tmp_path):
        out_file = tmp_path / "events.tsv"
        code, out, _ = _run(
            capsys, "compile", str(demo_mid), "--profile", "guitar", "-o", str(out_file)
        )
        assert code == 0
        assert out == ""
        assert out_file.read_text().count("\n") == 6

    def test_no_partial_output_on_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.mid"
        bad.write_bytes(b"junk")
        out_file = tmp_path / "events.tsv"
        code, _, err = _run(
            capsys, "compile", str(bad), "--profile", "guitar", "-o", str(out_file)
        )
        assert code == 1
        assert not out_file.exists()
        assert not list(tmp_path.glob(".tmp-*"))


class TestBench:
    def test_quest2_at_target(self, capsys):
        code, out, _ = _run(capsys, "bench", "--device", "quest2", "--floor", "72")
        assert code == 0
        assert "max_avatars\t22" in out

    def test_quest1_default_floor(self, capsys):
        code, out, _ = _run(capsys, "bench", "--device", "quest1")
        assert code == 0
        assert "max_avatars\t10" in out

    def test_table_present(self, capsys):
        code, out, _ = _run(capsys, "bench", "--device", "quest1")
        assert "fps\t0\t72.000000" in out
        assert "fps\t11\t" in out


class TestSim:
    def test_deterministic(self, capsys):
        outs = []
        for _ in range(2):
            code, out, _ = _run(
                capsys, "sim", "--agents", "2", "--seed", "7", "--duration", "10"
            )
            assert code == 0
            outs.append(out)
        assert outs[0] == outs[1]

    def test_replay_summary(self, capsys, tmp_path):
        code, out, _ = _run(
            capsys, "sim", "--agents", "2", "--seed", "3", "--duration", "2",
        )
        log = tmp_path / "session.log"
        log.write_text(out)
        code, summary, _ = _run(capsys, "replay", str(log))
        assert code == 0
        assert "time_s\t2.000000" in summary
        assert "agents\t2" in summary

    def test_inject(self, capsys, tmp_path):
        inject = tmp_path / "notes.log"
        inject.write_text("0.500000\tnote\ta0\tpitch=60 velocity=127\n")
        code, out, _ = _run(
            capsys, "sim", "--agents", "1", "--seed", "1", "--duration", "1",
            "--inject", str(inject),
        )
        assert code == 0
        assert "note\ta0\tpitch=60 velocity=127 src=ext" in out

    def test_corrupt_replay(self, capsys, tmp_path):
        log = tmp_path / "bad.log"
        log.write_text("1.0\tjoin\ta0\tx=0\n0.5\tnote\ta0\tpitch=1 velocity=1\n")
        code, _, err = _run(capsys, "replay", str(log))
        assert code == 1
        assert "CorruptLog" in err


class TestRender:
    def test_render_bvh(self, capsys, demo_mid, base_bvh, tmp_path):
        out_file = tmp_path / "out.bvh"
        code, _, err = _run(
            capsys, "render", str(demo_mid), "--profile", "guitar",
            "--base", str(base_bvh), "--fps", "30", "-o", str(out_file),
        )
        assert code == 0, err
        skeleton, clip = parse_bvh(out_file.read_text())
        assert skeleton.names == default_humanoid().names
        # duration 1.5 s end + release tail: release at 1.5 (note end), fade 0.1
        assert len(clip.frames) == 48
        assert clip.frame_rate == 30.0

    def test_render_with_stack(self, capsys, demo_mid, base_bvh, tmp_path):
        stack = tmp_path / "layers.stack"
        stack.write_text(f"layer clip={base_bvh.name} mask=head mode=additive weight=0.5\n")
        out_file = tmp_path / "out.bvh"
        code, _, err = _run(
            capsys, "render", str(demo_mid), "--profile", "guitar",
            "--base", str(base_bvh), "--layers", str(stack), "-o", str(out_file),
        )
        assert code == 0, err
        assert out_file.exists()


class TestValidateProfile:
    def test_builtin_ok(self, capsys):
        for name in ("guitar", "bass", "piano", "drums"):
            code, out, _ = _run(capsys, "validate-profile", name)
            assert code == 0
            assert "status\tok" in out

    def test_bad_profile_flagged(self, capsys, tmp_path):
        bad = tmp_path / "bad.profile"
        bad.write_text(
            "instrument guitar\nmask fingers\n"
            "fallback swing joint=NoSuchJoint\n"
        )
        code, out, _ = _run(capsys, "validate-profile", str(bad))
        assert code == 0
        assert "status\tinvalid" in out
        assert "NoSuchJoint" in out
