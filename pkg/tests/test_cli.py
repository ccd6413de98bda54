import subprocess
import sys


from shsa.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_check_kb(capsys):
    code, out, _ = run(capsys, "check-kb")
    assert code == 0
    assert "variables: 7\nrelations: 3\nitoms: 9\n" in out
    assert out.endswith("ok\n")


def test_check_kb_echo_round_trips(capsys, tmp_path):
    code, out, _ = run(capsys, "check-kb", "--echo")
    body = out.split("\n", 4)[4].rsplit("ok\n", 1)[0]
    p = tmp_path / "kb.kb"
    p.write_text(body)
    assert run(capsys, "check-kb", str(p))[0] == 0


def test_check_kb_errors(capsys, tmp_path):
    bad = tmp_path / "bad.kb"
    bad.write_text('variable a\nrelation r out=a in=a expr="a + q"\n')
    code, _, err = run(capsys, "check-kb", str(bad))
    assert code == 2 and "'q'" in err and "line 2" in err
    invalid = tmp_path / "invalid.kb"
    invalid.write_text('variable a\nrelation r out=a in=a,ghost expr="a + ghost"\n')
    code, _, err = run(capsys, "check-kb", str(invalid))
    assert code == 1 and "ghost" in err
    assert run(capsys, "check-kb", str(tmp_path / "missing.kb"))[0] == 2


def test_search_pos_lists_three(capsys):
    code, out, _ = run(capsys, "search", "pos")
    assert code == 0
    assert "substitutions of pos (max depth 2): 3" in out
    assert out.count("\n * depth ") + out.count("\n   depth ") == 3
    assert "root: pos" in out


def test_search_with_predecessor_data_only(capsys):
    code, out, _ = run(capsys, "search", "pos", "--provided", "pos_prev,t,t_prev")
    assert code == 0
    assert "relations: r_int" in out


def test_search_nothing_valid(capsys):
    code, out, _ = run(capsys, "search", "pos", "--provided", "t")
    assert code == 1 and "best: none" in out


def test_search_usage_errors(capsys):
    assert run(capsys, "search", "pos", "--fail", "nope")[0] == 2
    assert run(capsys, "search", "pos", "--max-depth", "x")[0] == 2
    assert run(capsys, "search", "speed")[0] == 1
    assert run(capsys)[0] == 2
    assert run(capsys, "frobnicate")[0] == 2


def test_monitor_trace(capsys, tmp_path):
    p = tmp_path / "trace.csv"
    p.write_text("time,branch,value\n" + "".join(
        f"{t},{b},{v}\n" for t in (0, 0.1, 0.2) for b, v in (("a", "1;0"), ("b", "1.1;0"), ("c", "9;0"))
    ))
    code, out, _ = run(capsys, "monitor", str(p))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "time,branch,value,confidence,status"
    assert lines[-1] == "0.2,c,9;0,0,failed"
    p.write_text("0,a\n")
    assert run(capsys, "monitor", str(p))[0] == 2


def test_localize(capsys, tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("a b\n11 fail\n01 fail\n10 pass\n")
    code, out, _ = run(capsys, "localize", str(p))
    assert (code, out) == (0, "b:1\na:0.5\n")
    p.write_text("a b\n11 pass\n")
    code, _, err = run(capsys, "localize", str(p))
    assert code == 1 and "no failing runs" in err
    p.write_text("a b\n1 pass\n")
    assert run(capsys, "localize", str(p))[0] == 2


def test_run_twice_identical(capsys, tmp_path, reference_run):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "run", "--out", str(a))[0] == 0
    assert run(capsys, "run", "--out", str(b), "--seed", "42")[0] == 0
    for name in ("events.log", "metrics.csv", "channels.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "metrics.csv").read_text() == reference_run.metrics.to_csv()
    rows = dict(ln.split(",", 1) for ln in (a / "channels.csv").read_text().splitlines()[1:])
    assert rows["radar2->fog1"].endswith(",dos_like")
    assert rows["radar1->fog1"].endswith(",normal")
    code, out, _ = run(capsys, "replay", str(a / "events.log"))
    assert code == 0 and out == reference_run.metrics.to_csv()


def test_run_bad_override(capsys, tmp_path):
    assert run(capsys, "run", "--out", str(tmp_path), "--theta", "5")[0] == 2


def test_replay_malformed(capsys, tmp_path):
    p = tmp_path / "x.log"
    p.write_text("not a log line\n")
    assert run(capsys, "replay", str(p))[0] == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "shsa", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("shsa ")
