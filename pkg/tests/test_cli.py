import io
import json
import subprocess
import sys

import pytest

from pdspec import cli

SMALL = ["--level", "4", "--audit-count", "4", "--bounds-n-max", "2", "--k-max", "2",
         "--prefix-m", "64", "--growth-n-max", "4", "--m-max", "9", "--corollary-from", "6",
         "--lower-from", "6", "--half-width", "128", "--t-max", "100"]


def run(*argv):
    out = io.StringIO()
    code = cli.main(list(argv), out)
    return code, out.getvalue()


# --- formatting --------------------------------------------------------------------------------

def test_json_is_sorted_with_17_digit_floats():
    text = cli.to_json({"b": 0.1, "a": [1, True, None, float("inf")], "c": {"z": 2.0, "y": "s"}})
    assert text == '{"a":[1,true,null,null],"b":0.10000000000000001,"c":{"y":"s","z":2}}'
    assert json.loads(text)["b"] == 0.1
    with pytest.raises(TypeError):
        cli.to_json(object())


def test_csv_row_and_powers():
    assert cli.csv_row(1, 0.5, "x") == "1,0.5,x"
    assert cli.parse_power("2^15") == 32768 and cli.parse_power("64") == 64


# --- subcommands ----------------------------------------------------------------------------

def test_seq_examples():
    assert run("seq", "--start", "0", "--len", "8") == (0, "abaaabab\n")
    code, text = run("seq", "--start", "-8", "--len", "16", "--partition", "2", "--format", "json")
    assert code == 0
    doc = json.loads(text)
    assert doc["letters"] == "abaaabaaabaaabab"
    assert [p["label"] for p in doc["partition"]] == ["a", "a", "a", "b"]
    assert [p["offset"] for p in doc["partition"]] == [-8, -4, 0, 4]
    assert run("seq", "--start", "1", "--len", "8", "--partition", "2")[0] == 2


def test_bands_example():
    assert run("bands", "--level", "0", "--bound", "2") == (0, "-6,-2,0\n")


def test_bands_json():
    code, text = run("bands", "--level", "3", "--json", "--audit-count", "4")
    doc = json.loads(text)
    assert code == 0 and len(doc["bands"]) >= 1 and doc["C_emp"] >= 2
    assert doc["total_measure"] == pytest.approx(sum(b["hi"] - b["lo"] for b in doc["bands"]))


def test_traces_csv():
    code, text = run("traces", "--energy", "0", "--nmax", "2")
    rows = [r.split(",") for r in text.splitlines()]
    assert code == 0 and len(rows) == 3
    assert rows[0][:2] == ["0", "4"] and rows[1][:3] == ["1", "-6", "14"]
    code, text = run("traces", "--energy", "1", "--nmax", "1", "--free")
    assert text.splitlines()[0].split(",")[1] == "1"


def test_growth_command():
    # a root of x_4, hence in the spectrum
    code, text = run("growth", "--energy", "-4.240248512570616", "--lmax", "2^10",
                     "--level", "4", "--audit-count", "4")
    lines = text.splitlines()
    assert code == 0 and len(lines) == 12
    summary = json.loads(lines[-1])
    assert set(summary) == {"gamma1_emp", "gamma2_emp", "alpha_emp", "ledger_alpha"}
    assert run("growth", "--energy", "0", "--lmax", "1000")[0] == 2
    assert run("growth", "--energy", "0.5", "--lmax", "2^10")[0] == 2  # overflows
    assert run("growth", "--energy", "0", "--nic-index", "9")[0] == 2


def test_transport_command():
    code, text = run("transport", "--half-width", "64", "--tmax", "50", "--free",
                     "--level", "4", "--audit-count", "4")
    lines = text.splitlines()
    assert code == 0
    summary = json.loads(lines[-1])
    assert summary["boundary_flag"] is True and summary["alpha_ref"] > 0


def test_bounds_audit_command():
    code, text = run("bounds-audit", "--level", "4", "--audit-count", "3", "--nmax", "2",
                     "--kmax", "3")
    doc = json.loads(text)
    assert code == 0
    assert set(doc) == {"C_emp", "ledger", "lemma_results"}
    assert all(v["fail"] == 0 for v in doc["lemma_results"].values())


def test_bounds_audit_with_bad_C():
    assert run("bounds-audit", "--level", "4", "--audit-count", "3", "--C", "1.5")[0] == 2


# --- usage errors and configuration ----------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    ["seq", "--start", "0", "--len", "8", "--bogus"],
    ["seq", "--start", "0"],
    ["nonsense"],
    [],
    ["traces", "--energy", "0", "--value-a", "1", "--value-b", "1"],
])
def test_usage_errors(argv):
    assert run(*argv)[0] == 2


def test_help_exits_cleanly(capsys):
    assert run("--help")[0] == 0
    assert run("--version")[0] == 0


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# window\nstart = 0\nlen = 8\n\nformat = text\n")
    assert run("seq", "--config", str(cfg)) == (0, "abaaabab\n")
    assert run("seq", "--config", str(cfg), "--len", "4") == (0, "abaa\n")
    cfg.write_text("start = 0\nlength = 8\n")
    assert run("seq", "--config", str(cfg))[0] == 2
    cfg.write_text("start 0\n")
    assert run("seq", "--config", str(cfg))[0] == 2
    assert run("seq", "--config", str(tmp_path / "missing.cfg"))[0] == 2


def test_config_file_flags(tmp_path):
    cfg = tmp_path / "free.cfg"
    cfg.write_text("energy = 1\nnmax = 1\nfree = yes\n")
    code, text = run("traces", "--config", str(cfg))
    assert code == 0 and text.splitlines()[0].split(",")[1] == "1"


# --- report -------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_report():
    return run("report", *SMALL)


def test_report_is_byte_deterministic(small_report):
    again = run("report", *SMALL)
    assert again == small_report


def test_report_contents(small_report):
    code, text = small_report
    doc = json.loads(text)
    assert set(doc) == {"spectrum_estimate", "constants_ledger", "lemma_results", "growth",
                        "transport", "provenance", "failures"}
    assert 0 < doc["constants_ledger"]["alpha"] <= 1
    assert doc["provenance"]["version"] and len(doc["provenance"]["config_hash"]) == 64
    assert set(doc["spectrum_estimate"]["band_measure"]) == {"4", "10"}
    # a 257-site box cannot hold two decades of t, which is flagged rather than hidden
    assert code == 1
    assert any(f.startswith("transport:") for f in doc["failures"])


def test_report_with_C_below_two(tmp_path):
    out = tmp_path / "r.json"
    code, _ = run("report", *SMALL, "--C", "1.5", "--out", str(out))
    doc = json.loads(out.read_text())
    assert code == 1
    assert doc["failures"] and doc["failures"][0].startswith("ledger: DomainError")
    assert doc["constants_ledger"] == {}


def test_run_config_validation():
    with pytest.raises(cli.UsageError):
        cli.RunConfig(level=0)
    with pytest.raises(cli.UsageError):
        cli.RunConfig(edge_tol=0.0)
    with pytest.raises(cli.UsageError):
        cli.RunConfig(output_format="xml")
    assert cli.RunConfig().digest() == cli.RunConfig().digest()
    assert cli.RunConfig().digest() != cli.RunConfig(level=9).digest()


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "pdspec.cli", "seq", "--start", "0", "--len", "4"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout == "abaa\n"
    r = subprocess.run([sys.executable, "-m", "pdspec.cli", "seq", "--bogus"],
                       capture_output=True, text=True)
    assert r.returncode == 2 and "usage" in r.stderr
