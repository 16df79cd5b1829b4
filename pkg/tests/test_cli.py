"""Tests for the command-line entry point."""
from __future__ import annotations

import json
from pathlib import Path

import pytest

from pmm_lab.cli import dispatch
from pmm_lab.const import EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE
from pmm_lab.lattice_core import ConstraintFamily, pmm_family
from pmm_lab.manifest import InvalidManifestError, RunManifest


def _stdout_report(capsys: pytest.CaptureFixture[str]) -> dict:
    return json.loads(capsys.readouterr().out)


# =============================================================================
# Validate and Classify
# =============================================================================


def test_validate_catalog_family(capsys: pytest.CaptureFixture[str]) -> None:
    """Test that the default family validates."""
    assert dispatch(["validate"]) == EXIT_OK
    report = _stdout_report(capsys)
    assert report["passed"] is True
    assert report["manifest"]["subcommand"] == "validate"
    assert report["manifest"]["family_fingerprint"] == pmm_family().fingerprint()


def test_validate_corrupted_family_file(tmp_path: Path) -> None:
    """Test that a family failing positivity exits with a check failure."""
    path = tmp_path / "left.json"
    family = ConstraintFamily.from_function(1, lambda eta: eta[-1], "left")
    path.write_text(json.dumps(family.to_dict()))
    assert dispatch(["validate", "--family", str(path), "-q"]) == EXIT_CHECK_FAILED


def test_validate_missing_family_file(tmp_path: Path) -> None:
    """Test that an unreadable family is a usage error."""
    assert dispatch(["validate", "--family", str(tmp_path / "nope.json"), "-q"]) == EXIT_USAGE


def test_classify(capsys: pytest.CaptureFixture[str]) -> None:
    """Test labels for eventually-periodic and finite inputs."""
    assert dispatch(["classify", "(100)* 11 (100)*", "(0)* 11 (0)*", "10010"]) == EXIT_OK
    results = _stdout_report(capsys)["configurations"]
    assert [r.get("label") for r in results[:2]] == ["E'", "F'(2)"]
    assert results[2]["frozen"] is True


def test_classify_parse_error() -> None:
    """Test that malformed configurations are usage errors."""
    assert dispatch(["classify", "(1)* 2 (0)*", "-q"]) == EXIT_USAGE


# =============================================================================
# Connect
# =============================================================================


def test_connect_certify(capsys: pytest.CaptureFixture[str]) -> None:
    """Test the certificate suite on short windows."""
    assert dispatch(["connect", "--certify", "6", "--all-pairs-upto", "5"]) == EXIT_OK
    certificates = _stdout_report(capsys)["certificates"]
    assert len(certificates) == 4 * 5
    assert all(c["passed"] for c in certificates)


def test_connect_pair(capsys: pytest.CaptureFixture[str]) -> None:
    """Test a planned path between two configurations."""
    assert dispatch(["connect", "--from", "11000", "--to", "00011"]) == EXIT_OK
    report = _stdout_report(capsys)
    assert report["connected"] is True
    assert report["path_valid"] is True
    assert report["path"]
    assert report["path_text"] == " ".join(str(move) for move in report["path"])


def test_connect_needs_a_mode() -> None:
    """Test that connect without --certify or a pair is a usage error."""
    assert dispatch(["connect", "-q"]) == EXIT_USAGE


def test_connect_certify_bad_family(tmp_path: Path) -> None:
    """Test that counterexamples make connect fail."""
    path = tmp_path / "gap.json"
    family = ConstraintFamily.from_function(1, lambda eta: eta[-1] * eta[2], "gap")
    path.write_text(json.dumps(family.to_dict()))
    assert dispatch(["connect", "--certify", "5", "--family", str(path), "-q"]) == (
        EXIT_CHECK_FAILED
    )


# =============================================================================
# Exact
# =============================================================================


def test_exact_ring(capsys: pytest.CaptureFixture[str]) -> None:
    """Test the exact checks on a ring of five sites."""
    assert dispatch(["exact", "--ring", "5", "--rho", "0.3"]) == EXIT_OK
    report = _stdout_report(capsys)
    assert report["states"] == 32
    assert report["passed"] is True
    assert report["residuals"]["stationary"]["passed"] is True


def test_exact_density_sweep(tmp_path: Path) -> None:
    """Test the sweep over ring lengths and densities."""
    prefix = tmp_path / "sweep"
    argv = ["exact", "--lengths", "3", "4", "5", "--rho-grid", "0.1", "0.5", "--out", str(prefix)]
    assert dispatch(argv) == EXIT_OK
    report = json.loads(prefix.with_name("sweep.json").read_text())
    assert report["passed"] is True
    assert len(report["instances"]) == 6
    assert {(r["L"], r["rho"]) for r in report["instances"]} == {
        (n, rho) for n in (3, 4, 5) for rho in (0.1, 0.5)
    }
    rows = prefix.with_name("sweep.sweep.csv").read_text().splitlines()
    assert rows[0] == "L,rho,stationary,detailed_balance,passed"
    assert len(rows) == 7


def test_exact_interval_with_count(capsys: pytest.CaptureFixture[str]) -> None:
    """Test an interval restricted to two particles."""
    assert dispatch(["exact", "--interval", "6", "--count", "2"]) == EXIT_OK
    report = _stdout_report(capsys)
    assert report["states"] == 15
    assert report["boundary"] == "empty"


@pytest.mark.parametrize(
    "argv",
    [
        ["exact", "--ring", "5", "--rho", "1.5"],
        ["exact", "--ring", "0"],
        ["exact", "--ring", "5", "--interval", "5"],
        ["exact", "--ring", "5", "--bogus"],
        ["exact", "--ring", "5", "--jobs", "0"],
    ],
)
def test_exact_usage_errors(argv: list[str]) -> None:
    """Test argument validation."""
    assert dispatch([*argv, "-q"]) == EXIT_USAGE


def test_version() -> None:
    """Test that --version exits cleanly."""
    assert dispatch(["--version"]) == EXIT_OK


# =============================================================================
# Simulate, Hydro and Entropy
# =============================================================================


def test_simulate_writes_outputs(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Test the output files and the environment seed."""
    monkeypatch.setenv("PMM_LAB_SEED", "77")
    prefix = tmp_path / "runs" / "sim"
    argv = [
        "simulate", "--ring", "8", "--rho", "0.5", "--horizon", "2",
        "--samples", "2", "--replicas", "2", "--out", str(prefix),
    ]
    assert dispatch(argv) == EXIT_OK
    manifest = RunManifest.read(prefix.with_name("sim.manifest.json"))
    assert manifest.seed == 77
    assert manifest.subcommand == "simulate"
    assert set(manifest.outputs) == {"sim.json", "sim.profile.csv"}
    rows = prefix.with_name("sim.profile.csv").read_text().splitlines()
    assert rows[0] == "time,site,mean_occupation"
    assert len(rows) == 1 + 2 * 8


def test_bad_environment_seed(monkeypatch: pytest.MonkeyPatch) -> None:
    """Test that a non-integer seed in the environment is a usage error."""
    monkeypatch.setenv("PMM_LAB_SEED", "abc")
    assert dispatch(["validate", "-q"]) == EXIT_USAGE


def test_simulate_compare_exact(capsys: pytest.CaptureFixture[str]) -> None:
    """Test that pooled frequencies are checked against the exact law."""
    argv = [
        "simulate", "--ring", "4", "--init", "1100", "--horizon", "300",
        "--replicas", "3", "--compare-exact",
    ]
    code = dispatch(argv)
    report = _stdout_report(capsys)
    comparison = report["exact_comparison"]
    assert comparison["states"] == 18
    assert code == (EXIT_OK if comparison["passed"] else EXIT_CHECK_FAILED)
    assert len(report["state_frequencies"]) == 3


def test_simulate_init_length_mismatch() -> None:
    """Test that --init must cover the ring."""
    argv = ["simulate", "--ring", "6", "--init", "1100", "--horizon", "1", "-q"]
    assert dispatch(argv) == EXIT_USAGE


def test_hydro_threshold(capsys: pytest.CaptureFixture[str]) -> None:
    """Test that the discrepancy threshold decides the exit code."""
    argv = [
        "hydro", "--L", "32", "--replicas", "2", "--tmacro", "0.005",
        "--profile", "flat", "--cells", "32", "--blocks", "4",
    ]
    assert dispatch([*argv, "--threshold", "1.0"]) == EXIT_OK
    assert _stdout_report(capsys)["L"] == 32
    assert dispatch([*argv, "--threshold", "0", "-q"]) == EXIT_CHECK_FAILED


@pytest.mark.parametrize("measure", ["mu", "uniform-class"])
def test_entropy(capsys: pytest.CaptureFixture[str], measure: str) -> None:
    """Test the entropy report on stationary ring measures."""
    assert dispatch(["entropy", "--ring", "6", "--measure", measure]) == EXIT_OK
    report = _stdout_report(capsys)
    assert report["beta_bound_holds"] is True
    assert abs(report["balance"]["total"]) <= 1e-10


def test_entropy_from_file(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Test a measure read from a JSON file."""
    path = tmp_path / "nu.json"
    path.write_text(json.dumps({"1100": 0.7, "0110": 0.3}))
    argv = ["entropy", "--ring", "4", "--measure", "file", "--file", str(path)]
    assert dispatch(argv) == EXIT_OK
    assert _stdout_report(capsys)["H"] > 0


def test_entropy_rejects_closed_density() -> None:
    """Test that the reference density must be inside (0, 1)."""
    assert dispatch(["entropy", "--ring", "4", "--rho", "0", "-q"]) == EXIT_USAGE


# =============================================================================
# Manifests and Replay
# =============================================================================


def test_replay_reproduces_report(tmp_path: Path) -> None:
    """Test that a manifest regenerates identical outputs."""
    first = tmp_path / "first"
    second = tmp_path / "second"
    assert dispatch(["exact", "--ring", "4", "--seed", "5", "--out", str(first)]) == EXIT_OK
    manifest = first.with_name("first.manifest.json")
    assert dispatch(["replay", "--manifest", str(manifest), "--out", str(second)]) == EXIT_OK
    assert (
        first.with_name("first.json").read_text()
        == second.with_name("second.json").read_text()
    )
    assert RunManifest.read(second.with_name("second.manifest.json")).seed == 5


def test_replay_invalid_manifest(tmp_path: Path) -> None:
    """Test that a malformed manifest is a usage error."""
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"subcommand": "exact"}))
    assert dispatch(["replay", "--manifest", str(path), "-q"]) == EXIT_USAGE
    with pytest.raises(InvalidManifestError):
        RunManifest.read(path)


def test_manifest_round_trip(tmp_path: Path) -> None:
    """Test writing and reading a manifest."""
    manifest = RunManifest("exact", {"length": 4}, 3, pmm_family().fingerprint())
    path = manifest.write(tmp_path / "m.json")
    loaded = RunManifest.read(path)
    assert loaded.as_dict() == manifest.as_dict()
