import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbmlab.cli import COMMANDS, EXIT_CONFIG, EXIT_FAILED, EXIT_OK, build_parser, main
from fbmlab.fbm import read_paths

GOLDEN = Path(__file__).parent / "golden"


def test_every_command_has_default_config_and_golden():
    for cmd in COMMANDS:
        from fbmlab.cli import default_config_path

        assert default_config_path(cmd).is_file(), cmd
        assert (GOLDEN / cmd / "report.json").is_file(), cmd
        assert (GOLDEN / cmd / "report.csv").is_file(), cmd


def test_help_lists_all_subcommands(capsys):
    parser = build_parser()
    help_text = parser.format_help()
    for cmd in COMMANDS:
        assert cmd in help_text


FAST_COMMANDS = [
    "fraccalc-table",
    "kernel-verify",
    "fbm-sample",
    "shuffle-verify",
    "psi-table",
    "sde-solve",
    "flow-derivatives",
]


@pytest.mark.parametrize("cmd", FAST_COMMANDS)
def test_golden_reports_reproduced(cmd, tmp_path):
    out = tmp_path / cmd
    assert main([cmd, "--out", str(out)]) == EXIT_OK
    for name in ("report.json", "report.csv"):
        assert (out / name).read_bytes() == (GOLDEN / cmd / name).read_bytes(), (
            f"{cmd}/{name} deviates from the golden file"
        )


def test_sample_binary_round_trip(tmp_path):
    out = tmp_path / "fbm-sample"
    assert main(["fbm-sample", "--out", str(out)]) == EXIT_OK
    header, paths = read_paths(out / "paths.bin")
    assert header["steps"] == 64 and header["dim"] == 1 and header["n_paths"] == 16
    assert header["hurst"] == 0.3 and header["seed"] == 0
    assert np.all(paths[:, 0, :] == 0.0)
    assert (out / "paths.bin").read_bytes() == (GOLDEN / "fbm-sample" / "paths.bin").read_bytes()


def test_seed_override_changes_then_reproduces(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    c = tmp_path / "c"
    for out in (a, b):
        assert main(["fbm-sample", "--out", str(out), "--seed", "7"]) == EXIT_OK
    assert main(["fbm-sample", "--out", str(c), "--seed", "8"]) == EXIT_OK
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "paths.bin").read_bytes() == (b / "paths.bin").read_bytes()
    assert (a / "paths.bin").read_bytes() != (c / "paths.bin").read_bytes()


def test_hurst_out_of_domain_is_config_error(tmp_path):
    code = main(
        ["fbm-sample", "--out", str(tmp_path), "--override", "hurst=0.6"]
    )
    assert code == EXIT_CONFIG


def test_unknown_key_rejected(tmp_path):
    code = main(["fbm-sample", "--out", str(tmp_path), "--override", "nope=1"])
    assert code == EXIT_CONFIG


def test_missing_config_file(tmp_path):
    code = main(["fbm-sample", "--out", str(tmp_path), "--config", "/nonexistent.yaml"])
    assert code == EXIT_CONFIG


def test_unparsable_config(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("::: not yaml {{{")
    code = main(["fbm-sample", "--out", str(tmp_path), "--config", str(bad)])
    assert code == EXIT_CONFIG


def test_unknown_drift_is_config_error(tmp_path):
    code = main(
        ["sde-solve", "--out", str(tmp_path), "--override", "drift=missing"]
    )
    assert code == EXIT_CONFIG


@given(
    st.sampled_from(sorted(COMMANDS)),
    st.text(alphabet="abcdefgh_", min_size=1, max_size=8),
    st.sampled_from(["1", "0.5", "true", "[1,2]", "text"]),
)
@settings(max_examples=25, deadline=None)
def test_malformed_override_exit_contract(tmp_path_factory, cmd, key, value):
    # unknown keys or wrong types must exit with the config status, never crash
    out = tmp_path_factory.mktemp("cli")
    schema = COMMANDS[cmd][1]
    if key in schema or key == "seed":
        return
    code = main([cmd, "--out", str(out), "--override", f"{key}={value}"])
    assert code == EXIT_CONFIG
