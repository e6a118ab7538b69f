"""Acceptance suite: one test per acceptance check, at full scale.

The suite configs live in stochwave.suite and are shared with
``stochwave verify-all``. Everything runs once per session (a few minutes
on one core) and each test reads the verdicts it needs.
"""

import filecmp
import json
import os
import subprocess
import sys

import pytest

from stochwave.cli import verify_all

DETERMINISM_CAP = 512


@pytest.fixture(scope="module")
def verdicts(tmp_path_factory):
    root = str(tmp_path_factory.mktemp("acceptance"))
    verify_all(root, seed=0, log=lambda *a: None)
    out = {}
    for name in os.listdir(root):
        p = os.path.join(root, name, "verdict.json")
        if os.path.exists(p):
            with open(p) as fh:
                out[name] = json.load(fh)
    with open(os.path.join(root, "results.csv")) as fh:
        out["_summary"] = fh.read()
    return out


def _checks(verdicts, experiment, names=None):
    cs = verdicts[experiment]["checks"]
    if names is not None:
        cs = [c for c in cs if any(c["test_name"].startswith(n) for n in names)]
    assert cs, "no checks selected for %s" % experiment
    return cs


def _assert_all(checks):
    bad = ["%s: statistic=%s threshold=%s" % (c["test_name"], c["statistic"], c["threshold"])
           for c in checks if not c["pass"]]
    assert not bad, "; ".join(bad)


def test_kernel_identities(verdicts):
    line = [l for l in verdicts["_summary"].splitlines() if l.startswith("kernel_identities,")]
    assert line and line[0].split(",")[2] == "1", line


def test_deterministic_limit(verdicts):
    _assert_all(_checks(verdicts, "deterministic_constant", ["deterministic_limit"])
                + _checks(verdicts, "deterministic_bump", ["deterministic_limit"]))


def test_gaussian_moments(verdicts):
    _assert_all(_checks(verdicts, "gaussian_moments", ["variance_", "fourth_central_"]))


def test_anderson_second_moment(verdicts):
    _assert_all(_checks(verdicts, "anderson_moments", ["second_moment_", "lattice_bias"]))


def test_mean_identity(verdicts):
    cs = [c for v in verdicts.values() if isinstance(v, dict)
          for c in v["checks"] if c["test_name"] == "mean_identity_z4_fraction"]
    assert len(cs) >= 5
    _assert_all(cs)


def test_comparison_principle(verdicts):
    _assert_all(_checks(verdicts, "comparison"))


def test_compact_support(verdicts):
    _assert_all(_checks(verdicts, "compact_support", ["exact_compact_support"])
                + _checks(verdicts, "deterministic_bump", ["exact_compact_support"]))


def test_localization(verdicts):
    _assert_all(_checks(verdicts, "localization"))


def test_picard_decay(verdicts):
    _assert_all(_checks(verdicts, "picard_decay"))


def test_bounded_sigma_no_intermittency(verdicts):
    _assert_all(_checks(verdicts, "bounded_lyapunov",
                        ["rate_ci_contains_zero", "below_quadratic_envelope"]))


def test_anderson_lyapunov_bounds(verdicts):
    _assert_all(_checks(verdicts, "anderson_lyapunov",
                        ["rate_in_range", "rate_below_lipschitz_bound"]))


def test_bounded_sigma_tails(verdicts):
    _assert_all(_checks(verdicts, "bounded_tails", ["tail_fit_r2"]))


def test_supremum_growth(verdicts):
    _assert_all(_checks(verdicts, "supremum"))


def test_holder_modulus(verdicts):
    _assert_all(_checks(verdicts, "holder"))


def test_verify_all_worker_determinism(tmp_path):
    runs = []
    for workers in (1, 8):
        out = tmp_path / ("w%d" % workers)
        r = subprocess.run([sys.executable, "-m", "stochwave.cli", "verify-all", "--seed", "0",
                            "--replicas", str(DETERMINISM_CAP), "--workers", str(workers),
                            "--out", str(out)], capture_output=True, text=True)
        assert r.returncode in (0, 2), r.stderr
        runs.append(out)
    a, b = runs
    assert open(a / "results.csv", "rb").read() == open(b / "results.csv", "rb").read()
    for name in os.listdir(a):
        if (a / name).is_dir():
            assert filecmp.cmp(a / name / "results.csv", b / name / "results.csv", shallow=False), name
