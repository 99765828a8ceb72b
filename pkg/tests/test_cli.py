import json

import numpy as np
import pytest

from qmarginal.cli import (
    EXIT_INPUT,
    InstanceFile,
    decode_matrix,
    encode_matrix,
    fixture_path,
    load_instance,
    localham_file,
    main,
    serialize_instance,
    to_consistency,
    to_localham,
)
from qmarginal.localham import LocalHamInstance, classify_exact, ground_energy_exact
from qmarginal.qmatrix import operator_norm, random_hermitian
from qmarginal.verdict import Verdict

FIXTURES = [
    "bell_triple",
    "ghz_marginals",
    "gibbs_fig51",
    "nrep_planted",
    "planted_2local",
    "planted_2local_no",
    "planted_consistency",
    "stoquastic_minus_x",
]


def run_json(capsys, *argv):
    code = main([*argv, "--json"])
    out = capsys.readouterr().out
    return code, json.loads(out)


# --------------------------------------------------------------- file format


@pytest.mark.parametrize("name", FIXTURES)
def test_fixture_round_trip(name, tmp_path):
    first = load_instance(f"fixture:{name}")
    text = serialize_instance(first)
    path = tmp_path / f"{name}.json"
    path.write_text(text)
    second = load_instance(str(path))
    assert second == first
    assert serialize_instance(second) == text


def test_matrix_encoding_round_trip(rng):
    a = random_hermitian(4, rng)
    assert np.array_equal(decode_matrix(encode_matrix(a)), a)


def test_floats_keep_seventeen_digits(tmp_path):
    h = np.array([[1 / 3, 0], [0, -1 / 3]])
    inst = LocalHamInstance(1, (((1,), h),), -0.1234567890123456789, 0.5)
    text = serialize_instance(localham_file(inst))
    back = to_localham(InstanceFile.model_validate(json.loads(text)))
    assert back.a == inst.a
    assert np.array_equal(back.terms[0][1], inst.terms[0][1])


def test_fixture_path_points_into_package():
    assert fixture_path("bell_triple").is_file()


# ------------------------------------------------------------ input errors


def test_invalid_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "kind": "consistency",\n  "n": 2,,\n}')
    assert main(["consistency", str(path)]) == EXIT_INPUT
    assert "line 3" in capsys.readouterr().err


def test_non_hermitian_matrix_reports_field(tmp_path, capsys):
    doc = {"kind": "consistency", "n": 1, "marginals": [{"subset": [1], "matrix": [[[1, 0], [1, 0]], [[0, 0], [0, 0]]]}]}
    path = tmp_path / "nh.json"
    path.write_text(json.dumps(doc))
    assert main(["consistency", str(path)]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "field marginals.0" in err and "Hermitian" in err


@pytest.mark.parametrize(
    "doc, message",
    [
        ({"kind": "localham", "n": 2, "terms": []}, "requires fields"),
        ({"kind": "consistency", "n": 1, "marginals": [], "colour": 1}, "colour"),
        ({"kind": "consistency", "n": 1, "marginals": [{"subset": [2], "matrix": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]]}]}, "exceeds"),
        ({"kind": "gibbs", "observables": [{"pauli": "Q"}], "targets": [0.1]}, "pauli"),
    ],
)
def test_schema_violations(doc, message, tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["consistency", str(path)]) == EXIT_INPUT
    assert message in capsys.readouterr().err


def test_wrong_kind_and_missing_file(capsys):
    assert main(["nrep", "fixture:bell_triple"]) == EXIT_INPUT
    assert "expected an instance of kind 'nrep'" in capsys.readouterr().err
    assert main(["consistency", "/nonexistent/instance.json"]) == EXIT_INPUT


# ---------------------------------------------------------------- commands


def test_consistency_bell_triple_is_no(capsys):
    code, report = run_json(capsys, "consistency", "fixture:bell_triple")
    assert code == 1
    assert report["verdict"] == "NO"
    assert report["residuals"]["certified_lower_bound"] > 0


@pytest.mark.parametrize("name", ["planted_consistency", "ghz_marginals"])
def test_consistency_yes_fixtures(name, capsys):
    code, report = run_json(capsys, "consistency", f"fixture:{name}")
    assert code == 0 and report["verdict"] == "YES"


def test_text_report_lists_sections(capsys):
    assert main(["consistency", "fixture:bell_triple"]) == 1
    out = capsys.readouterr().out
    assert out.startswith("verdict: NO")
    assert "wall_time:" in out


def test_gibbs_fig51_fixture(capsys):
    code, report = run_json(capsys, "gibbs", "fixture:gibbs_fig51")
    assert code == 0
    assert report["residuals"]["residual"] < 1e-6
    assert report["extra"]["status"] == "CONVERGED"
    assert len(report["extra"]["theta"]) == 2


def test_gibbs_on_consistency_file(capsys):
    code, report = run_json(capsys, "gibbs", "fixture:planted_consistency")
    assert code == 0
    assert report["residuals"]["marginal_trace_distance"] < 1e-6


def test_nrep_fixture(capsys):
    code, report = run_json(capsys, "nrep", "fixture:nrep_planted")
    assert code == 0 and report["verdict"] == "YES"


@pytest.mark.parametrize("name, expected", [("planted_2local", 0), ("planted_2local_no", 1), ("stoquastic_minus_x", 0)])
def test_localham_exact(name, expected, capsys):
    code, report = run_json(capsys, "localham", f"fixture:{name}")
    assert code == expected
    inst = to_localham(load_instance(f"fixture:{name}"))
    assert report["verdict"] == classify_exact(inst).value


def _single_qubit_file(seed, yes, tmp_path):
    g = np.random.default_rng(seed)
    h = random_hermitian(2, g)
    h = 0.6 * h / operator_norm(h)
    inst = LocalHamInstance(1, (((1,), h),), -5.0, 5.0)
    e0 = ground_energy_exact(inst)
    a = e0 + 0.05 if yes else e0 - 0.25
    path = tmp_path / f"lh{seed}.json"
    path.write_text(serialize_instance(localham_file(inst.with_thresholds(a, a + 0.2))))
    return path


@pytest.mark.parametrize("seed, yes", [(0, True), (2, True), (4, True), (1, False), (3, False)])
def test_localham_routes_never_disagree(seed, yes, tmp_path):
    path = _single_qubit_file(seed, yes, tmp_path)
    exact = main(["localham", str(path), "--via", "exact"])
    oracle = main(["localham", str(path), "--via", "consistency-oracle", "--seconds", "2"])
    assert exact == (0 if yes else 1)
    # the oracle route may run out of budget but never contradicts the exact route
    assert oracle in (exact, Verdict.UNDECIDED.exit_code)
    if yes:
        assert oracle == exact


def test_reduce_lh2c_emits_consistency_instance(tmp_path, capsys):
    out = tmp_path / "emitted.json"
    code = main(["reduce", "fixture:planted_2local", "--direction", "lh2c", "--emit", str(out)])
    assert code == 0
    emitted = load_instance(str(out))
    assert emitted.kind == "consistency"
    # marginals of a ground state are consistent by construction
    assert main(["consistency", str(out)]) == 0
    capsys.readouterr()


def test_reduce_lh2c_stoquastic(capsys):
    code = main(["reduce", "fixture:stoquastic_minus_x", "--direction", "lh2c"])
    out = capsys.readouterr().out
    assert code == 0
    assert '"kind": "stoquastic"' in out


@pytest.mark.parametrize("name, expected", [("bell_triple", 1), ("planted_consistency", 0)])
def test_reduce_c2lh_dense(name, expected, tmp_path, capsys):
    out = tmp_path / "ham.json"
    code = main(["reduce", f"fixture:{name}", "--direction", "c2lh", "--emit", str(out)])
    assert code == expected
    ham = to_localham(load_instance(str(out)))
    assert ham.n == to_consistency(load_instance(f"fixture:{name}")).n
    capsys.readouterr()


def test_verify_is_deterministic(capsys):
    first = run_json(capsys, "verify", "fixture:planted_consistency", "--trials", "2000", "--seed", "5")
    second = run_json(capsys, "verify", "fixture:planted_consistency", "--trials", "2000", "--seed", "5")
    assert first[0] == second[0] == 0
    assert first[1]["residuals"] == second[1]["residuals"]
    assert first[1]["precision"]["registers"] == first[1]["precision"]["protocol_registers"]


def test_verify_with_few_registers_rejects(capsys):
    code, report = run_json(capsys, "verify", "fixture:planted_consistency", "--trials", "2000", "--registers", "10")
    # ten registers cannot estimate expectations to within eps
    assert code == 1
    assert report["precision"]["registers"] == 10
