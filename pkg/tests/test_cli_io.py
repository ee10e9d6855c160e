import csv
import json
import math

import pytest

from bbelab import cli
from bbelab.errors import ConfigError, NumericalError
from bbelab.io import Manifest, load_config, write_csv


def test_defaults_and_overrides():
    cfg = load_config(None, {"equilibrium.lambda": "0.5", "solver.eps_list": "0.4,0.2"})
    assert cfg["equilibrium.lambda"] == 0.5
    assert cfg["solver.eps_list"] == [0.4, 0.2]
    assert cfg["solver.integrator"] == "etd"


@pytest.mark.parametrize("text", ["[grid]\nbogus = 1\n", "[nope]\na = 1\n",
                                  "[grid]\nn_azimuthal = 31\n", "[solver]\nepsilon = 2\n",
                                  "[solver]\neps_list = 0.1,0.2\n"])
def test_bad_config_rejected(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_manifest_hash_stable():
    a = Manifest("x", {"k": 1}, {"grid": "abc"})
    b = Manifest("x", {"k": 1}, {"grid": "abc"})
    assert a.hash == b.hash and len(a.hash) == 16
    assert Manifest("x", {"k": 2}, {"grid": "abc"}).hash != a.hash


def test_csv_precision(tmp_path):
    path = write_csv(tmp_path / "a.csv", ["x"], [[1 / 3]], "deadbeef")
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "manifest_hash"]
    assert float(rows[1][0]) == 1 / 3


def test_cli_constants(tmp_path, capsys):
    rc = cli.main(["constants", "--lambda", "1", "--temp", "1", "--out", str(tmp_path)])
    assert rc == 0
    rep = json.load(open(tmp_path / "constants.json"))
    q = math.exp(-1)
    assert rep["constants"]["C_star"] == pytest.approx(q ** 2 * (1 - q) ** 16.5, rel=1e-14)
    man = json.load(open(tmp_path / "manifest.json"))
    assert rep["manifest_hash"] == man["manifest_hash"]


def test_cli_identities(tmp_path, capsys):
    assert cli.main(["identities", "--out", str(tmp_path)]) == 0
    assert "FAIL" not in capsys.readouterr().out


def test_cli_config_error_exit_2(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[grid]\nbogus = 1\n")
    assert cli.main(["moments", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert cli.main(["moments", "--lambda", "-1", "--out", str(tmp_path)]) == 2


def test_cli_numerical_failure_exit_1(tmp_path, monkeypatch, capsys):
    def boom(cfg, man):
        raise NumericalError("overflow", {"where": "test"})
    monkeypatch.setitem(cli.HANDLERS, "moments", boom)
    assert cli.main(["moments", "--out", str(tmp_path)]) == 1
    rec = json.load(open(tmp_path / "failure.json"))
    assert rec["error"] == "NumericalError"
