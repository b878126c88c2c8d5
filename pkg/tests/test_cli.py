import json

import pytest

from fermipolaron.cli import ConfigError, blob_hash, main, parse_config, parse_config_text, parse_grid
from fermipolaron.lattice import build_fermi_ball
from fermipolaron.patches import default_M


def test_patches_defaults_and_meta(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["patches", "--kF", "10", "--out", str(out)]) == 0
    side = json.loads((tmp_path / "p.csv.meta.json").read_text())
    params = side["parameters"]
    assert params["M_used"] == default_M(build_fermi_ball(10.0).N)
    assert params["delta"] == pytest.approx(2.0 / 15.0)
    assert side["output"]["blob"] == blob_hash(out.read_bytes())
    assert "lambda" not in params and "seed" not in params


@pytest.mark.parametrize("args", [
    ["patches", "--kF", "8"],
    ["eta", "--kF", "8", "--grid", "0:0.5:11"],
    ["floor", "--kF", "8", "--lambda", "0.5"],
    ["simulate", "--kF", "1", "--sector", "cutoff:2", "--mode", "thm2", "--model", "oracle",
     "--grid", "0:0.5:3"],
])
def test_outputs_are_byte_identical(tmp_path, args):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    ma = json.loads((tmp_path / "a.csv.meta.json").read_text())
    mb = json.loads((tmp_path / "b.csv.meta.json").read_text())
    ma["output"].pop("path"), mb["output"].pop("path")
    assert ma == mb


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# comment\nkF = 6\nlambda = 0.5\n")
    c = parse_config(cfg, {"lambda": "0.25"}, "eta")
    assert c["kF"] == 6.0 and c.lam == 0.25
    assert c.sources["kF"].endswith(":2") and c.sources["lambda"] == "flag"
    out = tmp_path / "e.csv"
    assert main(["eta", "--config", str(cfg), "--out", str(out)]) == 0
    side = json.loads((tmp_path / "e.csv.meta.json").read_text())
    assert side["inputs"]["config"] == blob_hash(cfg.read_bytes())


def test_config_errors(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("kF = 5\nbogus = 1\n")
    assert main(["eta", "--config", str(cfg)]) == 2
    assert "bad.cfg:2" in capsys.readouterr().err
    with pytest.raises(ConfigError, match=":1:"):
        parse_config_text("kF 5")
    with pytest.raises(ConfigError):
        parse_config(None, {"kF": "x"}, "eta")
    with pytest.raises(ConfigError):
        parse_config(None, {}, "eta")
    with pytest.raises(ConfigError):
        parse_config(None, {"kF": "5", "M": "3"}, "eta")
    with pytest.raises(ConfigError):
        parse_config(None, {"kF": "5", "delta": "0.5"}, "eta")
    assert main(["simulate", "--kF", "1", "--mode", "wrong"]) == 2
    assert main(["bogus"]) == 2
    assert main(["eta"]) == 2


def test_grid_parsing():
    assert list(parse_grid("0:1:3")) == [0.0, 0.5, 1.0]
    assert list(parse_grid("0.1,0.2")) == [0.1, 0.2]
    for bad in ("1:0:3", "0.2,0.1", "a:b:c", "0:1:0"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_verify_command(tmp_path, capsys):
    out = tmp_path / "v.jsonl"
    assert main(["verify", "--suite", "elin,ebos", "--trials", "2", "--seed", "5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert [json.loads(x)["suite"] for x in lines] == ["elin", "ebos"]
    assert main(["verify", "--suite", "nope"]) == 2


def test_blob_hash_matches_git():
    # git hash-object of an empty file
    assert blob_hash(b"") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391"
