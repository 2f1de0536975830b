import pytest

from branchmlmc.cli import EXIT_CONFIG, EXIT_OK, EXIT_UNCONVERGED, main
from branchmlmc.config import ConfigError, parse_config, parse_levels


def test_defaults():
    cfg = parse_config("", env={})
    assert cfg["model"] == "gbm" and cfg["scheme"] == "euler"
    assert cfg["branch.eta"] == 1.0 and cfg["branch.tau0"] == 0.5
    assert cfg["mlmc.M"] == 2 and cfg["mlmc.h0"] == 0.5 and cfg["gbm.d"] == 1
    assert cfg.seed == 0


def test_override_precedence():
    cfg = parse_config("branch.eta = 1\n", {"branch.eta": "1.5"}, env={})
    assert cfg["branch.eta"] == 1.5


def test_value_syntax():
    cfg = parse_config("branch.eta = 4/3  # comment\nstudy.h = 2^-8\nstudy.levels = 3..5\n", env={})
    assert cfg["branch.eta"] == pytest.approx(4 / 3)
    assert cfg["study.h"] == 2**-8
    assert cfg["study.levels"] == (3, 4, 5)
    assert parse_levels("2, 4 6") == (2, 4, 6)


@pytest.mark.parametrize("text,needle", [
    ("scheme = antithetic-cc\n", "incompatible with model = gbm"),
    ("model = clark-cameron\nscheme = antithetic-cc\nbranch.align = split\n", "branch.align"),
    ("model = clark-cameron\nscheme = milstein\n", "milstein"),
    ("\n\nbogus.key = 1\n", "line 3"),
    ("branch.eta 2\n", "line 1"),
    ("branch.tau0 = 1.5\n", "tau0"),
    ("payoff.set = cc-corner\n", "d = 2"),
])
def test_rejections(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text, env={})


def test_seed_from_environment():
    assert parse_config("", env={"MLMC_BRANCH_SEED": "42"}).seed == 42
    assert parse_config("seed = 7\n", env={"MLMC_BRANCH_SEED": "42"}).seed == 7
    with pytest.raises(ConfigError):
        parse_config("", env={"MLMC_BRANCH_SEED": "x"})


def test_exit_codes(tmp_path, capsys):
    assert main(["price", "--scheme", "antithetic-cc"]) == EXIT_CONFIG
    assert main(["nope"]) == EXIT_CONFIG
    assert main(["price", "--config", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert main(["price", "--eps", "0.0001", "--max-level", "2", "--warmup", "200", "--threads", "1",
                 "--quiet"]) == EXIT_UNCONVERGED
    capsys.readouterr()


def test_price_summary(capsys):
    assert main(["price", "--eps", "0.02", "--scheme", "milstein", "--warmup", "2000", "--seed", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    est = float(out.split()[1])
    assert abs(est - 0.4403823076297575) < 3 * 0.02
    assert "total work" in out and "levels" in out


def test_variance_csv_rows_and_thread_independence(tmp_path, capsys):
    paths = []
    for t in (1, 2, 8):
        d = tmp_path / f"t{t}"
        argv = ["study", "variance", "--levels", "2..9", "--n", "1000", "--threads", str(t),
                "--out", str(d), "--quiet"]
        assert main(argv) == EXIT_OK
        paths.append(d / "variance.csv")
    texts = [p.read_bytes() for p in paths]
    assert texts[0] == texts[1] == texts[2]
    rows = [l for l in texts[0].decode().splitlines() if not l.startswith("#")]
    assert rows[0].startswith("abscissa,statistic,stderr,n,")
    assert len(rows) == 1 + 8
    assert main(["study", "variance", "--no-branching"]) == EXIT_CONFIG
    capsys.readouterr()


def test_work_study_cli(tmp_path, capsys):
    assert main(["study", "work", "--levels", "0..6", "--out", str(tmp_path)]) == EXIT_OK
    body = (tmp_path / "work.csv").read_text().splitlines()
    stats = [float(l.split(",")[1]) for l in body if l[0].isdigit()]
    assert stats == [2, 6, 16, 40, 96, 224, 512]
    assert "7 rows" in capsys.readouterr().out


def test_bad_study_h(tmp_path):
    assert main(["study", "tau", "--h", "0.3", "--out", str(tmp_path), "--quiet"]) == EXIT_CONFIG


def test_selftest_exit_zero(capsys):
    assert main(["selftest", "--threads", "1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "8/8 checks passed" in out
