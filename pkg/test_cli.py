"""
Tests for run configuration and the command-line entry point

Run with: python -m pytest test_cli.py -v
"""

import json
import logging
from pathlib import Path

import pytest

import cli
import operators
from config import OUTPUT_DIR_ENV, describe_config_error, load_config, parse_config, scenario_hash
from errors import ConfigError
from experiments import get_scenario, list_scenarios

CONFIGS = Path(__file__).parent / "configs"

TINY_RUN = """\
[inline]
name = "tiny_circle"

[inline.manifold]
kind = "euclidean"

[inline.grid]
resolution = 32

[inline.initial]
name = "circle"
params = { radius = 0.5 }

[inline.solver]
t_end_seconds = 0.01
snapshot_every_seconds = 0.005

[[inline.checks]]
name = "max_principle"
"""


@pytest.fixture
def output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "runs"))
    return tmp_path / "runs"


class TestParseConfig:
    """Tests for TOML run files"""

    def test_named_scenario(self):
        """A registered name resolves to the registry entry"""
        cfg = parse_config('scenario = "euclid_shrinking_circle"\ncheckpoint_every = 100\n')
        assert cfg.checkpoint_every == 100
        assert cfg.resolve_scenario() == get_scenario("euclid_shrinking_circle")

    def test_overrides(self):
        """resolution and workers overrides reach the scenario"""
        cfg = parse_config('scenario = "euclid_shrinking_circle"\nresolution = 64\nworkers = 3\n')
        sc = cfg.resolve_scenario()
        assert sc.resolution == 64
        assert sc.solver.workers == 3

    def test_inline_scenario(self):
        """Inline tables build a scenario with config-file solver keys"""
        sc = parse_config(TINY_RUN).resolve_scenario()
        assert sc.name == "tiny_circle"
        assert sc.resolution == 32
        assert sc.solver.t_end == 0.01
        assert [c.name for c in sc.checks] == ["max_principle"]

    def test_shipped_configs_load(self):
        """Every config under configs/ except the broken one resolves"""
        for path in sorted(CONFIGS.glob("*.toml")):
            if path.name == "broken.toml":
                continue
            assert load_config(path).resolve_scenario().validate()

    def test_scenario_and_inline_exclusive(self):
        """Exactly one of scenario and [inline]"""
        with pytest.raises(ConfigError):
            parse_config('scenario = "euclid_shrinking_circle"\n' + TINY_RUN)
        with pytest.raises(ConfigError):
            parse_config('output_dir = "./runs"\n')

    def test_unknown_key_located(self):
        """Unknown keys are named with their line"""
        with pytest.raises(ConfigError) as info:
            parse_config('scenario = "euclid_shrinking_circle"\nresolutoin = 64\n', "run.toml")
        assert info.value.key == "resolutoin"
        assert info.value.line == 2

    def test_toml_syntax_error(self):
        """Syntax errors carry line information"""
        with pytest.raises(ConfigError) as info:
            parse_config('scenario = "euclid_shrinking_circle"\noutput_dir = \n', "bad.toml")
        assert info.value.line == 2
        assert "invalid TOML" in str(info.value)

    def test_unknown_scenario(self):
        """Registry misses surface on resolve"""
        with pytest.raises(ConfigError) as info:
            parse_config('scenario = "nope"\n').resolve_scenario()
        assert info.value.key == "scenario"

    def test_log_level_checked(self):
        """log_level accepts known levels in any case"""
        assert parse_config('scenario = "euclid_shrinking_circle"\nlog_level = "debug"\n').log_level == "DEBUG"
        with pytest.raises(ConfigError):
            parse_config('scenario = "euclid_shrinking_circle"\nlog_level = "LOUD"\n')

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        """LEVELSET_OUTPUT_DIR overrides output_dir"""
        monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path))
        cfg = parse_config('scenario = "euclid_shrinking_circle"\noutput_dir = "./elsewhere"\n')
        assert cfg.output_dir == tmp_path

    def test_output_dir_from_env_file(self, tmp_path, monkeypatch):
        """A .env file can supply the output directory"""
        monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
        env = tmp_path / ".env"
        env.write_text(f"{OUTPUT_DIR_ENV}={tmp_path / 'from_env'}\n")
        run = tmp_path / "run.toml"
        run.write_text('scenario = "euclid_shrinking_circle"\n')
        cfg = load_config(run, env_file=env)
        monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
        assert cfg.output_dir == tmp_path / "from_env"

    def test_missing_file(self, tmp_path):
        """Unreadable files are configuration errors"""
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.toml")

    def test_describe_config_error(self):
        """Diagnostics read path:line:column: error: message"""
        error = ConfigError("run.toml: invalid value for key 'x': bad", key="x", line=3, column=5)
        assert describe_config_error(error, "run.toml") == "run.toml:3:5: error: invalid value for key 'x': bad"
        assert describe_config_error(ConfigError("bad")) == "error: bad"


class TestScenarioHash:
    """Tests for configuration hashes"""

    def test_hash_is_stable(self):
        """The same scenario hashes the same"""
        sc = get_scenario("hyperboloid_stationary_equator")
        assert scenario_hash(sc) == scenario_hash(get_scenario("hyperboloid_stationary_equator"))
        assert len(scenario_hash(sc)) == 64

    def test_workers_excluded(self):
        """Worker count does not change the hash; resolution does"""
        sc = get_scenario("euclid_shrinking_circle")
        assert scenario_hash(sc.with_workers(4)) == scenario_hash(sc)
        assert scenario_hash(sc.with_resolution(64)) != scenario_hash(sc)

    def test_distinct_scenarios(self):
        """Every registered scenario has its own hash"""
        hashes = {scenario_hash(sc) for sc in list_scenarios()}
        assert len(hashes) == len(list_scenarios())


class TestCommands:
    """Tests for the cli subcommands and exit codes"""

    def test_list(self, capsys):
        """list prints one line per scenario"""
        assert cli.main(["list"]) == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == len(list_scenarios())
        assert len(lines) >= 8
        assert any(line.startswith("euclid_shrinking_circle") for line in lines)

    def test_validate(self, capsys):
        """A good config validates"""
        assert cli.main(["validate", str(CONFIGS / "euclid_shrinking_circle.toml")]) == cli.EXIT_OK
        assert "scenario=euclid_shrinking_circle" in capsys.readouterr().out

    def test_broken_config(self, capsys):
        """The broken config names the key and its line on stderr"""
        assert cli.main(["validate", str(CONFIGS / "broken.toml")]) == cli.EXIT_ERROR
        err = capsys.readouterr().err
        assert "inline.operator.kind" in err
        assert "broken.toml:14" in err

    def test_syntax_error_exit(self, tmp_path, capsys):
        """Malformed TOML exits 1 with a located diagnostic"""
        path = tmp_path / "bad.toml"
        path.write_text('scenario = "euclid_shrinking_circle"\n[inline\n')
        assert cli.main(["validate", str(path)]) == cli.EXIT_ERROR
        assert "bad.toml:2" in capsys.readouterr().err

    def test_both_sections_exit(self, tmp_path):
        """scenario together with [inline] is refused"""
        path = tmp_path / "both.toml"
        path.write_text('scenario = "euclid_shrinking_circle"\n' + TINY_RUN)
        assert cli.main(["validate", str(path)]) == cli.EXIT_ERROR

    def test_run_inline(self, tmp_path, output_dir, capsys):
        """An inline run passes and leaves its artifacts and ledger behind"""
        path = tmp_path / "tiny.toml"
        path.write_text(TINY_RUN)
        assert cli.main(["run", str(path)]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "tiny_circle: passed" in out
        assert "[PASS] max_principle" in out
        report = json.loads((output_dir / "tiny_circle" / "report.json").read_text())
        assert report["passed"] is True
        assert (output_dir / "ledger.db").exists()

    def test_run_failing_check(self, tmp_path, output_dir):
        """A failed check exits 2"""
        path = tmp_path / "strict.toml"
        path.write_text(TINY_RUN + '\n[[inline.checks]]\nname = "radius_trajectory"\ntolerance = 1e-12\n'
                                   'params = { until = 0.01 }\n')
        assert cli.main(["run", str(path)]) == cli.EXIT_CHECK_FAILED

    def test_props(self, tmp_path, monkeypatch, capsys):
        """props writes a property report and exits 0 when every suite passes"""
        small = {"elliptic": 20, "geometric": 20, "translation": 5, "codim": 20}
        monkeypatch.setattr(cli, "property_suite", lambda seed: operators.property_suite(seed=seed, trials=small))
        target = tmp_path / "props.json"
        assert cli.main(["--seed", "3", "props", "--output", str(target)]) == cli.EXIT_OK
        document = json.loads(target.read_text())
        assert document["seed"] == 3
        assert document["passed"] is True
        assert len(document["reports"]) == 5
        assert "property report" in capsys.readouterr().out


class TestLogging:
    """Tests for console logging setup"""

    def test_setup_logging(self):
        """One coloured handler at the requested level"""
        root = logging.getLogger()
        saved = (root.handlers[:], root.level)
        try:
            cli.setup_logging("warning")
            assert len(root.handlers) == 1
            assert root.level == logging.WARNING
            assert type(root.handlers[0].formatter).__name__ == "ColoredFormatter"
        finally:
            root.handlers[:] = saved[0]
            root.setLevel(saved[1])
