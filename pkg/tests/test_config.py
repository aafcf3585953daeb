"""Test RunConfig resolution: defaults, config files and flags."""
import json
import logging

import pytest

from qlaplab.base import ConfigError
from qlaplab.config import (
    CONFIG_ENV, DEFAULT_OUTPUT_DIR, DEFAULT_TOLERANCES, OUTPUT_ENV, RunConfig,
    load_config_file, parse_config,
)
from qlaplab.cli import build_parser

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)
    monkeypatch.delenv(OUTPUT_ENV, raising=False)


@pytest.fixture
def config_file(tmp_path):
    def write(data):
        path = tmp_path / "qlaplab.json"
        path.write_text(json.dumps(data))
        return str(path)
    return write


def parse_flags(*argv):
    return parse_config(build_parser().parse_args(list(argv)))


class TestParseConfig:
    """Flag grammar and precedence."""

    def test_fubini_study_level(self):
        cfg = parse_flags("gram", "--geom", "fs", "--m", "8")
        assert cfg.geometry == "fs"
        assert cfg.m == 8
        assert cfg.kahler().is_fubini_study
        assert cfg.m_list == (16, 24, 32, 48, 64)
        assert cfg.tolerances == DEFAULT_TOLERANCES

    def test_perturbed_ladder(self):
        cfg = parse_flags("expansion", "--geom", "fs+0.1*u1", "--m-list", "16,24")
        K = cfg.kahler()
        assert K.epsilon == pytest.approx(0.1)
        assert K.psi.expression == "u1"
        assert cfg.m_list == (16, 24)

    def test_epsilon_beyond_bound(self):
        with pytest.raises(ConfigError, match="validity bound"):
            parse_flags("gram", "--geom", "fs+0.9*u1")

    def test_malformed_geometry(self):
        with pytest.raises(ConfigError):
            parse_config({"geom": "sphere"})

    def test_flags_override_file(self, config_file):
        path = config_file({"m": 12, "geometry": "fs+0.05*u2", "seed": 3})
        cfg = parse_config({"m": 4, "config": path})
        assert cfg.m == 4
        assert cfg.geometry == "fs+0.05*u2"
        assert cfg.seed == 3

    def test_env_config_file(self, config_file, monkeypatch):
        monkeypatch.setenv(CONFIG_ENV, config_file({"workers": 3}))
        assert parse_config().workers == 3

    def test_missing_env_file_uses_defaults(self, tmp_path, monkeypatch):
        monkeypatch.setenv(CONFIG_ENV, str(tmp_path / "absent.json"))
        assert parse_config() == RunConfig()

    def test_missing_explicit_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config_file(str(tmp_path / "absent.json"))

    def test_unknown_key(self, config_file):
        with pytest.raises(ConfigError, match="Unknown configuration keys"):
            parse_config({"config": config_file({"m": 4, "colour": "blue"})})

    def test_switch_left_off_keeps_file_value(self, config_file):
        cfg = parse_config({"dump_gram": False, "config": config_file({"dump_gram": True})})
        assert cfg.dump_gram is True

    def test_bad_flag(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["gram", "--no-such-flag"])


class TestRunConfig:
    """Validation and the canonical form."""

    def test_canonical_round_trip(self):
        cfg = RunConfig(geometry="fs-0.05*u3", m_list=(8, 12, 16), holdout=None,
                        tolerances={**DEFAULT_TOLERANCES, "p1": 0.07}, formats=("json",))
        text = cfg.canonical()
        assert RunConfig.from_canonical(text) == cfg
        assert RunConfig.from_canonical(text).canonical() == text
        assert json.loads(text)["m_list"] == [8, 12, 16]

    def test_tolerance_overrides(self):
        cfg = parse_config({"tol": ["p0=0.03", "kernel = 1e-7"]})
        assert cfg.tolerance("p0") == 0.03
        assert cfg.tolerance("kernel") == 1e-7
        assert cfg.tolerance("p1") == DEFAULT_TOLERANCES["p1"]

    @pytest.mark.parametrize("item", ["p0", "p0=abc", "bogus=1", "p0=-1", "p0=0"])
    def test_bad_tolerance(self, item):
        with pytest.raises(ConfigError):
            parse_config({"tol": [item]})

    @pytest.mark.parametrize("m_list", ["24,16", "16,16", "0,8", "8,x"])
    def test_bad_ladder(self, m_list):
        with pytest.raises(ConfigError):
            parse_config({"m_list": m_list})

    def test_holdout_not_in_ladder(self):
        with pytest.raises(ConfigError, match="Held-out"):
            RunConfig(m_list=(8, 16, 32), holdout=16)

    @pytest.mark.parametrize("field, value", [
        ("m", 0), ("workers", 0), ("dense_cap", 0), ("ns", -1),
        ("formats", ("xml",)), ("target", "spectrum"), ("f", "u7"),
    ])
    def test_invalid_field(self, field, value):
        with pytest.raises(ConfigError):
            RunConfig(**{field: value})

    def test_output_dir_from_env(self, monkeypatch, tmp_path):
        assert RunConfig().output_dir == DEFAULT_OUTPUT_DIR
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
        assert RunConfig().output_dir == str(tmp_path)

    def test_reference_geometry(self):
        cfg = RunConfig()
        assert cfg.reference_kahler().spec == "fs+0.1*u1"
        assert cfg.function().expression == "u1"
