import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughdrift.config import DriftConfig, ExperimentConfig, LagWindow, LatticeConfig, ScheduleConfig
from roughdrift.errors import ConfigurationError, HypothesisGateError

configs = st.builds(
    ExperimentConfig,
    name=st.text(st.characters(min_codepoint=32, max_codepoint=126), max_size=12),
    hurst=st.floats(0.05, 0.5, exclude_max=True),
    n_steps=st.sampled_from([64, 256, 1024]),
    lattice=st.builds(LatticeConfig, half_width=st.floats(1.0, 50.0), points=st.sampled_from([256, 4096])),
    epsilon=st.floats(1e-6, 1.0),
    m_values=st.lists(st.floats(2.0, 8.0), min_size=1, max_size=3),
    lags=st.builds(LagWindow, k_min=st.integers(1, 3), k_max=st.integers(5, 10)),
    n_paths=st.integers(1, 10**5),
    master_seed=st.integers(0, 2**32 - 1),
    suites=st.lists(st.sampled_from(["moments", "regularization", "sewing", "tightness", "stability"]),
                    min_size=1, max_size=3, unique=True),
)


class TestRoundTrip:
    @given(cfg=configs)
    @settings(max_examples=40, deadline=None)
    def test_yaml_roundtrip(self, cfg):
        again = ExperimentConfig.from_yaml(cfg.to_yaml())
        assert again == cfg
        assert again.config_hash() == cfg.config_hash()

    def test_file_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(name="x", hurst=0.25, x0=[0.5])
        cfg.save(tmp_path / "c.yaml")
        assert ExperimentConfig.load(tmp_path / "c.yaml") == cfg

    def test_hash_changes_with_content(self):
        a = ExperimentConfig()
        b = ExperimentConfig(master_seed=1)
        assert a.config_hash() != b.config_hash()
        assert len(a.config_hash()) == 64

    def test_nested_dicts(self):
        cfg = ExperimentConfig.from_dict({"lattice": {"half_width": 5.0, "points": 256}, "drift": {"kind": "zero"}})
        assert isinstance(cfg.lattice, LatticeConfig) and cfg.lattice.points == 256


class TestValidation:
    def test_gate_message(self):
        with pytest.raises(HypothesisGateError, match=r"beta=-3 requires H<1/6, got H=0.3"):
            ExperimentConfig(drift=DriftConfig(declared_beta=-3.0))

    @pytest.mark.parametrize("kwargs", [
        dict(hurst=0.6),
        dict(hurst=0.0),
        dict(n_steps=1),
        dict(n_paths=0),
        dict(suites=["bogus"]),
        dict(suites=[]),
        dict(x0=[0.0, 0.0]),
    ])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(**kwargs)

    def test_flagship_gate(self):
        with pytest.raises(HypothesisGateError, match="H < 1/\\(2d\\)"):
            ExperimentConfig(dim=2, hurst=0.3, suites=["flagship"], drift=DriftConfig(declared_beta=-1.0))

    def test_unknown_keys(self):
        with pytest.raises(ConfigurationError, match="unknown"):
            ExperimentConfig.from_dict({"hurts": 0.3})
        with pytest.raises(ConfigurationError, match="unknown"):
            ExperimentConfig.from_dict({"lattice": {"width": 3}})

    @pytest.mark.parametrize("text", ["[1, 2]", "hurst: [", "- a"])
    def test_malformed_yaml(self, text):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_yaml(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="cannot read"):
            ExperimentConfig.load(tmp_path / "nope.yaml")


class TestDriftConfig:
    def test_atoms(self):
        spec = DriftConfig(kind="atoms", locations=[[0.0, 1.0]], weights=[[1.0, 1.0]]).build(2)
        assert spec.dim == 2 and spec.declared_beta == -2.0

    def test_atoms_need_data(self):
        with pytest.raises(ConfigurationError):
            DriftConfig(kind="atoms").build(1)

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            DriftConfig(kind="atoms", locations=[[0.0, 1.0]], weights=[[1.0, 1.0]]).build(1)

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            DriftConfig(kind="levy").build(1)

    def test_schedule(self):
        s = ScheduleConfig(kernel="bump", scales=[0.5, 0.25]).build()
        assert s.kernel == "bump" and s.scales == (0.5, 0.25)
