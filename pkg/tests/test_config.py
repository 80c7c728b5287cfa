import pytest

from lbsim.config import (
    PRESETS,
    ScenarioConfig,
    ServerSpec,
    dumps,
    from_dict,
    load,
    preset,
    save,
    to_dict,
)
from lbsim.traffic import ExponentialWorkload, TrafficModel, TwoClassWorkload


class TestPresets:
    def test_moderate_shape(self):
        cfg = preset("moderate")
        assert cfg.n_servers == 7
        assert cfg.lb_count == 2
        assert cfg.capacity() == pytest.approx(4 * 2 + 3 * 8)
        assert isinstance(cfg.traffic.workload, TwoClassWorkload)

    def test_large_shape(self):
        cfg = preset("large")
        assert cfg.n_servers == 24
        assert cfg.lb_count == 6
        assert isinstance(cfg.traffic.workload, ExponentialWorkload)
        assert cfg.episode_length == 30.0

    def test_reduced_is_small(self):
        cfg = preset("reduced")
        assert cfg.n_servers == 4
        assert cfg.control_steps() == 240

    def test_rate_tracks_utilization(self):
        lo = preset("moderate", utilization=0.5)
        hi = preset("moderate", utilization=1.0)
        assert hi.traffic.rate == pytest.approx(2.0 * lo.traffic.rate)

    def test_unknown_preset_rejected(self):
        with pytest.raises(ValueError, match="unknown preset"):
            preset("gigantic")

    def test_all_presets_validate(self):
        for name in PRESETS:
            preset(name).validate()


class TestValidation:
    def base(self, **kw):
        defaults = dict(
            servers=[ServerSpec(1.0, 2)],
            lb_count=1,
            traffic=TrafficModel(rate=1.0, workload=ExponentialWorkload(1.0), duration=1.0),
        )
        defaults.update(kw)
        return ScenarioConfig(**defaults)

    def test_needs_servers(self):
        with pytest.raises(ValueError):
            self.base(servers=[]).validate()

    def test_needs_traffic_or_trace(self):
        with pytest.raises(ValueError):
            self.base(traffic=None).validate()

    def test_trace_alone_is_fine(self):
        self.base(traffic=None, trace_path="flows.csv").validate()

    def test_bad_scope(self):
        with pytest.raises(ValueError, match="reward scope"):
            self.base(reward_scope="galactic").validate()

    def test_bad_discipline(self):
        with pytest.raises(ValueError, match="discipline"):
            self.base(servers=[ServerSpec(1.0, 2, discipline="lifo")]).validate()

    def test_sync_delay_scales_with_agents(self):
        cfg = self.base(lb_count=3, sync_base_delay=0.1, sync_per_agent_delay=0.05)
        assert cfg.sync_delay() == pytest.approx(0.1 + 3 * 0.05)


class TestTomlRoundTrip:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_preset_round_trip(self, name, tmp_path):
        cfg = preset(name)
        path = tmp_path / "scenario.toml"
        save(cfg, path)
        back = load(path)
        assert back == cfg

    def test_dict_round_trip_with_options(self):
        cfg = ScenarioConfig(
            servers=[ServerSpec(1.0, 2, "edge"), ServerSpec(2.5, 4, "core")],
            lb_count=3,
            traffic=TrafficModel(rate=7.5, workload=ExponentialWorkload(0.3), duration=12.0),
            sync_base_delay=0.2,
            sync_per_agent_delay=0.01,
            reward_scope="local",
            reservoir_capacity=500,
        )
        assert from_dict(to_dict(cfg)) == cfg

    def test_trace_path_survives(self, tmp_path):
        cfg = ScenarioConfig(
            servers=[ServerSpec(1.0, 1)], lb_count=1, trace_path="flows.csv"
        )
        path = tmp_path / "scenario.toml"
        save(cfg, path)
        assert load(path).trace_path == "flows.csv"

    def test_dumps_is_plain_toml(self):
        text = dumps(preset("reduced"))
        assert "[scenario]" in text
        assert "[[scenario.servers]]" in text
