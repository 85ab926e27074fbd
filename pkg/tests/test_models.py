import numpy as np
import pytest

from srepcc import report
from srepcc.config import LossConfig, TinyProfile, TrainRun, apply_overrides, parse_kv, unknown_keys
from srepcc.errors import ConfigError, ShapeError
from srepcc.layers import count_parameters, load_parameters, save_parameters
from srepcc.models import (
    LAMBDAS, CodingModel, ModelConfig, available_models, build_model, load_model, original_config, save_model,
    simplified_config, table5_config, tiny_config,
)


def test_simplified_ledger():
    counts = report.subnet_counts(simplified_config())
    assert counts["analysis"] == 1_194_096
    assert counts["synthesis"] == 1_013_040
    assert counts["hyper_analysis"] == 20_768
    assert counts["hyper_mean"] == counts["hyper_scale"] == 11_056
    assert report.coding_total(counts) == 2_250_016
    assert counts["sr2"] == 71_312 and counts["sr4"] == 171_664


def test_original_ledger():
    counts = report.subnet_counts(original_config())
    assert (counts["analysis"], counts["synthesis"], counts["hyper_analysis"]) == (1_208_432, 1_127_728, 1_327_360)
    assert counts["hyper_mean"] + counts["hyper_scale"] == 1_409_792
    assert report.coding_total(counts) == 5_073_312


def test_family_and_table5():
    assert report.family_totals() == (12_464_960, 39_899_282)
    got = report.computed_ledger()
    assert got["reduction_percent"] == 69
    assert got["table5.latent_only.16"] == 3_782_848
    assert got["table5.latent_and_hyper.64"] == 2_946_976
    assert got["table5.all_channels.32"] == 514_848
    assert got["table5.all_channels.16"] == 129_168
    assert all(e == c for _, e, c in report.check_ledger())


def test_sr_branch_layout():
    specs = build_model(simplified_config())
    for sf, k in ((2, 3), (4, 5)):
        items = specs[f"sr{sf}"].items
        assert items[0].kind == "GTSpConv" and items[0].kernel == k and items[0].stride == sf
        assert items[0].in_ch == 32 and items[-1].bias is False and items[-1].activation == "sigmoid"
    assert (5 ** 3 - 3 ** 3) * 32 ** 2 == 171_664 - 71_312


def test_bias_convention():
    specs = build_model(simplified_config())
    assert specs["analysis"].items[-1].bias is False
    assert specs["synthesis"].items[-1].bias is False
    assert specs["hyper_analysis"].items[-1].bias is False
    assert specs["hyper_mean"].items[-1].bias and specs["hyper_scale"].items[-1].bias


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(16, 16, simplification="none")
    with pytest.raises(ConfigError):
        ModelConfig(16, 32, simplification="latent_and_hyper")
    with pytest.raises(ConfigError):
        ModelConfig(16, 16, (16, 16, 32), "all_channels")
    with pytest.raises(ConfigError):
        table5_config("bogus", 16)
    with pytest.raises(ConfigError):
        ModelConfig(lambda_id=5)
    cfg = tiny_config(3)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg and cfg.lam == LAMBDAS[3]
    assert LAMBDAS == (0.05, 0.025, 0.01, 0.005, 0.0025)


def test_parameter_store_round_trip(tmp_path):
    m = CodingModel(tiny_config(0), seed=3)
    m.params.round_to_f32()
    save_parameters(m.params, tmp_path / "p.srps")
    back = load_parameters(str(tmp_path / "p.srps"))
    assert set(back) == set(m.params)
    for k, v in m.params.items():
        assert np.array_equal(back[k].value, v.value)
    data = (tmp_path / "p.srps").read_bytes()
    with pytest.raises(ShapeError):
        load_parameters(data + b"\0")
    with pytest.raises(ShapeError):
        load_parameters(b"XXXX" + data[4:])


def test_model_directory(tmp_path):
    m = CodingModel(tiny_config(2), seed=1)
    m.params.round_to_f32()
    save_model(m, tmp_path, {"block_size": 32})
    assert available_models(tmp_path) == [2]
    back = load_model(tmp_path, 2)
    assert back.cfg == m.cfg
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path, 0)
    with pytest.raises(FileNotFoundError):
        load_model(tmp_path / "nope", 2)


def test_tiny_parameter_count_is_small():
    total = sum(count_parameters(s)[0] for s in build_model(tiny_config()).values())
    assert total < 300_000


def test_kv_config():
    kv = parse_kv("# comment\nepochs = 3\nlearning_rate=0.01  # trailing\n\nstage1_sfs = (1, 2)\n")
    run = apply_overrides(TrainRun(), kv)
    assert run.epochs == 3 and run.learning_rate == 0.01 and run.stage1_sfs == (1, 2)
    prof = apply_overrides(TinyProfile(), {"num_blocks": "20"})
    assert prof.num_blocks == 20
    assert unknown_keys({"epochs": 1, "bogus": 2}, TrainRun(), LossConfig()) == ["bogus"]
    with pytest.raises(ConfigError):
        parse_kv("just words")
    with pytest.raises(ConfigError):
        apply_overrides(TrainRun(), {"epochs": "many"})


def test_loss_and_run_validation():
    with pytest.raises(ConfigError):
        LossConfig(focal_alpha=1.5)
    with pytest.raises(ConfigError):
        TrainRun(stage=4)
    assert "analysis" in TrainRun(1).trainable
    assert TrainRun(2).trainable == ("sr2",)
    assert "sr4" in TrainRun(2).frozen_layers and "analysis" in TrainRun(3).frozen_layers
    assert "sr2" in TrainRun(3).frozen_layers


def test_report_tables():
    md = report.to_markdown(report.complexity_table())
    assert "12,464,960" in md and "39,899,282" in md and "68.8%" in md
    csv = report.to_csv(report.simplification_table())
    assert "129168" in csv and "514848" in csv
    rows = dict(report.subnet_table(report.profile_config("table5:all_channels:16")))
    assert rows["Coding model total (per lambda)"] == 129_168
    with pytest.raises(ConfigError):
        report.profile_config("standard")
