import json

import pytest

from fhe_iosim.calibration import calibrate_all
from fhe_iosim.errors import ConfigError, PresetNotFoundError
from fhe_iosim.presets import CONFIG_ENV, load_registry
from fhe_iosim.sizing import evk_bytes


def test_shipped_presets(reg):
    assert sorted(reg.profiles) == ["sharp/helr", "sharp/resnet20", "tensorfhe/helr", "tensorfhe/resnet20"]
    assert reg.get_accelerator("sharp").clock_hz == 10**9
    assert reg.get_profile("sharp/helr").iterations == 32


def test_gpu_key_size_ratio(reg):
    sharp = evk_bytes(reg.get_params("sharp"))
    ratios = [evk_bytes(reg.get_params(n)) / sharp for n in ("tensorfhe-resnet", "tensorfhe-helr")]
    assert sum(ratios) / 2 == pytest.approx(5.5, rel=0.01)


def test_unknown_preset_lists_known(reg):
    with pytest.raises(PresetNotFoundError) as info:
        reg.get_storage("tape")
    assert "hbm" in str(info.value) and "tape" in str(info.value)


def test_shipped_calibration_is_reproducible(reg):
    fresh = calibrate_all(reg)
    assert fresh["comm_volume_base_bytes"] == reg.calibration["comm_volume_base_bytes"]
    assert fresh["compute_scaling_alpha"] == pytest.approx(reg.calibration["compute_scaling_alpha"], rel=1e-12)


def test_overlay_directory(tmp_path, monkeypatch):
    (tmp_path / "storage.json").write_text(json.dumps({"cxl": {"bandwidth_bytes_per_s": 64 * 2**30}}))
    (tmp_path / "calibration.json").write_text(json.dumps({"compute_scaling_alpha": {"tensorfhe": 0.1}}))
    monkeypatch.setenv(CONFIG_ENV, str(tmp_path))
    reg = load_registry()
    assert "cxl" in reg.storage and "hbm" in reg.storage
    assert reg.calibrated_alpha("tensorfhe") == 0.1
    assert reg.calibrated_comm_volume("sharp/helr") is not None
    assert reg.origins["storage"]["cxl"].endswith("storage.json")


@pytest.mark.parametrize(
    "name, payload, needle",
    [
        ("storage.json", "{oops", "invalid JSON"),
        ("storage.json", '{"x": {"bandwidth_bytes_per_s": 1.5}}', "must be an integer"),
        ("links.json", '{"x": {"bandwidth_bytes_per_s": 0}}', "x"),
        ("accelerators.json", '{"npu": {"kind": "FPGA", "clock_hz": 1}}', "npu"),
        ("profiles.json", '{"sharp/toy": {"params": "nope"}}', "unknown params preset"),
        ("profiles.json", '{"sharp/toy": {"params": "sharp", "colour": 1}}', "unknown fields"),
    ],
)
def test_bad_overlay_names_the_file(tmp_path, name, payload, needle):
    (tmp_path / name).write_text(payload)
    with pytest.raises(ConfigError) as info:
        load_registry(str(tmp_path))
    assert needle in str(info.value)
    assert name in str(info.value)
