"""Console entry point: stage subcommands chained over a phantom image."""

import json

import numpy as np
import pytest

from phantoms import ellipse_mask, phantom_image
from lesionseg.cli import main
from lesionseg.fusion import PromptSpec
from lesionseg.image import (
    load_mask_png,
    load_png,
    load_regions_json,
    save_image_png,
    save_mask_png,
    write_tensor,
)
from lesionseg.providers import MockProvider


@pytest.fixture
def phantom(tmp_path):
    lesion = ellipse_mask(64, 64, (30, 32), (8, 11))
    img = phantom_image(lesion, noise=0.04, seed=2)
    img_path = tmp_path / "img.png"
    save_image_png(img, img_path)
    save_mask_png(lesion, tmp_path / "gt.png")
    return img_path, lesion


def test_enhance_stage(phantom, tmp_path):
    img_path, _ = phantom
    out = tmp_path / "enh.png"
    assert main(["enhance", str(img_path), str(out), "--alpha", "5", "--stride", "1"]) == 0
    enhanced = load_png(out)
    assert enhanced.shape == (64, 64)


def test_morphseg_stage(phantom, tmp_path, capsys):
    img_path, lesion = phantom
    regions_path = tmp_path / "regions.json"
    labels_path = tmp_path / "labels.png"
    code = main(
        [
            "morphseg",
            str(img_path),
            "--k", "2",
            "--threshold", "90",
            "--seed", "0",
            "--stride", "1",
            "--regions", str(regions_path),
            "--labels", str(labels_path),
        ]
    )
    assert code == 0
    regions, w, h = load_regions_json(regions_path)
    assert (w, h) == (64, 64)
    assert regions
    assert load_png(labels_path).shape == (64, 64)
    assert "candidate region" in capsys.readouterr().out


def test_camloc_fuse_refine_eval_chain(phantom, tmp_path):
    img_path, lesion = phantom

    # morph candidates
    morph_json = tmp_path / "morph.json"
    main(["morphseg", str(img_path), "--stride", "1", "--regions", str(morph_json)])

    # CAM tensors from the mock provider
    mock = MockProvider({"img": lesion}, feature_size=32, blur_sigma=1.5)
    activations, gradients = mock.cam_tensors("img")
    write_tensor(activations, tmp_path / "a.ten")
    write_tensor(gradients, tmp_path / "g.ten")
    cam_json = tmp_path / "cam.json"
    heat_png = tmp_path / "heat.png"
    code = main(
        [
            "camloc",
            "--activations", str(tmp_path / "a.ten"),
            "--gradients", str(tmp_path / "g.ten"),
            "--threshold", "200",
            "--width", "64",
            "--height", "64",
            "--out", str(heat_png),
            "--regions", str(cam_json),
        ]
    )
    assert code == 0
    assert load_png(heat_png).shape == (64, 64)

    # fusion -> prompt
    prompt_json = tmp_path / "prompt.json"
    fused_json = tmp_path / "fused.json"
    code = main(
        [
            "fuse",
            "--morph", str(morph_json),
            "--cam", str(cam_json),
            "--prompt-kind", "box",
            "--seed", "3",
            "--image-id", "img",
            "--out", str(prompt_json),
            "--fused", str(fused_json),
        ]
    )
    assert code == 0
    prompt = PromptSpec.from_dict(json.loads(prompt_json.read_text()))
    assert prompt.kind == "box" and prompt.image_id == "img"
    fused_regions, _, _ = load_regions_json(fused_json)
    assert len(fused_regions) == 1

    # segmenter output with a hole; refine fills it
    sam = lesion.copy()
    sam[30:32, 32:34] = False
    sam_png = tmp_path / "sam.png"
    save_mask_png(sam, sam_png)
    final_png = tmp_path / "final.png"
    report_json = tmp_path / "refine.json"
    code = main(
        [
            "refine",
            "--mask", str(sam_png),
            "--fallback", str(fused_json),
            "--out", str(final_png),
            "--report", str(report_json),
        ]
    )
    assert code == 0
    final = load_mask_png(final_png)
    assert np.array_equal(final, lesion)
    payload = json.loads(report_json.read_text())
    assert payload["holes_filled"] == 1 and payload["used_fallback"] is False

    # empty segmenter mask falls back to the fused region
    save_mask_png(np.zeros((64, 64), dtype=bool), sam_png)
    code = main(
        [
            "refine",
            "--mask", str(sam_png),
            "--fallback", str(fused_json),
            "--out", str(final_png),
            "--report", str(report_json),
        ]
    )
    assert code == 0
    assert json.loads(report_json.read_text())["used_fallback"] is True
    assert load_mask_png(final_png).any()

    # evaluation over directories
    pred_dir = tmp_path / "pred"
    gt_dir = tmp_path / "gt"
    pred_dir.mkdir()
    gt_dir.mkdir()
    save_mask_png(lesion, pred_dir / "img.png")
    save_mask_png(lesion, gt_dir / "img.png")
    out_json = tmp_path / "report.json"
    out_csv = tmp_path / "report.csv"
    code = main(
        [
            "eval",
            "--pred", str(pred_dir),
            "--gt", str(gt_dir),
            "--bootstrap", "200",
            "--seed", "0",
            "--out", str(out_json),
            "--csv", str(out_csv),
        ]
    )
    assert code == 0
    report = json.loads(out_json.read_text())
    assert report["aggregates"]["dice"]["mean"] == 1.0
    assert out_csv.read_text().startswith("image_id,dice,iou,hd95,flags")


def test_pipeline_and_overlays_commands(tmp_path):
    data = tmp_path / "data" / "benign"
    data.mkdir(parents=True)
    lesion = ellipse_mask(64, 64, (30, 32), (9, 12))
    save_image_png(phantom_image(lesion, noise=0.04, seed=5), data / "case.png")
    save_mask_png(lesion, data / "case_mask.png")

    providers = tmp_path / "providers"
    providers.mkdir()
    mock = MockProvider({"benign_case": lesion}, feature_size=32, blur_sigma=1.5)
    activations, gradients = mock.cam_tensors("benign_case")
    write_tensor(activations, providers / "benign_case.act.ten")
    write_tensor(gradients, providers / "benign_case.grad.ten")
    save_mask_png(lesion, providers / "benign_case.sam.png")

    cfg = tmp_path / "cfg.toml"
    cfg.write_text(
        "resize_width = 64\nresize_height = 64\nace_stride = 1\nbootstrap_n = 200\n"
    )
    out_root = tmp_path / "runs"
    code = main(
        [
            "pipeline",
            "--data", str(tmp_path / "data"),
            "--providers", str(providers),
            "--config", str(cfg),
            "--out", str(out_root),
        ]
    )
    assert code == 0
    run_dir = next(out_root.iterdir())
    report = json.loads((run_dir / "report.json").read_text())
    assert report["aggregates"]["dice"]["mean"] >= 0.99

    assert main(["overlays", "--run", str(run_dir)]) == 0
    assert (run_dir / "overlays" / "benign_case.png").is_file()


def test_pipeline_flag_overrides_config(tmp_path):
    data = tmp_path / "data" / "benign"
    data.mkdir(parents=True)
    lesion = ellipse_mask(64, 64, (30, 32), (9, 12))
    save_image_png(phantom_image(lesion, noise=0.04, seed=5), data / "case.png")
    save_mask_png(lesion, data / "case_mask.png")
    providers = tmp_path / "providers"
    providers.mkdir()
    mock = MockProvider({"benign_case": lesion}, feature_size=32, blur_sigma=1.5)
    activations, gradients = mock.cam_tensors("benign_case")
    write_tensor(activations, providers / "benign_case.act.ten")
    write_tensor(gradients, providers / "benign_case.grad.ten")
    save_mask_png(lesion, providers / "benign_case.sam.png")

    out_root = tmp_path / "runs"
    code = main(
        [
            "pipeline",
            "--data", str(tmp_path / "data"),
            "--providers", str(providers),
            "--out", str(out_root),
            "--resize-width", "64",
            "--resize-height", "64",
            "--ace-stride", "1",
            "--bootstrap-n", "200",
            "--prompt-kind", "points",
        ]
    )
    assert code == 0
    run_dir = next(out_root.iterdir())
    config = json.loads((run_dir / "config.json").read_text())
    assert config["prompt_kind"] == "points"
    assert config["resize_width"] == 64


def test_manifest_command(tmp_path, capsys):
    data = tmp_path / "data" / "normal"
    data.mkdir(parents=True)
    save_image_png(np.full((8, 8), 0.6), data / "n1.png")
    out = tmp_path / "m.jsonl"
    assert main(["manifest", "--data", str(tmp_path / "data"), "--out", str(out)]) == 0
    assert "1 entries" in capsys.readouterr().out
    assert json.loads(out.read_text().splitlines()[0])["image_id"] == "normal_n1"


def test_cli_reports_errors_with_exit_code(tmp_path, capsys):
    code = main(["enhance", str(tmp_path / "missing.png"), str(tmp_path / "o.png")])
    assert code == 2
    assert "error:" in capsys.readouterr().err
