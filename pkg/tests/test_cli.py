import hashlib
from pathlib import Path

import numpy as np
import pytest

from stereopaint.cli import load_config_file, main
from stereopaint.data import load_dataset, save_dataset
from stereopaint import pnm

SMALL_GEN = ["--height", "32", "--width", "32", "--max-disp", "8",
             "--train-count", "3", "--test-count", "2"]
SMALL_TRAIN = ["--epochs", "1", "--batch-size", "2", "--d-levels", "2",
               "--iterations", "2"]


def dir_digest(path):
    acc = hashlib.sha256()
    for f in sorted(Path(path).rglob("*")):
        if f.is_file():
            acc.update(f.name.encode())
            acc.update(f.read_bytes())
    return acc.hexdigest()


def gen(tmp_path, name="data"):
    out = tmp_path / name
    assert main(["gen-data", "--out", str(out), *SMALL_GEN]) == 0
    return out


def train(tmp_path, data, extra=()):
    out = tmp_path / "run"
    assert main(["train", "--data", str(data / "train"), "--out", str(out),
                 *SMALL_TRAIN, *extra]) == 0
    return out / "checkpoint.ckpt"


def test_gen_data_layout_and_determinism(tmp_path):
    first = gen(tmp_path, "a")
    samples, meta = load_dataset(first / "train")
    assert meta["count"] == 3 and len(samples) == 3
    assert (first / "train" / "0000_left.ppm").exists()
    assert (first / "train" / "0002_disp.tnsr").exists()
    assert (first / "test" / "manifest.txt").exists()
    second = gen(tmp_path, "b")
    assert dir_digest(first) == dir_digest(second)


def test_gen_data_invalid_bucket_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["gen-data", "--out", str(tmp_path / "x"), "--bucket", "b99"])
    assert err.value.code == 2


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["frobnicate"])
    assert err.value.code == 2


def test_missing_dataset_is_runtime_error(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nope"), "--out",
                 str(tmp_path / "run"), *SMALL_TRAIN])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_train_writes_artifacts(tmp_path, capsys):
    data = gen(tmp_path)
    ckpt = train(tmp_path, data)
    out = capsys.readouterr().out
    assert "epoch 1 rec" in out and "adv_disc" in out
    run = ckpt.parent
    assert ckpt.exists()
    assert (run / "loss_log.csv").read_text().startswith("epoch,rec,adv_gen,adv_disc,total")
    assert (run / "loss_curves.png").stat().st_size > 0
    from stereopaint.checkpoint import load_checkpoint

    params = load_checkpoint(ckpt)
    assert params.iterations == 2


def test_train_checkpoint_deterministic(tmp_path):
    data = gen(tmp_path)
    a = train(tmp_path, data)
    digest_a = hashlib.sha256(a.read_bytes()).hexdigest()
    b_dir = tmp_path / "run2"
    assert main(["train", "--data", str(data / "train"), "--out", str(b_dir),
                 *SMALL_TRAIN]) == 0
    digest_b = hashlib.sha256((b_dir / "checkpoint.ckpt").read_bytes()).hexdigest()
    assert digest_a == digest_b


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = 1\nbatch_size = 2\nd_levels = 2\niterations = 2\n"
                   "# comment line\nlearning_rate = 0.05\n")
    values = load_config_file(cfg)
    assert values["learning_rate"] == 0.05
    data = gen(tmp_path)
    out = tmp_path / "cfgrun"
    assert main(["train", "--data", str(data / "train"), "--out", str(out),
                 "--config", str(cfg), "--epochs", "1"]) == 0
    assert (out / "checkpoint.ckpt").exists()
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 3\n")
    with pytest.raises(ValueError):
        load_config_file(bad)


def test_infer_all_known_masks_roundtrip_bytes(tmp_path):
    data = gen(tmp_path)
    ckpt = train(tmp_path, data)
    sample_dir = data / "test"
    # all-known masks: outputs must be byte-identical to inputs
    full = tmp_path / "full.pgm"
    pnm.write_mask(np.ones((1, 32, 32), np.float32), full)
    out = tmp_path / "infer"
    args = ["infer", "--checkpoint", str(ckpt),
            "--left", str(sample_dir / "0000_left.ppm"),
            "--right", str(sample_dir / "0000_right.ppm"),
            "--mask-left", str(full), "--mask-right", str(full),
            "--out", str(out)]
    assert main(args) == 0
    assert (out / "out_left.ppm").read_bytes() == (sample_dir / "0000_left.ppm").read_bytes()
    assert (out / "out_right.ppm").read_bytes() == (sample_dir / "0000_right.ppm").read_bytes()
    for t in (1, 2):
        assert (out / f"iter_{t}.ppm").exists()
    # deterministic rerun
    out2 = tmp_path / "infer2"
    assert main(args[:-1] + [str(out2)]) == 0
    assert (out2 / "out_left.ppm").read_bytes() == (out / "out_left.ppm").read_bytes()


def test_infer_honours_mask_files(tmp_path):
    data = gen(tmp_path)
    ckpt = train(tmp_path, data)
    sample_dir = data / "test"
    out = tmp_path / "holes"
    assert main(["infer", "--checkpoint", str(ckpt),
                 "--left", str(sample_dir / "0000_left.ppm"),
                 "--right", str(sample_dir / "0000_right.ppm"),
                 "--mask-left", str(sample_dir / "0000_mask_left.pgm"),
                 "--mask-right", str(sample_dir / "0000_mask_right.pgm"),
                 "--out", str(out)]) == 0
    left = pnm.read_image(out / "out_left.ppm")
    orig = pnm.read_image(sample_dir / "0000_left.ppm")
    mask = pnm.read_mask(sample_dir / "0000_mask_left.pgm")
    keep = mask[0] == 1.0
    assert np.array_equal(left[:, keep], orig[:, keep])


def test_eval_ground_truth_scores_perfect(tmp_path, capsys):
    data = gen(tmp_path)
    ckpt = train(tmp_path, data)
    # all-known dataset: the model passes inputs through, so scores are perfect
    samples, meta = load_dataset(data / "test")
    ones = np.ones((1, 32, 32), np.float32)
    from stereopaint.data import assemble_sample

    perfect = [assemble_sample(s.y_left, s.y_right, s.gt_disparity, ones, ones)
               for s in samples]
    save_dataset(perfect, tmp_path / "perfect", seed=0, max_disp=8, bucket="b0_20")
    out = tmp_path / "eval"
    assert main(["eval", "--checkpoint", str(ckpt), "--data", str(tmp_path / "perfect"),
                 "--out", str(out)]) == 0
    csv = (out / "report.csv").read_text().splitlines()
    assert csv[0] == "bucket,source,view,psnr,ssim"
    model_avg = [l for l in csv if ",model,avg," in l][0]
    _, _, _, psnr_s, ssim_s = model_avg.split(",")
    assert float(psnr_s) == 100.0
    assert float(ssim_s) == pytest.approx(1.0, abs=1e-5)
    assert (out / "report.txt").exists()
    assert (out / "report.png").stat().st_size > 0


def test_eval_bucket_rows(tmp_path):
    data = gen(tmp_path)
    ckpt = train(tmp_path, data)
    out = tmp_path / "evalb"
    assert main(["eval", "--checkpoint", str(ckpt), "--data", str(data / "test"),
                 "--out", str(out), "--buckets", "b0_20,b20_40"]) == 0
    csv = (out / "report.csv").read_text()
    for bucket in ("b0_20", "b20_40"):
        assert f"{bucket},model,avg," in csv
        assert f"{bucket},zero_fill,avg," in csv
