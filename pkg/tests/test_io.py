import numpy as np
import pytest

from stereopaint import pnm
from stereopaint.checkpoint import load_checkpoint, save_checkpoint
from stereopaint.network import build_model, named_parameters
from stereopaint.pnm import PnmParseError

TINY = {"enc_channels": (4, 8), "dec_channels": (8, 4),
        "fullres_channels": (4, 4, 4), "disc_channels": (8, 8, 8)}


def test_image_roundtrip_quantization_bound(tmp_path, rng):
    img = rng.uniform(size=(3, 9, 7)).astype(np.float32)
    path = tmp_path / "img.ppm"
    pnm.write_image(img, path)
    back = pnm.read_image(path)
    assert back.shape == (3, 9, 7)
    assert np.max(np.abs(back - img)) <= 1.0 / 255.0


def test_mask_roundtrip_and_convention(tmp_path):
    mask = np.zeros((1, 4, 4), np.float32)
    mask[0, :2] = 1.0
    path = tmp_path / "m.pgm"
    pnm.write_mask(mask, path)
    assert np.array_equal(pnm.read_mask(path), mask)
    raw = path.read_bytes()
    payload = raw.split(b"255\n", 1)[1]
    # external convention: 255 marks missing pixels
    assert payload[:8] == b"\x00" * 8 and payload[8:] == b"\xff" * 8

    all_missing = tmp_path / "all.pgm"
    all_missing.write_bytes(b"P5\n4 4\n255\n" + b"\xff" * 16)
    assert np.all(pnm.read_mask(all_missing) == 0.0)


def test_pnm_header_errors(tmp_path):
    bad_magic = tmp_path / "bad.ppm"
    bad_magic.write_bytes(b"P3\n2 2\n255\n" + b"\x00" * 12)
    with pytest.raises(PnmParseError, match="offset 0"):
        pnm.read_image(bad_magic)

    truncated = tmp_path / "short.ppm"
    truncated.write_bytes(b"P6\n4 4\n255\n" + b"\x00" * 10)
    with pytest.raises(PnmParseError, match="truncated"):
        pnm.read_image(truncated)

    maxval = tmp_path / "deep.ppm"
    maxval.write_bytes(b"P6\n2 2\n65535\n" + b"\x00" * 24)
    with pytest.raises(PnmParseError, match="maxval"):
        pnm.read_image(maxval)

    garbled = tmp_path / "garbled.ppm"
    garbled.write_bytes(b"P6\nxy 2\n255\n")
    with pytest.raises(PnmParseError, match="offset 3"):
        pnm.read_image(garbled)


def test_pnm_comment_lines_are_skipped(tmp_path):
    path = tmp_path / "c.ppm"
    path.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes(range(6)))
    img = pnm.read_image(path)
    assert img.shape == (3, 1, 2)


def test_write_image_validates_shape(tmp_path):
    with pytest.raises(ValueError):
        pnm.write_image(np.zeros((1, 4, 4), np.float32), tmp_path / "x.ppm")
    with pytest.raises(ValueError):
        pnm.write_mask(np.full((1, 4, 4), 0.25, np.float32), tmp_path / "x.pgm")


def test_checkpoint_roundtrip_bytes(tmp_path):
    params = build_model(3, d_levels=2, iterations=4, lambda_adv=0.02,
                         ablation="max", widths=TINY)
    first = tmp_path / "a.ckpt"
    save_checkpoint(first, params)
    loaded = load_checkpoint(first)
    assert loaded.iterations == 4
    assert loaded.ablation == "max"
    assert loaded.lambda_adv == pytest.approx(0.02)
    assert loaded.gaa_cfg.max_disparity == 2
    for (name_a, pa), (name_b, pb) in zip(named_parameters(params),
                                          named_parameters(loaded)):
        assert name_a == name_b
        assert np.array_equal(pa.data, pb.data)
    second = tmp_path / "b.ckpt"
    save_checkpoint(second, loaded)
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_rejects_junk(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOT-A-CHECKPOINT\nend\n")
    with pytest.raises(ValueError):
        load_checkpoint(bad)


def test_checkpoint_preserves_behaviour(tmp_path, rng):
    from stereopaint.icg import icg_run
    from stereopaint.data import make_dataset
    from stereopaint.tensor import Tensor

    params = build_model(5, d_levels=2, iterations=2, widths=TINY)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    s = make_dataset(1, 1, 32, 32, 8, "b20_40")[0]
    out_a, _, _ = icg_run(Tensor(s.x_left), Tensor(s.x_right), s.m_left, s.m_right, params)
    out_b, _, _ = icg_run(Tensor(s.x_left), Tensor(s.x_right), s.m_left, s.m_right, loaded)
    assert np.array_equal(out_a.data, out_b.data)
