import numpy as np
import pytest

from volabel import LabeledVolume, ProbabilityVolume, read_vlv, write_vlv
from volabel.cli import build_parser, main

from conftest import rand_binary


def write_two_blobs(path):
    data = np.zeros((1, 4, 8), dtype=np.uint8)
    data[0, 1:3, 1:3] = 1
    data[0, 1:3, 5:7] = 1
    write_vlv(LabeledVolume(data, role="semantic"), path)
    return data


def test_convert_two_blobs(tmp_path, capsys):
    src = tmp_path / "sem.vlv"
    dst = tmp_path / "inst.vlv"
    write_two_blobs(src)
    assert main(["convert", "--in", str(src), "--out", str(dst)]) == 0
    out = capsys.readouterr().out
    assert "K=2" in out
    inst = read_vlv(dst)
    assert inst.role == "instance"
    assert set(np.unique(inst.data)) == {0, 1, 2}


def test_convert_empty_volume(tmp_path, capsys):
    src = tmp_path / "empty.vlv"
    dst = tmp_path / "out.vlv"
    write_vlv(LabeledVolume(np.zeros((2, 2, 2), dtype=np.uint8)), src)
    assert main(["convert", "--in", str(src), "--out", str(dst)]) == 0
    assert "K=0" in capsys.readouterr().out


def test_convert_missing_file(tmp_path, capsys):
    rc = main(["convert", "--in", str(tmp_path / "nope.vlv"), "--out", str(tmp_path / "o.vlv")])
    assert rc != 0
    assert "error:" in capsys.readouterr().err


def test_convert_per_class_with_map(tmp_path, capsys):
    src = tmp_path / "sem.vlv"
    dst = tmp_path / "inst.vlv"
    cmap = tmp_path / "map.csv"
    data = np.zeros((1, 1, 4), dtype=np.uint8)
    data[0, 0, :2] = 1
    data[0, 0, 2:] = 2
    write_vlv(LabeledVolume(data, role="semantic"), src)
    assert main(["convert", "--in", str(src), "--out", str(dst),
                 "--per-class", "--class-map", str(cmap)]) == 0
    assert "K=2" in capsys.readouterr().out
    assert cmap.read_text().splitlines() == ["id,class", "1,1", "2,2"]


def test_convert_schedules_agree(tmp_path, capsys):
    src = tmp_path / "sem.vlv"
    write_vlv(rand_binary(3, dims=(6, 6, 6)), src)
    a, b = tmp_path / "a.vlv", tmp_path / "b.vlv"
    assert main(["convert", "--in", str(src), "--out", str(a), "--schedule", "sync"]) == 0
    assert main(["convert", "--in", str(src), "--out", str(b), "--schedule", "sweeps"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_decode_blob(tmp_path, capsys):
    src = tmp_path / "prob.vlv"
    dst = tmp_path / "inst.vlv"
    prob = np.zeros((3, 5, 5), dtype=np.float32)
    prob[1, 1:4, 1:4] = 0.9
    write_vlv(ProbabilityVolume(prob), src)
    assert main(["decode", "--in", str(src), "--out", str(dst)]) == 0
    assert "instances=1" in capsys.readouterr().out


def test_decode_all_zero(tmp_path, capsys):
    src = tmp_path / "prob.vlv"
    write_vlv(ProbabilityVolume(np.zeros((2, 2, 2), dtype=np.float32)), src)
    assert main(["decode", "--in", str(src), "--out", str(tmp_path / "o.vlv")]) == 0
    assert "instances=0" in capsys.readouterr().out


def test_decode_theta_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["decode", "--in", "x.vlv", "--out", "y.vlv", "--theta", "1.5"])
    assert exc.value.code == 2


def test_unknown_flag_rejected():
    with pytest.raises(SystemExit) as exc:
        main(["convert", "--in", "a", "--out", "b", "--frobnicate"])
    assert exc.value.code == 2


def test_eval_perfect(tmp_path, capsys):
    gt = tmp_path / "gt.vlv"
    data = np.zeros((1, 2, 5), dtype=np.uint8)
    data[0, 0, :] = [1, 2, 3, 4, 5]
    write_vlv(LabeledVolume(data, role="semantic"), gt)
    assert main(["eval", "--pred", str(gt), "--gt", str(gt), "--classes", "1,2,3,4,5"]) == 0
    out = capsys.readouterr().out
    assert "dice=1.0" in out
    assert "Average" in out


def test_eval_one_class_wrong_macro(tmp_path, capsys):
    gt_path = tmp_path / "gt.vlv"
    pred_path = tmp_path / "pred.vlv"
    csv_path = tmp_path / "m.csv"
    gt = np.zeros((1, 1, 5), dtype=np.uint8)
    gt[0, 0, :] = [1, 2, 3, 4, 5]
    pred = gt.copy()
    pred[0, 0, 4] = 0
    write_vlv(LabeledVolume(gt, role="semantic"), gt_path)
    write_vlv(LabeledVolume(pred, role="semantic"), pred_path)
    assert main(["eval", "--pred", str(pred_path), "--gt", str(gt_path),
                 "--classes", "1,2,3,4,5", "--csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert "dice=0.8" in out
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "class,dice,iou"
    assert len(lines) == 7  # five classes + average


def test_eval_shape_mismatch(tmp_path, capsys):
    a, b = tmp_path / "a.vlv", tmp_path / "b.vlv"
    write_vlv(LabeledVolume(np.ones((1, 1, 2), dtype=np.uint8)), a)
    write_vlv(LabeledVolume(np.ones((1, 1, 3), dtype=np.uint8)), b)
    assert main(["eval", "--pred", str(a), "--gt", str(b)]) != 0


def test_stats_two_blobs(tmp_path, capsys):
    sem = tmp_path / "sem.vlv"
    inst = tmp_path / "inst.vlv"
    csv_path = tmp_path / "stats.csv"
    write_two_blobs(sem)
    main(["convert", "--in", str(sem), "--out", str(inst)])
    assert main(["stats", "--in", str(inst), "--csv", str(csv_path)]) == 0
    assert "instances=2" in capsys.readouterr().out
    lines = csv_path.read_text().splitlines()
    assert len(lines) == 3  # header + 2 instances


def test_resample_identity(tmp_path, capsys):
    src = tmp_path / "v.vlv"
    dst = tmp_path / "o.vlv"
    vol = LabeledVolume(np.arange(27, dtype=np.uint8).reshape(3, 3, 3), (8.0, 8.0, 8.0))
    write_vlv(vol, src)
    assert main(["resample", "--in", str(src), "--out", str(dst)]) == 0
    back = read_vlv(dst)
    assert np.array_equal(back.data, vol.data)


def test_resample_default_is_8nm():
    args = build_parser().parse_args(["resample", "--in", "a", "--out", "b"])
    assert args.target_res == (8.0, 8.0, 8.0)


def test_tile_default_is_512x512():
    args = build_parser().parse_args(["tile", "--in", "a", "--out-dir", "d"])
    assert args.tile == (512, 512)
    args = build_parser().parse_args(["fragreport", "--in", "a"])
    assert args.tile == (512, 512)


def test_tile_then_stitch_roundtrip(tmp_path, capsys):
    src = tmp_path / "v.vlv"
    out = tmp_path / "restored.vlv"
    tdir = tmp_path / "tiles"
    vol = LabeledVolume(np.random.default_rng(0).integers(0, 9, (2, 10, 10)).astype(np.uint8))
    write_vlv(vol, src)
    assert main(["tile", "--in", str(src), "--out-dir", str(tdir),
                 "--tile", "2x4x4", "--overlap", "1"]) == 0
    assert (tdir / "index.json").exists()
    assert main(["stitch", "--index", str(tdir / "index.json"), "--out", str(out)]) == 0
    assert np.array_equal(read_vlv(out).data, vol.data)


def test_fragreport_spanning_line(tmp_path, capsys):
    src = tmp_path / "line.vlv"
    csv_path = tmp_path / "frag.csv"
    data = np.zeros((1, 4, 8), dtype=np.uint8)
    data[0, 1, :] = 1
    write_vlv(LabeledVolume(data, role="semantic"), src)
    assert main(["fragreport", "--in", str(src), "--tile", "4x4",
                 "--csv", str(csv_path)]) == 0
    out = capsys.readouterr().out
    assert "split_instances=1" in out
    assert csv_path.read_text() == "instance_id,fragments\n1,2\n"


def test_summary_is_single_line(tmp_path, capsys):
    src = tmp_path / "sem.vlv"
    dst = tmp_path / "inst.vlv"
    write_two_blobs(src)
    main(["convert", "--in", str(src), "--out", str(dst)])
    out = capsys.readouterr().out
    assert len(out.strip().splitlines()) == 1
