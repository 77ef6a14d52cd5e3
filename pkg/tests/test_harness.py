import csv
import json
import math

import numpy as np
import pytest
from PIL import Image

from hvs_sharpness import harness as hn
from hvs_sharpness.filters import gaussian_taps
from hvs_sharpness.presets import PRESETS, UnknownPresetError, get_preset
from hvs_sharpness.scoring import score_single


def write_png(path, arr):
    Image.fromarray(arr).save(path)
    return path


@pytest.fixture
def natural_cfg():
    return hn.resolve_kernels(["natural-1"])


@pytest.fixture(scope="module")
def blur_manifest(tmp_path_factory, sharp_paths):
    d = tmp_path_factory.mktemp("series")
    m = d / "m.csv"
    hn.write_blur_series(sharp_paths[0], [0, 0.5, 1, 1.5, 2, 3, 4, 5], d, manifest=m)
    return m


# --- manifests ----------------------------------------------------------------


def test_load_manifest_two_rows(tmp_path, sharp_paths):
    m = tmp_path / "m.csv"
    m.write_text(f"path,subjective\n{sharp_paths[0]},1.5\n{sharp_paths[1]},2\n")
    entries = hn.load_manifest(m)
    assert [e.subjective for e in entries] == [1.5, 2.0]
    assert entries[0].std is None and entries[0].group is None


def test_load_manifest_relative_paths_std_and_group(tmp_path):
    write_png(tmp_path / "a.png", np.full((30, 30), 128, np.uint8))
    m = tmp_path / "m.csv"
    m.write_text("path,subjective,std,group\na.png,3,0.5,slide1\n")
    (e,) = hn.load_manifest(m)
    assert e.path == tmp_path / "a.png"
    assert e.std == 0.5 and e.group == "slide1"


def test_load_manifest_names_bad_line(tmp_path, sharp_paths):
    m = tmp_path / "m.csv"
    m.write_text(f"path,subjective\n{sharp_paths[0]},1\n{sharp_paths[1]},good\n")
    with pytest.raises(hn.ManifestError, match=r"m\.csv:3"):
        hn.load_manifest(m)


def test_load_manifest_header_only_and_missing(tmp_path):
    m = tmp_path / "m.csv"
    m.write_text("path,subjective\n")
    assert hn.load_manifest(m) == []
    with pytest.raises(FileNotFoundError):
        hn.load_manifest(tmp_path / "nope.csv")
    m.write_text("file,score\n")
    with pytest.raises(hn.ManifestError, match="header"):
        hn.load_manifest(m)
    m.write_text("path,subjective\nmissing.png,1\n")
    with pytest.raises(hn.ManifestError, match=":2: image"):
        hn.load_manifest(m)


def test_manifest_round_trip(tmp_path, sharp_paths):
    entries = [hn.ManifestEntry(sharp_paths[i], float(i) / 3, 0.1 * i, f"g{i % 2}")
               for i in range(4)]
    m = tmp_path / "sub" / "m.csv"
    m.parent.mkdir()
    hn.write_manifest(m, entries)
    back = hn.load_manifest(m)
    assert [e.path.resolve() for e in back] == [e.path.resolve() for e in entries]
    assert [e.subjective for e in back] == pytest.approx([e.subjective for e in entries],
                                                         rel=1e-14)


# --- image decode ------------------------------------------------------------------


def test_read_image_bit_depths_and_formats(tmp_path):
    rng = np.random.default_rng(0)
    g8 = rng.integers(0, 256, (20, 24), dtype=np.uint8)
    g16 = rng.integers(0, 65536, (20, 24), dtype=np.uint16)
    rgb = rng.integers(0, 256, (20, 24, 3), dtype=np.uint8)
    write_png(tmp_path / "g8.png", g8)
    write_png(tmp_path / "g16.png", g16)
    write_png(tmp_path / "rgb.png", rgb)
    write_png(tmp_path / "g8.tif", g8)
    np.testing.assert_allclose(hn.read_image(tmp_path / "g8.png"), g8 / 255.0)
    np.testing.assert_allclose(hn.read_image(tmp_path / "g16.png"), g16 / 65535.0)
    np.testing.assert_array_equal(hn.read_image(tmp_path / "g8.tif"),
                                  hn.read_image(tmp_path / "g8.png"))
    luma = (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]) / 255
    np.testing.assert_allclose(hn.read_image(tmp_path / "rgb.png"), luma, atol=1e-12)
    Image.fromarray(rgb).save(tmp_path / "rgb.jpg", quality=95)
    j = hn.read_image(tmp_path / "rgb.jpg")
    assert j.shape == (20, 24) and 0 <= j.min() and j.max() <= 1


def test_write_image_16bit_round_trip(tmp_path):
    img = np.random.default_rng(1).random((16, 16))
    hn.write_image(tmp_path / "x.png", img)
    back = hn.read_image(tmp_path / "x.png")
    assert np.abs(back - img).max() <= 0.5 / 65535 + 1e-12


# --- blur ------------------------------------------------------------------------------


def test_gaussian_taps_profile():
    g = gaussian_taps(1.5)
    assert g.size == 2 * math.ceil(6.0) + 1
    assert g.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(g, g[::-1])


def test_blur_constant_and_impulse():
    c = np.full((40, 40), 0.3)
    assert np.abs(hn.gaussian_blur(c, 2.0) - 0.3).max() <= 1e-12
    imp = np.zeros((41, 41))
    imp[20, 20] = 1.0
    out = hn.gaussian_blur(imp, 1.5)
    g = gaussian_taps(1.5)
    np.testing.assert_allclose(out[20, 20 - 6:27], g * g[6], atol=1e-15)
    np.testing.assert_allclose(out, out.T, atol=1e-16)
    np.testing.assert_allclose(out, out[::-1, ::-1], atol=1e-16)
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("s1,s2", [(1.0, 1.0), (1.5, 2.0), (2.0, 3.0)])
def test_blur_semigroup(s1, s2, rng):
    img = hn.gaussian_blur(rng.random((96, 96)), 1.0)
    two = hn.gaussian_blur(hn.gaussian_blur(img, s1), s2)
    one = hn.gaussian_blur(img, math.hypot(s1, s2))
    assert np.abs(two - one).max() <= 1e-3


@pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0, 7.0])
def test_blur_preserves_range_and_mean(sigma, rng):
    img = rng.random((64, 80))
    out = hn.gaussian_blur(img, sigma)
    assert 0 <= out.min() and out.max() <= 1
    assert out.mean() == pytest.approx(img.mean(), abs=1e-6)


def test_blur_rejects_non_positive_sigma(rng):
    with pytest.raises(ValueError):
        hn.gaussian_blur(rng.random((10, 10)), 0.0)


def test_blur_series_files_and_manifest(tmp_path, sharp_paths):
    entries = hn.write_blur_series(sharp_paths[0], [0, 1, 2], tmp_path / "out",
                                   manifest=tmp_path / "m.csv")
    assert [e.subjective for e in entries] == [0.0, -1.0, -2.0]
    back = hn.load_manifest(tmp_path / "m.csv")
    assert len(back) == 3
    np.testing.assert_allclose(hn.read_image(back[0].path), hn.read_image(sharp_paths[0]),
                               atol=0.5 / 65535)


# --- kernels and batch scoring -------------------------------------------------------------


def test_presets_table():
    assert set(PRESETS) == {"natural-1", "natural-2", "synthetic-1", "synthetic-2"}
    n2 = get_preset("natural-2")
    assert [(s.gg.alpha, s.gg.beta, s.moment) for s in n2.specs] == [(1.7, 1.4, 12), (0.7, 0.8, 4)]
    assert n2.table_cutoffs == (13, 26)
    s2 = get_preset("synthetic-2")
    assert [(s.gg.alpha, s.gg.beta, s.moment) for s in s2.specs] == [(0.7, 0.8, 20), (0.7, 0.9, 12)]
    assert all(abs(s.cutoff - 0.6 * math.pi) < 1e-15 for p in PRESETS.values() for s in p.specs)
    with pytest.raises(UnknownPresetError, match="natural-1"):
        get_preset("bogus")


def test_resolve_kernels_from_file(tmp_path):
    from hvs_sharpness.kernels import save_kernel

    cfg = hn.resolve_kernels(["natural-1"])
    spec, k = cfg.specs[0], cfg.kernels[0]
    save_kernel(tmp_path / "k.json", spec, k)
    cfg = hn.resolve_kernels([str(tmp_path / "k.json")])
    assert cfg.kernels[0] == k and cfg.moments == [12]


def test_batch_parallel_equals_serial(natural_cfg, sharp_paths):
    serial = hn.score_batch(sharp_paths, natural_cfg, workers=1)
    parallel = hn.score_batch(sharp_paths, natural_cfg, workers=4)
    assert [r.objective for r in serial] == [r.objective for r in parallel]
    assert [r.index for r in parallel] == list(range(len(sharp_paths)))


def test_batch_worker_cap_env(monkeypatch):
    monkeypatch.setenv(hn.WORKERS_ENV, "2")
    assert hn._worker_cap(8) == 2
    monkeypatch.delenv(hn.WORKERS_ENV)
    assert hn._worker_cap(8) == 8


# --- benchmark -----------------------------------------------------------------------------------


def test_bench_self_correlation(tmp_path, natural_cfg, sharp_paths):
    res = hn.score_batch(sharp_paths, natural_cfg)
    m = tmp_path / "m.csv"
    with m.open("w") as fh:
        fh.write("path,subjective\n")
        for p, r in zip(sharp_paths, res):
            fh.write(f"{p},{r.objective!r}\n")
    rep = hn.run_benchmark(hn.load_manifest(m), natural_cfg)
    assert rep.statistics["plcc"] == pytest.approx(1.0, abs=1e-9)
    assert rep.statistics["srcc"] == pytest.approx(1.0, abs=1e-12)
    assert rep.mean_time_sec > 0
    assert all(r["time_sec"] > 0 for r in rep.images)


def test_bench_blur_series(blur_manifest, natural_cfg):
    rep = hn.run_benchmark(hn.load_manifest(blur_manifest), natural_cfg)
    s = rep.statistics
    assert abs(s["srcc"]) >= 0.95
    assert s["auc_ds"] is None  # every pair differs in blur
    assert s["auc_bw"] == 1.0 and s["c0"] == 1.0
    for key in ("plcc", "srcc", "krcc"):
        assert -1 <= s[key] <= 1


def test_bench_excludes_black_image(tmp_path, natural_cfg, sharp_paths):
    black = write_png(tmp_path / "black.png", np.zeros((64, 64), np.uint8))
    m = tmp_path / "m.csv"
    rows = [f"{p},{i}" for i, p in enumerate(sharp_paths[:5])] + [f"{black},9"]
    m.write_text("path,subjective\n" + "\n".join(rows) + "\n")
    rep = hn.run_benchmark(hn.load_manifest(m), natural_cfg)
    assert len(rep.exclusions) == 1 and "empty foreground" in rep.exclusions[0]["reason"]
    assert rep.statistics["n"] == 5


def test_bench_needs_three_images(tmp_path, natural_cfg, sharp_paths):
    m = tmp_path / "m.csv"
    m.write_text("path,subjective\n")
    with pytest.raises(hn.BenchmarkError, match="at least 3"):
        hn.run_benchmark(hn.load_manifest(m), natural_cfg)


def test_bench_combo_requires_weights(blur_manifest):
    with pytest.raises(hn.BenchmarkError):
        hn.run_benchmark(hn.load_manifest(blur_manifest), hn.resolve_kernels(["natural-2"]))
    cfg = hn.resolve_kernels(["natural-2"], weights=(1.0, 0.0))
    rep = hn.run_benchmark(hn.load_manifest(blur_manifest), cfg)
    single = hn.run_benchmark(hn.load_manifest(blur_manifest), hn.resolve_kernels(["natural-1"]))
    assert [r["objective"] for r in rep.images] == [r["objective"] for r in single.images]


def test_report_embeds_kernel_taps(blur_manifest, natural_cfg):
    rep = hn.run_benchmark(hn.load_manifest(blur_manifest), natural_cfg)
    (k,) = rep.kernel["kernels"]
    np.testing.assert_array_equal(k["taps"], natural_cfg.kernels[0].taps)
    assert k["moment"] == 12 and len(k["sha256"]) == 64


def test_report_json_round_trip_and_csv(tmp_path, blur_manifest, natural_cfg):
    rep = hn.run_benchmark(hn.load_manifest(blur_manifest), natural_cfg)
    hn.emit_report(rep, tmp_path / "r.json")
    assert hn.load_report(tmp_path / "r.json") == rep
    hn.emit_report(rep, tmp_path / "r.csv")
    with (tmp_path / "r.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["path", "objective", "subjective", "fitted"]
    assert len(rows) - 1 == len(rep.images)
    for row in rows[1:]:
        for cell in row[1:]:
            digits = cell.lstrip("-").replace(".", "").split("e")[0].lstrip("0")
            assert len(digits) >= 12 or float(cell) == 0.0
            assert float(cell) == pytest.approx(float(cell), rel=1e-12)
    obj = [float(r[1]) for r in rows[1:]]
    np.testing.assert_allclose(obj, [r["objective"] for r in rep.images], rtol=1e-14)
    with pytest.raises(ValueError):
        hn.emit_report(rep, tmp_path / "r.txt", "xml")


def test_format_number_significant_digits():
    assert hn.format_number(0.5) == "0.500000000000000"
    assert len(hn.format_number(1 / 3).replace("0.", "", 1)) >= 12


def test_bench_time_mode_records_median(blur_manifest, natural_cfg):
    rep = hn.run_benchmark(hn.load_manifest(blur_manifest), natural_cfg,
                           hn.EvalConfig(time_reps=3))
    assert rep.config["time_reps"] == 3 and rep.mean_time_sec > 0


# --- scalability ---------------------------------------------------------------------------------


def test_scalability_deterministic_and_full_fraction():
    rng = np.random.default_rng(0)
    x = rng.normal(size=40)
    y = x + 0.5 * rng.normal(size=40)
    a = hn.scalability_table(x, y, [0.2, 0.5, 1.0], 4, seed=3)
    b = hn.scalability_table(x, y, [0.2, 0.5, 1.0], 4, seed=3)
    assert a == b
    full = [r["plcc"] for r in a if r["fraction"] == 1.0]
    assert len(set(full)) == 1
    assert full[0] == hn.evaluate(x, y)["plcc"]


def test_scalability_skips_tiny_subsets(caplog):
    x = np.arange(20.0)
    rows = hn.scalability_table(x, x, [0.05], 2, seed=0)
    assert all(r["plcc"] is None and "skipped" in r["note"] for r in rows)
    assert "skipped" in caplog.text


def test_scalability_validation():
    with pytest.raises(ValueError):
        hn.scalability_table([1, 2, 3], [1, 2, 3], [1.5], 1, 0)
    with pytest.raises(ValueError):
        hn.scalability_table([1, 2, 3], [1, 2, 3], [0.5], 0, 0)


def test_run_scalability_from_manifest(blur_manifest, natural_cfg):
    entries = hn.load_manifest(blur_manifest)
    a = hn.run_scalability(entries, natural_cfg, [0.5, 1.0], 3, seed=9)
    b = hn.run_scalability(entries, natural_cfg, [0.5, 1.0], 3, seed=9, workers=3)
    assert a == b
    assert len(a) == 6


def test_timing_profile_rows(natural1):
    spec, k = natural1
    rows = hn.timing_profile(k, spec.moment, [32, 64], reps=1)
    assert [r["pixels"] for r in rows] == [1024, 4096]
    assert all(r["seconds"] > 0 for r in rows)


def test_report_json_is_plain(tmp_path, blur_manifest, natural_cfg):
    rep = hn.run_benchmark(hn.load_manifest(blur_manifest), natural_cfg)
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["statistics"]["n"] == 8


def test_score_single_matches_batch(natural_cfg, sharp_paths):
    (r,) = hn.score_batch([sharp_paths[2]], natural_cfg)
    img = hn.read_image(sharp_paths[2])
    assert r.objective == score_single(img, natural_cfg.kernels[0], 12).value
