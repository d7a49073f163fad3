import math
import textwrap

import pytest
from PIL import Image

import biasforge as bf


def test_leaky_relu_and_interval():
    assert bf.leaky_relu(2.0, 0.1) == 2.0
    assert bf.leaky_relu(-2.0, 0.1) == pytest.approx(-0.2, abs=1e-12)
    assert bf.two_sided_z(0.95) == pytest.approx(1.959964, abs=1e-6)
    lo, hi = bf.confidence_interval([0.7] * 500)
    assert lo == pytest.approx(0.7, abs=1e-12)
    assert hi == pytest.approx(0.7, abs=1e-12)


def test_errors_carry_their_kind():
    with pytest.raises(bf.BiasforgeError) as info:
        bf.confidence_interval([0.5])
    assert bf.error_kind(info.value) == "InsufficientSamples"


def make_tree(root, per_class):
    colours = {"bear": (200, 40, 40), "dog": (40, 200, 40), "sheep": (40, 40, 200)}
    for name, rgb in colours.items():
        (root / name).mkdir(parents=True)
        for i in range(per_class):
            Image.new("RGB", (8, 8), tuple(min(255, c + i) for c in rgb)).save(root / name / f"{i:03d}.png")


def test_ingest_split_render(tmp_path):
    make_tree(tmp_path / "real", 10)
    manifest, rejects = bf.ingest(tmp_path / "real")
    assert rejects == []
    assert manifest["class_set"] == ["bear", "dog", "sheep"]
    assert len(manifest["records"]) == 30
    train, val = bf.stratified_split(manifest, 4, 1, seed=3)
    assert len(train["records"]) == 24
    assert len(val["records"]) == 6

    spec = {"spec_id": "py", "class_label": "bear", "count": 2, "image_width": 32, "image_height": 24,
            "master_seed": 1, "texture_seed": 2}
    rendered, params = bf.render_batch(spec, tmp_path / "renders")
    assert len(rendered["records"]) == 2
    assert len(params) == 2
    with Image.open(tmp_path / "renders" / "py" / "bear" / "img_00000.png") as img:
        assert img.size == (32, 24)


def test_compare_identify_recommend(tmp_path):
    def stats(means):
        return [{"class": c, "min": m, "mean": m, "max": m, "ci_lo": m, "ci_hi": m, "replicate_accuracies": [m, m]}
                for c, m in means.items()]

    base = stats({"bear": 0.5348, "dog": 0.87062, "sheep": 0.68271})
    aug = stats({"bear": 0.6484, "dog": 0.82293, "sheep": 0.74201})
    report = bf.compare_models([("f_R", base), ("f_S", aug)])
    assert report["models"] == ["f_R", "f_S"]
    assert math.isclose(report["deltas"]["bear"][1], 0.1136, abs_tol=1e-9)
    assert report["regressed_classes"] == ["dog"]
    assert bf.identify_bias(base) == ["bear"]
    assert bf.identify_bias(base, "below_threshold", threshold=0.7) == ["bear", "sheep"]
    rec = bf.recommend_augmentation(["bear", "sheep"], {"spec_id": "aug", "class_label": "x", "count": 1})
    assert [s["count"] for s in rec["draft_specs"]] == [200, 200]
    chart = bf.emit_comparison_chart(report, tmp_path)
    with Image.open(chart) as img:
        assert img.size[0] > 0


def test_run_plan(tmp_path):
    make_tree(tmp_path / "real", 10)
    make_tree(tmp_path / "eval", 4)
    plan = tmp_path / "plan.yaml"
    plan.write_text(textwrap.dedent("""\
        name: py_plan
        real_data_root: real
        eval_data_root: eval
        output_dir: out
        master_seed: 2
        train: {epochs: 1, learning_rate: 0.001, input_size: [8, 8], hidden_units: 8, batch_size: 8}
        bootstrap: {replicates: 5, per_class_n: 4}
        stages: [base]
        """))
    report = bf.run_experiment(plan)
    assert report["models"] == ["base"]
    assert (tmp_path / "out" / "report.csv").exists()
