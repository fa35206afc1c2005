"""End-to-end acceptance checks for the shipped pipeline.

Each test prints one PASS/FAIL line; run with `pytest tests/test_acceptance.py -v -s`
to see them.  The reference experiment is the default synthetic volume: a
50^3 cube, foreground sphere of radius 20, intensities 100 over 0, uniform
noise on [0, 120) everywhere, segmented with k=2, g=1, 10 EM iterations,
10 MAP iterations, 6-neighborhood.
"""

import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from hmrfseg import io
from hmrfseg.cli import cli_main
from hmrfseg.emission import Gaussian1D, LabelModel, ModelSet
from hmrfseg.gmm_fit import FitConfig, fit_gmm
from hmrfseg.hmrf import m_step, posterior_step
from hmrfseg.icm import EnergyTrace, MapConfig, map_estimate
from hmrfseg.kmeans import kmeans
from hmrfseg.lattice import NEIGHBORHOOD_OFFSETS, Lattice
from hmrfseg.icm import count_label_disagreements

from _oracles import fsum_weighted_mean_var, grid_edges, total_energy

DATA_DIR = Path(__file__).parent / "data"


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE FAIL: {name}")
        raise
    print(f"ACCEPTANCE PASS: {name}")


def scalar_models(params):
    return ModelSet(
        tuple(
            LabelModel(weights=np.array([1.0]), components=(Gaussian1D(mu, sigma),))
            for mu, sigma in params
        )
    )


@pytest.fixture(scope="module")
def sphere_pipeline(tmp_path_factory, capsys=None):
    """Run the full default pipeline once through the CLI; share the outputs."""
    root = tmp_path_factory.mktemp("sphere")
    vol_path = root / "volume.raw"
    seg_path = root / "labels.lbl"
    trace_path = root / "trace.csv"

    assert cli_main(["gen-volume", "--out", str(vol_path), "--seed", "0"]) == 0

    start = time.perf_counter()
    code = cli_main(
        [
            "segment-volume",
            "--in",
            str(vol_path),
            "--out",
            str(seg_path),
            "--k",
            "2",
            "--g",
            "1",
            "--em-iters",
            "10",
            "--map-iters",
            "10",
            "--neighborhood",
            "n6",
            "--trace",
            str(trace_path),
            "--seed",
            "0",
        ]
    )
    elapsed = time.perf_counter() - start
    assert code == 0

    volume = io.read_raw_volume(vol_path).astype(float)
    truth, _ = io.read_label_map(str(vol_path) + ".truth")
    labels, _ = io.read_label_map(seg_path)
    lattice = Lattice(volume.shape, "n6")
    km = kmeans(lattice.flatten_sites(volume), 2, seed=0)
    return {
        "volume": volume,
        "truth": truth,
        "labels": labels,
        "lattice": lattice,
        "kmeans_labels": km.labels.reshape(lattice.dims),
        "trace_path": trace_path,
        "vol_path": vol_path,
        "elapsed": elapsed,
    }


def test_sphere_reproduction(sphere_pipeline):
    with criterion(
        "synthetic-sphere segmentation: Dice >= 0.95, beats k-means, <= 15 s"
    ):
        p = sphere_pipeline
        hmrf_dice = io.dice(p["labels"], p["truth"], label=1)
        km_dice = io.dice(p["kmeans_labels"], p["truth"], label=1)
        print(
            f"  dice(hmrf)={hmrf_dice:.4f} dice(kmeans)={km_dice:.4f} "
            f"runtime={p['elapsed']:.2f}s"
        )
        assert hmrf_dice >= 0.95
        assert hmrf_dice > km_dice
        assert p["elapsed"] <= 15.0


def test_smoothness_improvement(sphere_pipeline):
    with criterion("label smoothness: fewer disagreeing neighbor pairs than k-means"):
        p = sphere_pipeline
        hmrf_pairs = count_label_disagreements(p["labels"], p["lattice"])
        km_pairs = count_label_disagreements(p["kmeans_labels"], p["lattice"])
        print(f"  disagreeing pairs: hmrf={hmrf_pairs} kmeans={km_pairs}")
        assert hmrf_pairs < km_pairs


def test_icm_correctness_small_instances():
    with criterion(
        "MAP search on >= 100 small instances: never worse than its input; "
        "beta=0 equals the exhaustive per-site minimum"
    ):
        rng = np.random.default_rng(0)
        shapes = [((3, 4), "n4"), ((2, 6), "n8"), ((2, 2, 3), "n6"), ((1, 12), "n4"), ((2, 2, 3), "n26")]
        for trial in range(110):
            dims, kind = shapes[trial % len(shapes)]
            lattice = Lattice(dims, kind)
            params = [
                (float(rng.uniform(-4, 4)), float(rng.uniform(0.5, 2.0))),
                (float(rng.uniform(-4, 4)), float(rng.uniform(0.5, 2.0))),
            ]
            models = scalar_models(params)
            y = rng.normal(0, 3, size=dims)
            x0 = rng.integers(0, 2, size=dims)
            edges = grid_edges(dims, NEIGHBORHOOD_OFFSETS[kind])

            out, _ = map_estimate(x0, y, models, lattice, MapConfig(beta=0.5))
            got = total_energy(out.reshape(-1), y.reshape(-1), params, edges, 0.5)
            started = total_energy(x0.reshape(-1), y.reshape(-1), params, edges, 0.5)
            assert got <= started + 1e-12

            out0, _ = map_estimate(x0, y, models, lattice, MapConfig(beta=0.0))
            unary = np.array(
                [
                    [
                        (z - mu) ** 2 / (2 * s**2) + math.log(s)
                        for mu, s in params
                    ]
                    for z in y.reshape(-1)
                ]
            )
            assert np.array_equal(out0.reshape(-1), np.argmin(unary, axis=1))


def test_posterior_normalization():
    with criterion("posterior rows sum to 1 within 1e-9 on random inputs"):
        rng = np.random.default_rng(1)
        cases = [((7, 9), "n8", 2), ((4, 5, 6), "n26", 3), ((1, 40), "n4", 4)]
        for dims, kind, k in cases:
            lattice = Lattice(dims, kind)
            params = [(float(rng.uniform(-5, 5)), float(rng.uniform(0.5, 3.0))) for _ in range(k)]
            models = scalar_models(params)
            y = rng.normal(0, 6, size=dims)
            x = rng.integers(0, k, size=dims)
            post = posterior_step(y, x, models, lattice, beta=0.5)
            assert np.allclose(post.sum(axis=-1), 1.0, atol=1e-9)
            assert post.min() >= 0.0


def test_m_step_closed_form():
    with criterion(
        "parameter update with hard posteriors reproduces per-label sample "
        "means and population variances within 1e-12"
    ):
        rng = np.random.default_rng(2)
        y = rng.normal(50, 20, size=(12, 13))
        labels = rng.integers(0, 3, size=(12, 13))
        post = np.eye(3)[labels]
        models = m_step(y, post, FitConfig(g=1))
        for l in range(3):
            vals = y[labels == l]
            mean, var = fsum_weighted_mean_var(vals, np.ones(vals.size))
            assert models[l].components[0].mu == pytest.approx(mean, rel=1e-12)
            assert models[l].components[0].sigma ** 2 == pytest.approx(var, rel=1e-12)


def test_gmm_recovery():
    with criterion(
        "two-component mixture fit recovers means within 0.3 and weights "
        "within 0.1 on a 500-draw seeded sample"
    ):
        rng = np.random.default_rng(3)
        pick = rng.random(500) < 0.5
        sample = np.where(pick, rng.normal(0.0, 1.0, 500), rng.normal(10.0, 1.0, 500))
        model = fit_gmm(sample, np.ones(500), FitConfig(g=2))
        order = np.argsort([c.mu for c in model.components])
        means = np.array([model.components[i].mu for i in order])
        weights = model.weights[order]
        # oracle: the generated sample's own component statistics
        lo, hi = sample[pick], sample[~pick]
        print(
            f"  fitted means={means.round(3)} true-sample means="
            f"[{lo.mean():.3f} {hi.mean():.3f}] weights={weights.round(3)}"
        )
        assert abs(means[0] - lo.mean()) < 0.3
        assert abs(means[1] - hi.mean()) < 0.3
        assert abs(weights[0] - pick.mean()) < 0.1
        assert abs(weights[1] - (1 - pick.mean())) < 0.1


def test_energy_bookkeeping(sphere_pipeline):
    with criterion(
        "trace CSV: total = likelihood + prior within 1e-9 and final <= first"
    ):
        trace = EnergyTrace.from_csv(sphere_pipeline["trace_path"])
        assert len(trace) == 10
        for rec in trace:
            assert abs(rec.total - (rec.likelihood + rec.prior)) <= 1e-9
        totals = trace.totals()
        print(f"  first={totals[0]:.2f} final={totals[-1]:.2f}")
        assert totals[-1] <= totals[0]


def test_cli_determinism(tmp_path):
    with criterion("identical CLI commands with identical seeds are byte-identical"):
        outputs = []
        for tag in ("one", "two"):
            vol = tmp_path / f"{tag}.raw"
            seg = tmp_path / f"{tag}.lbl"
            trace = tmp_path / f"{tag}.csv"
            assert cli_main(
                ["gen-volume", "--out", str(vol), "--extent", "20", "--radius", "7", "--seed", "3"]
            ) == 0
            assert cli_main(
                [
                    "segment-volume",
                    "--in",
                    str(vol),
                    "--out",
                    str(seg),
                    "--k",
                    "2",
                    "--em-iters",
                    "4",
                    "--trace",
                    str(trace),
                    "--seed",
                    "3",
                ]
            ) == 0
            outputs.append(
                (
                    vol.read_bytes(),
                    (tmp_path / f"{tag}.raw.truth").read_bytes(),
                    seg.read_bytes(),
                    trace.read_bytes(),
                )
            )
        assert outputs[0] == outputs[1]


def test_color_image_golden_regression(tmp_path):
    with criterion("64x64 color raster: label map identical to the shipped golden file"):
        out = tmp_path / "labels.ppm"
        code = cli_main(
            [
                "segment-image",
                "--in",
                str(DATA_DIR / "color_test_64.ppm"),
                "--out",
                str(out),
                "--k",
                "3",
                "--g",
                "1",
                "--seed",
                "0",
            ]
        )
        assert code == 0
        golden = (DATA_DIR / "color_test_64_labels.ppm").read_bytes()
        assert out.read_bytes() == golden
