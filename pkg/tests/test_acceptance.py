"""Acceptance suite: one test per criterion, summarised as PASS/FAIL lines at the end of the run."""

import dataclasses
import json
import time

import numpy as np
import pytest
from scipy import ndimage

from carefulkin.cli import main as cli
from carefulkin.config import PipelineConfig
from carefulkin.errors import SegmentationError
from carefulkin.experiment import (
    PADDED_FRAMES,
    Layout,
    Task,
    assemble,
    balance_classes,
    generate_synthetic_trials,
    kruskal_wallis,
    loso_cross_validate,
    outlier_subject_report,
)
from carefulkin.features import R_MAX, Source, extract_features
from carefulkin.flow import FrameSequence, dense_flow, flow_descriptor_series
from carefulkin.nn import (
    LSTM,
    Conv1D,
    Dense,
    Dropout,
    MaxPool1D,
    Network,
    Regularization,
    build_cnn_lstm_dnn,
    build_masked_lstm_dnn,
    cross_entropy,
    forward,
)
from carefulkin.pipeline import preprocess_trial
from carefulkin.segment import segment_transport
from carefulkin.signal import UniformSeries
from gradcheck import check_layer, check_network, numeric_grad, rel_err
from scenes import brute_force_transport, bumps, circle, random_rotation, steady_amplitude, texture

ARCHS = ("cnn-lstm-dnn", "masked-lstm-dnn")
SOURCES = ("mocap", "flow")
CELLS = [(a, s) for a in ARCHS for s in SOURCES]


def note(record_property, text):
    record_property("detail", text)


# ---------------------------------------------------------------- gradients


@pytest.mark.criterion("gradient correctness")
def test_gradient_correctness(record_property):
    start = time.perf_counter()
    rng = np.random.default_rng(100)
    worst = {}
    for trial in range(3):
        b, t = int(rng.integers(2, 9)), int(rng.integers(4, 9))
        x2 = rng.normal(size=(b, 4))
        x3 = rng.normal(size=(b, t, 4))
        for act in ("linear", "relu", "sigmoid", "softmax"):
            layer = Dense(4, 3, act, rng=rng)
            worst[f"dense-{act}"] = max(worst.get(f"dense-{act}", 0), check_layer(layer, x2, layer.forward, seed=trial))
        conv = Conv1D(4, 3, 3, rng=rng)
        worst["conv"] = max(worst.get("conv", 0), check_layer(conv, x3, conv.forward, seed=trial))
        pool = MaxPool1D(2)
        xp = x3[:, : t - t % 2]
        worst["pool"] = max(worst.get("pool", 0), check_layer(pool, xp, pool.forward, seed=trial))
        drop = Dropout(0.5)
        worst["dropout-train"] = max(
            worst.get("dropout-train", 0),
            check_layer(drop, x2, lambda x: drop.forward(x, True, np.random.default_rng(trial)), seed=trial),
        )
        worst["dropout-off"] = max(worst.get("dropout-off", 0), check_layer(drop, x2, drop.forward, seed=trial))
        lstm = LSTM(4, 3, rng=rng)
        lengths = rng.integers(1, t + 1, size=b)
        mask = np.arange(t)[None] < lengths[:, None]
        xm = x3 * mask[..., None]
        worst["lstm-masked"] = max(
            worst.get("lstm-masked", 0), check_layer(lstm, xm, lambda x: lstm.forward(x, mask), n_probe=20, seed=trial)
        )
        s = rng.uniform(0.05, 0.95, size=(b, 2))
        y = np.eye(2)[rng.integers(0, 2, size=b)]
        _, ds = cross_entropy(s, y)
        for _ in range(6):
            idx = (int(rng.integers(0, b)), int(rng.integers(0, 2)))
            err = rel_err(numeric_grad(lambda: cross_entropy(s, y)[0], s, idx), ds[idx])
            worst["cross-entropy"] = max(worst.get("cross-entropy", 0), err)

    # whole networks, regularisers included, stronger than default so their terms matter
    reg = Regularization(0.01, 0.02, 0.03)
    nets = {
        "cnn-net": build_cnn_lstm_dnn(8, 4, n_subsequences=1, conv_filters=3, lstm_units=3, dense_units=4, regularization=reg),
        "masked-net": build_masked_lstm_dnn(8, 4, lstm_units=3, dense_units=4, regularization=reg),
        "masked-softmax-net": build_masked_lstm_dnn(8, 4, lstm_units=3, dense_units=4, output="softmax", regularization=reg),
    }
    for name, spec in nets.items():
        x = rng.normal(size=(8, 8, 4))
        y = np.eye(2)[rng.integers(0, 2, size=8)]
        mask = None
        if spec.architecture.value == "masked-lstm-dnn":
            mask = np.arange(8)[None] < rng.integers(1, 9, size=8)[:, None]
            x *= mask[..., None]
        worst[name] = check_network(Network(spec), x, y, mask, seed=1)

    elapsed = time.perf_counter() - start
    top = max(worst, key=worst.get)
    note(record_property, f"max rel err {worst[top]:.2e} ({top}), {elapsed:.1f} s")
    assert all(v < 1e-4 for v in worst.values()), worst
    assert elapsed < 60


# ---------------------------------------------------------------- filter


@pytest.mark.criterion("filter response at cutoff")
def test_filter_response(record_property):
    gains = {}
    for rate in (100.0, 22.0):
        for cutoff in (10.0, 5.0, 4.0):
            for order in (2, 4):
                gains[(rate, cutoff, order)] = 20 * np.log10(steady_amplitude(rate, cutoff, order, cutoff))
    worst = max(gains, key=lambda k: abs(gains[k] + 3.0))
    note(record_property, f"{len(gains)} configurations, worst {gains[worst]:.3f} dB at rate/cutoff/order {worst}")
    assert all(abs(g + 3.0) <= 0.5 for g in gains.values()), gains


# ---------------------------------------------------------------- kinematics


@pytest.mark.criterion("kinematic oracle")
def test_kinematic_oracle(record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(5):
        speed = float(rng.uniform(120, 320))
        series = circle(radius=100.0, speed=speed, rotation=random_rotation(rng), offset=rng.normal(0, 500, 3))
        V, C, R, A = extract_features(series, Source.MoCap).data[2:-2].T
        w = speed / 100.0
        for got, want in ((V, speed), (C, 1 / 100.0), (R, 100.0), (A, w)):
            worst = max(worst, float(np.max(np.abs(got / want - 1))))
    t = np.arange(30) / 22.0
    line = UniformSeries(22.0, np.column_stack([50 * t, 20 * t, -10 * t]) + 7.0)
    _, Cl, Rl, _ = extract_features(line, Source.MoCap).data.T
    note(record_property, f"worst relative error {worst:.4f} on 5 rotated arcs; line C max {Cl.max():.1e}")
    assert worst < 0.02
    assert np.all(Cl < 1e-9) and np.all(Rl == R_MAX)


# ---------------------------------------------------------------- segmentation


@pytest.mark.criterion("segmentation oracle")
def test_segmentation_oracle(record_property):
    rng = np.random.default_rng(2024)
    worst, mismatched = 0, 0
    for _ in range(200):
        amps = rng.uniform(0.5, 1.0, 3)
        sigma = rng.uniform(0.07, 0.13)
        centers = (0.5 + rng.uniform(0, 0.15), 1.5 + rng.uniform(-0.05, 0.05), 2.5 - rng.uniform(0, 0.15))
        _, v = bumps(amps, centers, sigma)
        v = v + rng.uniform(0, 0.002, v.size)
        seg = segment_transport(UniformSeries(100.0, v))
        # the oracle finds each peak near its known centre, independent of the detector
        p1, p2, p3 = (int(round(c * 100)) - 20 + int(np.argmax(v[int(round(c * 100)) - 20 : int(round(c * 100)) + 21]))
                      for c in centers)
        assert seg.peak_indices == (p1, p2, p3)
        lo = p1 + int(np.argmin(v[p1 : p2 + 1]))
        hi = p2 + int(np.argmin(v[p2 : p3 + 1]))
        want = brute_force_transport(v, p2, lo, hi)
        err = max(abs(a - b) for a, b in zip(seg.transport, want))
        worst = max(worst, err)
        mismatched += err > 0
        for k in (0.1, 1.0, 10.0):
            scaled = segment_transport(UniformSeries(100.0, k * v))
            assert (scaled.reach, scaled.transport, scaled.depart) == (seg.reach, seg.transport, seg.depart)
    note(record_property, f"200 profiles, worst boundary error {worst} frames, {mismatched} inexact, scale invariant")
    assert worst <= 1


# ---------------------------------------------------------------- masking


@pytest.mark.criterion("masking invariance")
def test_masking_invariance(record_property):
    rng = np.random.default_rng(5)
    net = Network(build_masked_lstm_dnn(PADDED_FRAMES, 4, seed=11))
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(10, PADDED_FRAMES + 1))
        seq = rng.normal(size=(1, n, 4))
        short = Network(build_masked_lstm_dnn(n, 4, seed=11))
        short.set_state(net.get_state())
        padded = np.zeros((1, PADDED_FRAMES, 4))
        padded[:, :n] = seq
        mask = np.arange(PADDED_FRAMES)[None] < n
        a = forward(net, padded, mask)
        b = forward(short, seq, np.ones((1, n), dtype=bool))
        worst = max(worst, float(np.abs(a - b).max()))
    note(record_property, f"100 sequences, max |padded - unpadded| = {worst:.1e}")
    assert worst <= 1e-12


# ---------------------------------------------------------------- default cohort


def _prepare(trials, source: Source, cfg: PipelineConfig):
    """Preprocess, drop failures and over-long transports, screen outliers, balance."""
    feats, failed = [], 0
    for rec in trials:
        try:
            f = preprocess_trial(rec, source, cfg.preprocess)
        except (SegmentationError, ValueError):
            failed += 1
            continue
        if f.features.frames > PADDED_FRAMES:
            failed += 1
            continue
        feats.append(f)
    report = outlier_subject_report(feats, cfg.dataset.outlier_factor)
    kept = [f for f in feats if f.subject_id not in report.flagged]
    return balance_classes(kept, cfg.dataset.class_cap, cfg.seed), failed, report


class Protocol:
    def __init__(self):
        self.cfg = PipelineConfig()
        start = time.perf_counter()
        trials = generate_synthetic_trials(self.cfg.synth_config())
        self.n_generated = len(trials)
        self.balanced, self.failed, self.outliers = {}, {}, {}
        for s in SOURCES:
            self.balanced[s], self.failed[s], self.outliers[s] = _prepare(trials, Source(s), self.cfg)
        self.prep_seconds = time.perf_counter() - start
        self.runs = {}

    def dataset(self, source, layout):
        return assemble(self.balanced[source], Layout(layout), Source(source))

    def run(self, arch, source, task):
        key = (arch, source, task)
        if key not in self.runs:
            cfg = dataclasses.replace(self.cfg, model=dataclasses.replace(self.cfg.model, architecture=arch))
            ds = self.dataset(source, cfg.layout)
            start = time.perf_counter()
            report = loso_cross_validate(ds, cfg.model_spec(), cfg.train_config(), Task(task))
            self.runs[key] = (report, time.perf_counter() - start)
        return self.runs[key]


@pytest.fixture(scope="session")
def protocol():
    return Protocol()


@pytest.mark.criterion("dataset shapes")
def test_dataset_shapes(protocol, record_property):
    details = []
    for s in SOURCES:
        small = protocol.dataset(s, "resampled32")
        padded = protocol.dataset(s, "padded132")
        assert small.shape == (940, 32, 4)
        assert padded.shape == (940, 132, 4)
        assert small.class_counts() == padded.class_counts() == {c: 235 for c in ("W1C1", "W1C2", "W2C1", "W2C2")}
        details.append(f"{s}: {small.shape} and {padded.shape}, {protocol.failed[s]} of {protocol.n_generated} trials dropped")
    note(record_property, "; ".join(details) + f"; 235 per class; prep {protocol.prep_seconds:.0f} s")


def _fmt(report):
    agg = report.aggregate()
    return f"{100 * agg['test_mean']:.1f} +/- {100 * agg['test_std']:.1f} %"


@pytest.mark.slow
@pytest.mark.criterion("end-to-end carefulness separability")
@pytest.mark.parametrize("arch,source", CELLS)
def test_carefulness_separability(protocol, arch, source, record_property):
    report, seconds = protocol.run(arch, source, "carefulness")
    note(record_property, f"{arch} / {source}: {_fmt(report)} over {len(report.folds)} folds in {seconds / 60:.1f} min")
    assert len(report.folds) == 15
    assert report.aggregate()["test_mean"] >= 0.90
    assert seconds < 15 * 60


@pytest.mark.slow
@pytest.mark.criterion("end-to-end weight difficulty")
@pytest.mark.parametrize("arch,source", CELLS)
def test_weight_harder_than_carefulness(protocol, arch, source, record_property):
    care, _ = protocol.run(arch, source, "carefulness")
    weight, seconds = protocol.run(arch, source, "weight")
    note(record_property, f"{arch} / {source}: weight {_fmt(weight)} vs carefulness {_fmt(care)} ({seconds / 60:.1f} min)")
    assert weight.aggregate()["test_mean"] < care.aggregate()["test_mean"]


# ---------------------------------------------------------------- statistics


@pytest.mark.criterion("statistics")
def test_statistics(record_property):
    h, df, p = kruskal_wallis([[1, 2, 3], [10, 11, 12]])
    assert h == pytest.approx(3.857, abs=1e-3)
    cfg = PipelineConfig()
    synth = dataclasses.replace(cfg.synth_config(), outlier_subjects=(8,))
    feats = []
    for rec in generate_synthetic_trials(synth):
        if rec.carefulness_class == "C1":
            feats.append(preprocess_trial(rec, Source.MoCap, cfg.preprocess))
    report = outlier_subject_report(feats)
    note(record_property, f"H = {h:.4f}; shifted cohort chi2({report.df}, N={report.n}) = {report.H:.1f}, "
         f"p = {report.p:.1e}, flagged {report.flagged}")
    assert report.df == 14 and report.p < 0.01
    assert report.flagged == [8]


# ---------------------------------------------------------------- determinism


@pytest.mark.criterion("determinism")
def test_determinism(tmp_path, record_property):
    blobs = []
    for run in ("a", "b"):
        out = tmp_path / run
        common = ["--out", str(out), "--seed", "13"]
        assert cli(["synth", *common, "--subjects", "3", "--trials", "16"]) == 0
        assert cli(["preprocess", *common, "--exclude-outliers", "none"]) == 0
        for arch in ARCHS:
            assert cli(["train-eval", *common, "--arch", arch, "--max-epochs", "3"]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted((out / "reports").glob("*.json"))})
    names = sorted(blobs[0])
    note(record_property, f"{len(names)} reports byte-identical across two seeded runs")
    assert len(names) == 2 and blobs[0] == blobs[1]
    assert json.loads(blobs[0][names[0]])["folds"]


# ---------------------------------------------------------------- optical flow


@pytest.mark.criterion("flow oracle")
def test_flow_oracle(record_property):
    h, w = 96, 128
    tex = texture(h + 40, w + 40, 21)
    base = tex[20 : 20 + h, 20 : 20 + w]
    interior = (slice(16, -16), slice(16, -16))
    worst = 0.0
    for du, dv in ((1.0, 0.0), (-2.0, 1.0), (0.5, -1.5), (2.5, 2.0)):
        moved = ndimage.shift(tex, (dv, du), order=3, mode="reflect")[20 : 20 + h, 20 : 20 + w]
        f = dense_flow(base, moved)
        worst = max(worst, abs(f.u[interior].mean() - du), abs(f.v[interior].mean() - dv))
    static = flow_descriptor_series(FrameSequence(22.0, np.repeat(base[None], 6, axis=0)))
    note(record_property, f"worst mean shift error {worst:.3f} px over 4 shifts; static scene max |u|,|v| = "
         f"{max(np.abs(static.u).max(), np.abs(static.v).max())}")
    assert worst <= 0.5
    assert np.all(static.u == 0) and np.all(static.v == 0)
