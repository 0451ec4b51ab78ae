"""Acceptance suite: one test per release criterion.

Run with ``pytest tests/test_acceptance.py -v``; a per-criterion
PASS/FAIL summary is printed at the end of the session (see conftest).
The corpus-dependent criterion 8 is skipped automatically unless the
FRAGNET_FFT75 environment variable points at a 4,096-byte block archive
with base-type labels.
"""

import csv
import os
import time

import numpy as np
import pytest

from fragnet import cli, corpus, net, report, tpe
from fragnet import tensor as tz
from fragnet.net import TrainConfig
from fragnet.tensor import Precision, Tensor

from gradcheck import (TOLERANCE, finite_difference, max_relative_error,
                       sampled_finite_difference)
from reference import ref_cooccurrence, ref_feature_dict, relative_close

SEEDS_10 = tuple(range(10))


# expected parameter totals for the twelve preset tuned architectures
PRESET_PARAM_COUNTS = {
    (1, 512): 289_995,
    (2, 512): 269_323,
    (3, 512): 690_073,
    (4, 512): 474_885,
    (5, 512): 336_770,
    (6, 512): 242_114,
    (1, 4096): 449_867,
    (2, 4096): 597_259,
    (3, 4096): 453_529,
    (4, 4096): 684_485,
    (5, 4096): 138_386,
    (6, 4096): 666_242,
}


def test_c1_parameter_count_oracle():
    """Every preset architecture row reproduces its parameter total
    with integer equality; runtime below one second."""
    start = time.perf_counter()
    for (scenario, block_size), expected in PRESET_PARAM_COUNTS.items():
        spec = net.preset_model(scenario, block_size)
        assert net.param_count(spec) == expected, (scenario, block_size)
    assert net.param_count(net.build_nn_co(75)) == 44_304_571
    assert time.perf_counter() - start < 1.0


class TestC2GradientCorrectness:
    """Central finite differences in verification precision against every
    backward rule, ten seeds, max relative error below 1e-4."""

    def _project(self, build, x0, seed):
        rng = np.random.default_rng(seed)
        probe = rng.normal(size=build(Tensor(x0)).shape)

        def scalar(arr):
            return float((build(Tensor(arr)).data * probe).sum())

        x = Tensor(x0.copy(), requires_grad=True)
        tz.total(build(x), probe).backward()
        return max_relative_error(x.grad, finite_difference(scalar, x0))

    def test_c2_gradient_correctness(self):
        start = time.perf_counter()
        worst = 0.0
        for seed in SEEDS_10:
            rng = np.random.default_rng(seed)

            x = rng.normal(size=(6, 3))
            x[np.abs(x) < 1e-3] += 0.01  # keep clear of the activation kink
            worst = max(worst, self._project(
                lambda t: tz.leaky_relu(t, 0.3), x, seed))

            x = rng.normal(size=(11, 3))
            k = Tensor(rng.normal(size=(4, 3, 3)))
            b = Tensor(rng.normal(size=4))
            worst = max(worst, self._project(
                lambda t: tz.conv1d(t, k, b, 2), x, seed))
            kt = Tensor(rng.normal(size=(4, 3, 3)).copy(), requires_grad=True)
            probe = rng.normal(size=(9, 4))
            tz.total(tz.conv1d(Tensor(x), kt, b), probe).backward()
            fd = finite_difference(
                lambda arr: float((tz.conv1d(Tensor(x), Tensor(arr), b).data
                                   * probe).sum()), kt.data.copy())
            worst = max(worst, max_relative_error(kt.grad, fd))

            x2 = rng.normal(size=(6, 5, 2))
            k2 = Tensor(rng.normal(size=(3, 2, 2, 2)))
            b2 = Tensor(rng.normal(size=3))
            worst = max(worst, self._project(
                lambda t: tz.conv2d(t, k2, b2), x2, seed))

            x = rng.permutation(30).reshape(10, 3).astype(np.float64)
            worst = max(worst, self._project(
                lambda t: tz.max_pool1d(t, 3), x, seed))

            worst = max(worst, self._project(
                tz.global_avg_pool, rng.normal(size=(7, 4)), seed))

            w = Tensor(rng.normal(size=(4, 6)))
            bb = Tensor(rng.normal(size=4))
            worst = max(worst, self._project(
                lambda t: tz.dense(t, w, bb), rng.normal(size=6), seed))

            table = Tensor(rng.normal(size=(8, 3)).copy(), requires_grad=True)
            idx = rng.integers(0, 8, size=(2, 6))
            probe = rng.normal(size=(2, 6, 3))
            tz.total(tz.embedding(table, idx), probe).backward()
            fd = finite_difference(
                lambda arr: float((tz.embedding(Tensor(arr), idx).data
                                   * probe).sum()), table.data.copy())
            worst = max(worst, max_relative_error(table.grad, fd))

            worst = max(worst, self._project(
                lambda t: tz.dropout(t, 0.3, np.random.default_rng(seed)),
                rng.normal(size=(5, 4)), seed))

            logits = rng.normal(size=7)
            lt = Tensor(logits.copy(), requires_grad=True)
            loss, _ = tz.softmax_cross_entropy(lt, 3)
            loss.backward()
            fd = finite_difference(
                lambda arr: float(tz.softmax_cross_entropy(Tensor(arr), 3)[0].data),
                logits.copy())
            worst = max(worst, max_relative_error(lt.grad, fd))

        assert worst < TOLERANCE, f"op-level max relative error {worst}"

        # full preset scenario-5 architecture, sampled parameter probes
        spec = net.preset_model(5, 512)
        model_worst = 0.0
        for seed in SEEDS_10:
            rng = np.random.default_rng(1000 + seed)
            params = net.init_params(spec, seed, Precision.VERIFICATION)
            ptensors = net._wrap_params(params, True)
            x = rng.integers(0, 256, size=(2, 512), dtype=np.uint8)
            y = np.array([0, 1])

            def loss_value():
                logits = net._forward_logits(spec, ptensors, x, False, None)
                return float(tz.softmax_cross_entropy(logits, y)[0].data)

            logits = net._forward_logits(spec, ptensors, x, False, None)
            loss, _ = tz.softmax_cross_entropy(logits, y)
            loss.backward()
            for li, layer in enumerate(params):
                for key, arr in layer.items():
                    coords = rng.integers(0, arr.size, size=2)
                    fd = sampled_finite_difference(loss_value, arr, coords)
                    analytic = ptensors[li][key].grad.reshape(-1)[coords]
                    model_worst = max(model_worst,
                                      max_relative_error(analytic, fd))
            for layer in ptensors:
                for t in layer.values():
                    t.zero_grad()
        assert model_worst < TOLERANCE, f"model max relative error {model_worst}"
        assert time.perf_counter() - start < 60.0


def test_c3_feature_oracle_equivalence():
    """All 14 global features and the pooled co-occurrence matrix match
    the pure-Python brute-force oracle on 1,000 random blocks per block
    size at 1e-9 relative tolerance."""
    start = time.perf_counter()
    from fragnet import features as ft
    for size in (512, 4096):
        rng = np.random.default_rng(size)
        for i in range(1000):
            block = rng.integers(0, 256, size, dtype=np.uint8).tobytes()
            got = ft.global_features(block)
            want = ref_feature_dict(block)
            for name in ft.FEATURE_NAMES:
                assert relative_close(getattr(got, name), want[name]), (
                    f"{name} mismatch on block {i} of size {size}")
        # co-occurrence: counts and pooling must agree exactly
        for i in range(1000):
            block = rng.integers(0, 256, size, dtype=np.uint8).tobytes()
            co = ft.cooccurrence(block)
            counts, pooled = ref_cooccurrence(block)
            assert np.array_equal(co.counts, np.array(counts)), f"block {i}"
            assert np.array_equal(co.pooled, np.array(pooled)), f"block {i}"
    assert time.perf_counter() - start < 60.0


def test_c4_tpe_convergence():
    """The single-dimension indicator objective is solved within 225
    trials in at least 99% of 50 seeded runs, and the winning value is
    selected at more than twice the uniform rate after warm-up."""
    start = time.perf_counter()
    space = tpe.SearchSpace(dims=net.hyperparameter_space())

    def objective(config):
        return 1.0 if config["conv_kernel"] == 64 else 0.0

    found = 0
    freq_ok = 0
    for seed in range(50):
        state = tpe.TpeState(space=space, rng_seed=seed)
        result = tpe.run_search(objective, state)
        if result.best.score == 1.0:
            found += 1
        post = [t for t in result.history if t.index >= state.n_startup]
        freq = sum(t.config["conv_kernel"] == 64 for t in post) / len(post)
        if freq > 2 * (1 / len(dict(space.dims)["conv_kernel"])):
            freq_ok += 1
    assert found >= int(np.ceil(0.99 * 50)), f"solved only {found}/50 runs"
    assert freq_ok >= 45, f"selection pressure in only {freq_ok}/50 runs"
    assert time.perf_counter() - start < 60.0


def test_c5_end_to_end_training():
    """Four synthetic classes, 4,000 blocks each at 512 bytes, preset
    scenario-5 architecture: hold-out accuracy at least 0.95 within 10
    epochs, under 10 minutes."""
    start = time.perf_counter()
    kinds = ["constant", "uniform_random", "ascii_text", "delta_structured"]
    ds = corpus.synth_corpus([(k, 4000) for k in kinds], 512, seed=11)
    spec = net.preset_model(5, 512, n_classes=4)
    # one epoch (~6 min on one core) already clears the bar by a wide
    # margin; training longer would break the wall-clock budget
    cfg = TrainConfig(batch_size=128, max_epochs=1, seed=11)
    params, history = net.train(spec, ds, cfg)
    assert len(history) <= 10

    test = ds.part("test")
    x = net.model_inputs(spec, test)
    y = np.array([b.label for b in test])
    _, acc = net.evaluate(spec, params, x, y)
    elapsed = time.perf_counter() - start
    print(f"\nc5: hold-out accuracy {acc:.4f} after {len(history)} epochs "
          f"in {elapsed:.0f} s")
    assert acc >= 0.95
    assert elapsed < 600.0


def test_c6_scenario_mapping_oracle():
    """Class counts and composition sums reproduce exactly from the
    shipped taxonomy; the camera scenario excludes everything that is
    not JPEG or one of the 16 photographic/video types."""
    assert corpus.N_FILE_TYPES == 75
    for sid, expected in {1: 75, 2: 11, 3: 25, 4: 5, 5: 2, 6: 2}.items():
        assert corpus.scenario(sid).n_classes == expected

    import collections
    group_sizes = collections.Counter(g for _, g in corpus.FILE_TYPES)
    assert [group_sizes[g] for g in corpus.GROUPS] == [6, 11, 3, 7, 13, 4, 7,
                                                       4, 9, 7, 4]
    s2 = corpus.scenario(2)
    per_class = collections.Counter(s2.mapping.values())
    assert [per_class[i] for i in range(11)] == [6, 11, 3, 7, 13, 4, 7, 4, 9, 7, 4]
    assert sum(per_class.values()) == 75

    s3 = collections.Counter(corpus.scenario(3).mapping.values())
    assert sorted(s3.values()) == [1] * 24 + [51]
    s4 = collections.Counter(corpus.scenario(4).mapping.values())
    assert [s4[i] for i in range(5)] == [1, 11, 7, 5, 51]
    s5 = collections.Counter(corpus.scenario(5).mapping.values())
    assert [s5[i] for i in range(2)] == [1, 74]

    s6 = corpus.scenario(6)
    included = collections.Counter(s6.mapping.values())
    assert [included[i] for i in range(2)] == [1, 16]
    excluded = [i for i in range(75) if corpus.apply_scenario(i, s6) is None]
    assert len(excluded) == 58
    photographic = {i for i, (name, group) in enumerate(corpus.FILE_TYPES)
                    if group == "raw"
                    or name in ("jpg", "3gp", "mov", "mkv", "tiff", "heic")}
    assert set(excluded).isdisjoint(photographic)


def test_c7_determinism(tmp_path):
    """Rerunning train and search with identical seeds produces
    byte-identical CSV outputs, wall-clock columns excluded."""
    data = tmp_path / "data"
    assert cli.main(["synth", "--blocks-per-class", "60",
                     "--kinds", "constant,uniform_random",
                     "--seed", "3", "--out", str(data)]) == 0
    archive = str(data / "corpus.blocks")

    hp = ("dense_units=32,embedding_dim=16,conv_kernel=16,conv_stride=11,"
          "n_conv_blocks=1,maxpool_size=8")
    train_args = ["train", "--data", archive, "--hp", hp, "--epochs", "2",
                  "--batch-size", "32", "--seed", "5"]
    assert cli.main(train_args + ["--out", str(tmp_path / "t1")]) == 0
    assert cli.main(train_args + ["--out", str(tmp_path / "t2")]) == 0
    assert ((tmp_path / "t1" / "history.csv").read_bytes()
            == (tmp_path / "t2" / "history.csv").read_bytes())
    assert ((tmp_path / "t1" / "model.fnm").read_bytes()
            == (tmp_path / "t2" / "model.fnm").read_bytes())

    search_args = ["search", "--data", archive, "--budget", "5",
                   "--startup", "2", "--trial-epochs", "1", "--epochs", "1",
                   "--batch-size", "32", "--seed", "6"]
    assert cli.main(search_args + ["--out", str(tmp_path / "s1")]) == 0
    assert cli.main(search_args + ["--out", str(tmp_path / "s2")]) == 0

    def rows_without_wall(path):
        with open(path) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            drop = header.index("wall_seconds")
            return [[c for i, c in enumerate(row) if i != drop]
                    for row in reader]

    assert (rows_without_wall(tmp_path / "s1" / "search_log.csv")
            == rows_without_wall(tmp_path / "s2" / "search_log.csv"))
    assert ((tmp_path / "s1" / "ei_trace.csv").read_bytes()
            == (tmp_path / "s2" / "ei_trace.csv").read_bytes())


def test_c8_fft75_subsample():
    """Optional corpus-dependent check: on an operator-supplied 4,096-byte
    subsample, the JPEG-vs-other model reaches 95% hold-out accuracy."""
    path = os.environ.get("FRAGNET_FFT75")
    if not path:
        pytest.skip("FRAGNET_FFT75 not set; corpus-dependent check skipped")
    block_size, blocks = corpus.read_block_archive(path)
    if block_size != 4096:
        pytest.skip(f"subsample has {block_size}-byte blocks; need 4096")
    ds = corpus.split(blocks, seed=0, block_size=block_size)
    scen = corpus.scenario(5)
    ds = corpus.map_dataset(ds, scen)
    spec = net.preset_model(5, 4096)
    cfg = TrainConfig(batch_size=128, max_epochs=10, seed=0)
    params, history = net.train(spec, ds, cfg)
    test = ds.part("test")
    x = net.model_inputs(spec, test)
    y = np.array([b.label for b in test])
    _, acc = net.evaluate(spec, params, x, y)
    preds, _ = net.predict(spec, params, x)
    cm = report.ConfusionMatrix.from_predictions(y, preds, scen.class_names)
    print(f"\nc8: JPEG-vs-other hold-out accuracy {acc:.4f}")
    assert acc >= 0.95
    assert cm.per_class_accuracy()[scen.jpeg_class()] > 0.0
