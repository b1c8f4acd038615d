"""Acceptance suite: every exit criterion at its stated tolerance, one
PASS/FAIL line per criterion (run with -s to see them).

The two training fixtures run the real pipeline end to end on the
synthetic station at desk scale: a cleanly-separable 12-segment run, and a
second run with a texture-sharing segment pair to reproduce the
known-confusion structure. Everything here is property-based or
oracle-checked; no tolerance is deferred.
"""

import itertools
import time
from contextlib import contextmanager

import numpy as np
import pytest
from fastapi.testclient import TestClient

from legibility import analysis, corpus, nnet, projection, similarity, survey, synth
from legibility.cli import (_build_survey_service, cmd_analyze, cmd_evaluate,
                            cmd_prepare, cmd_synth, cmd_train)
from legibility.config import PipelineConfig
from legibility.server import create_app
from legibility.survey import FeatureClick, attention_overlap

from test_projection import FACE_COLORS, raytrace_cubemap_panorama, smooth_pano
from test_similarity import all_partitions, naive_modularity, random_graph
from test_survey import oracle_overlap


@contextmanager
def criterion(name):
    start = time.monotonic()
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL ({time.monotonic() - start:.1f}s)")
        raise
    print(f"\nACCEPTANCE {name}: PASS ({time.monotonic() - start:.1f}s)")


def desk_config(out_dir, ambiguity=0.0, shared_pair=None) -> PipelineConfig:
    config = PipelineConfig(seed=7, out_dir=str(out_dir))
    config.synth.num_segments = 12
    config.synth.panos_per_segment = 9      # 9 panos x 24 crops ~ 200/segment
    config.synth.pano_height = 128
    config.synth.ambiguity = ambiguity
    config.synth.shared_pair = shared_pair
    config.crop.out_size = 32
    config.dataset.balance_cap = 200
    config.dataset.test_fraction = 0.2
    config.model.input_size = 32
    config.model.stage_channels = [16, 32]
    config.model.stage_blocks = [1, 1]
    config.model.stem_stride = 2
    config.model.head_bias = True
    config.train.epochs = 16
    config.train.lr = 0.1
    config.train.batch_size = 64
    config.survey.pool_size = 30
    return config


def run_pipeline(config):
    cmd_synth(config)
    cmd_prepare(config)
    t0 = time.monotonic()
    cmd_train(config)
    train_time = time.monotonic() - t0
    cmd_evaluate(config)
    cmd_analyze(config)
    model, _ = nnet.load_model(config.checkpoint_path)
    segments = corpus.load_segments(config.corpus_dir / "segments.json")
    manifest = corpus.load_manifest(config.corpus_dir / "manifest.csv", segments)
    test_data = nnet.load_dataset(manifest.subset("test"), root=config.corpus_dir)
    result = nnet.evaluate(model, test_data)
    return {"config": config, "model": model, "eval": result,
            "train_time": train_time, "segments": segments, "manifest": manifest}


@pytest.fixture(scope="session")
def clean_run(tmp_path_factory):
    return run_pipeline(desk_config(tmp_path_factory.mktemp("clean")))


@pytest.fixture(scope="session")
def confusion_run(tmp_path_factory):
    return run_pipeline(desk_config(tmp_path_factory.mktemp("twins"),
                                    ambiguity=1.0, shared_pair=[10, 11]))


class TestProjectionFidelity:
    def test_cubemap_round_trip_and_equivariance(self):
        with criterion("projection fidelity"):
            start = time.monotonic()
            pano = projection.EquirectPanorama(
                id="cube", pixels=raytrace_cubemap_panorama(1024, 512))
            faces = projection.equirect_to_cube(pano, 64)
            for name, face in faces.as_dict().items():
                match = (face == FACE_COLORS[name]).all(axis=2).mean()
                assert match >= 0.99, f"face {name}: {match:.4f}"

            smooth = smooth_pano(512, 256, seed=1)
            shift_px = 64
            shift_deg = shift_px * 360.0 / smooth.width
            rolled = projection.EquirectPanorama(
                id="r", pixels=np.roll(smooth.pixels, -shift_px, axis=1))
            for yaw in (0.0, 45.0, 200.0):
                a = projection.crop_perspective(
                    rolled, projection.CropSpec(yaw=yaw, pitch=0, out_size=64))
                b = projection.crop_perspective(
                    smooth, projection.CropSpec(yaw=(yaw + shift_deg) % 360,
                                                pitch=0, out_size=64))
                err = np.abs(a.astype(float) - b.astype(float)).mean()
                assert err < 2.0, f"shift equivariance error {err:.3f}/255"
            assert time.monotonic() - start < 30.0


class TestGradientCorrectness:
    def test_full_mini_resnet_finite_differences(self):
        with criterion("gradient correctness"):
            start = time.monotonic()
            cfg = nnet.ModelConfig(num_classes=6, input_size=16,
                                   stage_channels=(6, 12), stage_blocks=(1, 1),
                                   stem_stride=1)
            rng = np.random.default_rng(0)
            worst = 0.0
            probed = 0
            for trial in range(3):
                model = nnet.build_model(cfg, seed=trial)
                image = rng.integers(0, 255, (16, 16, 3), dtype=np.uint8)
                err = nnet.grad_check(model, image, int(rng.integers(6)),
                                      num_params_probed=40, seed=trial)
                worst = max(worst, err)
                probed += 40
            assert probed >= 100
            assert worst < 1e-4, f"max relative error {worst:.2e}"
            assert time.monotonic() - start < 120.0


class TestEndToEndTraining:
    def test_heldout_accuracy(self, clean_run):
        with criterion("end-to-end training"):
            result = clean_run["eval"]
            counts = np.bincount(result.labels)
            assert len(counts) == 12 and counts.min() > 0
            assert clean_run["train_time"] < 30 * 60
            assert result.top1_accuracy >= 90.0, f"top1 {result.top1_accuracy:.2f}"
            assert result.top5_accuracy >= 99.0, f"top5 {result.top5_accuracy:.2f}"


class TestKnownConfusionRecovery:
    def test_twin_pair_tops_affinity_and_floors_confidence(self, confusion_run):
        with criterion("known-confusion recovery"):
            result = confusion_run["eval"]
            aff = similarity.affinity(result)
            pairs = similarity.top_pairs(aff, 5)
            assert pairs[0] == (10, 11), f"rank-1 pair is {pairs[0]}"
            rows = result.per_segment()
            by_conf = sorted(rows, key=lambda r: r[4])
            lowest_two = {by_conf[0][0], by_conf[1][0]}
            assert lowest_two == {10, 11}, f"lowest-confidence segments {lowest_two}"


class TestCamIdentity:
    def test_mean_equals_logit_and_naive_oracle(self):
        with criterion("activation-map identity"):
            rng = np.random.default_rng(1)
            checked = 0
            for trial in range(10):
                cfg = nnet.ModelConfig(
                    num_classes=int(rng.integers(2, 7)), input_size=12,
                    stage_channels=(int(rng.integers(2, 5)), int(rng.integers(4, 8))),
                    stage_blocks=(1, 1), stem_stride=1)
                model = nnet.build_model(cfg, seed=trial).astype(np.float64)
                for _ in range(100):
                    image = rng.integers(0, 255, (12, 12, 3), dtype=np.uint8)
                    fwd = nnet.forward(model, image)
                    c = int(rng.integers(cfg.num_classes))
                    raw = analysis.cam(fwd.feature_maps, model.head_w, c)
                    assert abs(raw.mean() - fwd.logits[c]) < 1e-6
                    checked += 1
            assert checked >= 1000

            for _ in range(20):
                k, h, w, s = rng.integers(2, 8, 4)
                feats = rng.standard_normal((k, h, w))
                head = rng.standard_normal((s, k))
                c = int(rng.integers(s))
                got = analysis.cam(feats, head, c)
                naive = np.zeros((h, w))
                for x in range(h):
                    for y in range(w):
                        for kk in range(k):
                            naive[x, y] += head[c, kk] * feats[kk, x, y]
                assert np.abs(got - naive).max() < 1e-10


class TestMatrixOracles:
    def test_covariance_and_affinity_against_naive_formulas(self):
        with criterion("covariance/affinity oracles"):
            rng = np.random.default_rng(2)
            for _ in range(100):
                n, s = int(rng.integers(2, 20)), int(rng.integers(2, 6))
                x = rng.standard_normal((n, s)) * rng.uniform(0.5, 3)
                q = similarity.covariance(x)
                assert np.array_equal(q, q.T)
                means = x.sum(axis=0) / n
                j, k = int(rng.integers(s)), int(rng.integers(s))
                acc = sum((x[i, j] - means[j]) * (x[i, k] - means[k])
                          for i in range(n))
                assert abs(q[j, k] - acc / (n - 1)) < 1e-10

            for _ in range(100):
                s = int(rng.integers(2, 6))
                n = int(rng.integers(s, 4 * s))
                probs = rng.dirichlet(np.ones(s), size=n)
                labels = np.concatenate([np.arange(s), rng.integers(0, s, n - s)])
                ev = nnet.EvalResult(probs=probs, labels=labels,
                                     class_segments=list(range(s)),
                                     image_paths=[str(i) for i in range(n)],
                                     meta=[{}] * n)
                aff = similarity.affinity(ev)
                assert np.array_equal(aff.matrix, aff.matrix.T)
                i, j = int(rng.integers(s)), int(rng.integers(s))
                i_rows = probs[labels == i]
                j_rows = probs[labels == j]
                expected = i_rows[:, j].mean() + j_rows[:, i].mean()
                assert abs(aff.matrix[i, j] - expected) < 1e-10


class TestLouvainAcceptance:
    def test_trace_optimality_and_move_gains(self):
        with criterion("greedy modularity clustering"):
            rng = np.random.default_rng(3)
            for trial in range(100):
                g = random_graph(rng, int(rng.integers(4, 14)))
                part = similarity.louvain(g, seed=trial)
                trace = part.q_trace
                assert all(b >= a - 1e-12 for a, b in zip(trace, trace[1:]))

            hits = total = 0
            for trial in range(25):
                n = int(rng.integers(4, 9))
                g = random_graph(rng, n, density=0.5)
                part = similarity.louvain(g, seed=trial)
                best = max(naive_modularity(g.adjacency, p)
                           for p in all_partitions(n))
                assert part.q <= best + 1e-12
                total += 1
                if part.q >= best - 1e-9:
                    hits += 1
            assert hits / total >= 0.8, f"optimal on {hits}/{total}"

            adj = np.zeros((10, 10))
            for block in (range(5), range(5, 10)):
                for i, j in itertools.combinations(block, 2):
                    adj[i, j] = adj[j, i] = 1.0
            adj[0, 5] = adj[5, 0] = 1.0
            part = similarity.louvain(similarity.SimilarityGraph(adjacency=adj), seed=0)
            groups = {}
            for node, c in enumerate(part.communities):
                groups.setdefault(c, set()).add(node)
            assert set(map(frozenset, groups.values())) == {
                frozenset(range(5)), frozenset(range(5, 10))}

            for trial in range(10):
                n = int(rng.integers(4, 11))
                g = random_graph(rng, n)
                comm = rng.integers(0, 3, n)
                for node in range(n):
                    isolated = comm.copy()
                    isolated[node] = comm.max() + 1
                    q_iso = similarity.modularity(g, isolated)
                    for target in set(isolated):
                        moved = isolated.copy()
                        moved[node] = target
                        expected = similarity.modularity(g, moved) - q_iso
                        got = similarity.delta_q(g, isolated, node, int(target))
                        assert abs(got - expected) < 1e-10


class TestAttentionOverlapAcceptance:
    def test_oracle_uniform_and_bounds(self):
        with criterion("attention-overlap score"):
            rng = np.random.default_rng(4)
            for _ in range(100):
                h, w = int(rng.integers(8, 28)), int(rng.integers(8, 28))
                heat = rng.uniform(0, 1, (h, w))
                clicks = [(float(rng.uniform(0, w - 1)), float(rng.uniform(0, h - 1)))
                          for _ in range(3)]
                fc = tuple(FeatureClick(x, y, "object") for x, y in clicks)
                radius = float(rng.uniform(1, 9))
                got = attention_overlap(heat, fc, radius=radius)
                want = oracle_overlap(heat, clicks, radius)
                assert abs(got - want) < 1e-12

            heat = np.full((64, 64), 0.25)
            fc = (FeatureClick(5, 5, "object"), FeatureClick(50, 20, "color"),
                  FeatureClick(30, 60, "light"))
            assert attention_overlap(heat, fc, radius=10.0) == 1.0

            for _ in range(10_000):
                heat = rng.uniform(0, 1, (10, 10)) * (rng.random() > 0.03)
                fc = tuple(FeatureClick(float(rng.uniform(-4, 14)),
                                        float(rng.uniform(-4, 14)), "object")
                           for _ in range(3))
                v = attention_overlap(heat, fc, radius=float(rng.uniform(0.1, 8)))
                assert 0.0 <= v <= 1.0


class TestSurveyServiceAcceptance:
    def test_fifty_participants_full_protocol(self, confusion_run):
        with criterion("survey service protocol"):
            start = time.monotonic()
            config = confusion_run["config"]
            service = _build_survey_service(config)
            app = create_app(service, static_dir=str(config.corpus_dir))

            aff_matrix, node_ids = similarity.load_matrix_csv(
                config.analysis_dir / "affinity.csv")
            aff = similarity.SegmentAffinity(
                matrix=aff_matrix, counts=np.ones(len(node_ids)),
                class_segments=node_ids)

            rng = np.random.default_rng(5)
            submitted = 0
            with TestClient(app) as client:
                for p in range(50):
                    for step in range(5):
                        q = client.get("/api/question",
                                       params={"participant": f"sim{p}"}).json()
                        assert not q["done"], (p, step)
                        # role integrity for every served question
                        sq = service.by_id[q["question_id"]]
                        roles_inv = {r: img for img, r in sq.roles.items()}
                        b_segment = sq.choice_segments[roles_inv["image_b"]]
                        anchor_cls = node_ids.index(sq.segment_a)
                        assert b_segment == node_ids[
                            survey.argmax_partner(aff, anchor_cls)]

                        body = {
                            "participant": f"sim{p}",
                            "question_id": q["question_id"],
                            "chosen_image": q["choice_urls"][int(rng.integers(3))],
                            "clicks": [{"x": float(rng.uniform(0, 31)),
                                        "y": float(rng.uniform(0, 31)),
                                        "property": "object"}] * 3,
                            "dwell_ms": float(rng.uniform(4000, 20000)),
                            "token": f"tok-{p}-{step}",
                        }
                        r = client.post("/api/response", json=body)
                        assert r.status_code == 201, r.text
                        submitted += 1
                    assert client.get("/api/question",
                                      params={"participant": f"sim{p}"}).json()["done"]

                choices = client.get("/api/stats/choices").json()
                assert choices["total"] == submitted == 250
                assert sum(choices["percentages"].values()) == pytest.approx(100.0)
                props = client.get("/api/stats/properties").json()
                for rank in props["ranks"]:
                    assert sum(rank["percentages"].values()) == pytest.approx(100.0)

            # replay: a fresh store handle reproduces the aggregates exactly
            replayed = survey.ResponseStore(config.response_store_path)
            assert len(replayed) == 250
            again = survey.aggregate_choices(replayed.responses(), service.questions)
            assert again["counts"] == choices["counts"]
            assert time.monotonic() - start < 120.0
