"""Smoke tests for the python bindings: every exposed operation runs end to
end on tiny inputs."""

import tempfile

import pytest

import byteprobe as bp


@pytest.fixture(scope="module")
def tiny_model():
    cfg = bp.ModelConfig()
    cfg.input_len = 128
    layers = []
    for filters in (16, 16, 24, 24, 32):
        layer = bp.LayerConfig()
        layer.filters = filters
        layer.kernel_width = 3
        layer.pool_width = 2
        layer.pool_stride = 2
        layers.append(layer)
    cfg.layers = layers
    return bp.build_model(cfg, seed=7)


@pytest.fixture(scope="module")
def corpus_samples():
    spec = bp.CorpusSpec()
    spec.count = 30
    spec.malware_ratio = 0.4
    spec.seed = 11
    return bp.generate_samples(spec)


def test_preprocess_pads_and_truncates():
    symbols = bp.preprocess(b"\x4d\x5a\x90", 5)
    assert symbols == [0x4D, 0x5A, 0x90, 256, 256]
    assert bp.preprocess(bytes(range(32)), 4) == [0, 1, 2, 3]


def test_model_roundtrip_and_predict(tiny_model):
    p = bp.predict(tiny_model, b"\x42" * 64)
    assert 0.0 < p < 1.0
    with tempfile.NamedTemporaryFile(suffix=".bscn") as f:
        bp.save_model(tiny_model, f.name)
        loaded = bp.load_model(f.name)
        assert bp.predict(loaded, b"\x42" * 64) == p
    assert "embedding" in tiny_model.parameter_names()


def test_desk_default_geometry():
    cfg = bp.ModelConfig.desk_default()
    lengths = cfg.stage_lengths()
    assert lengths[0] == 4096
    paper = bp.ModelConfig.paper_default()
    assert paper.stage_lengths()[1] == 102390
    assert bp.ModelConfig.standard_dropout_rates() == [0.1, 0.25, 0.25, 0.25, 0.5, 0.5]


def test_train_and_evaluate(tiny_model, corpus_samples):
    samples = [
        bp.LabeledSample(s["id"], s["data"], s["label"]) for s in corpus_samples
    ]
    cfg = bp.TrainConfig()
    cfg.epochs = 1
    cfg.batch_size = 4
    bp.train(tiny_model, samples, [], cfg)
    metrics = bp.evaluate(tiny_model, samples)
    assert 0.0 <= metrics.auc <= 1.0


def test_parse_pe_and_regions(corpus_samples):
    data = corpus_samples[0]["data"]
    pe = bp.parse_pe(data)
    assert pe["warnings"] == []
    assert pe["sections"]
    kind, _detail = bp.region_at(data, 0)
    assert kind == "DosHeader"
    regions = bp.regions(data)
    assert regions[0]["start"] == 0
    assert regions[-1]["end"] == pe["file_size"]
    assert bp.compute_checksum(data, pe["checksum_offset"]) >= 0


def test_decode_and_annotate():
    insns = bp.decode(b"\x6a\xff\x57", 0)
    assert [i["text"] for i in insns] == ["push 0xff", "push edi"]
    window = bp.annotate_window(b"\x00CryptDecrypt\x00\x90", 0, 16)
    assert "CryptDecrypt" in window["strings"]


def test_clustering_and_mds():
    points = [0, 0, 0, 0.1, 10, 10, 10, 10.1, 50, 50]
    result = bp.hdbscan(points, 5, 2)
    labels = result["labels"]
    assert labels[0] == labels[1]
    assert labels[2] == labels[3]
    assert labels[4] == -1
    distances = [0, 1, 1, 0]
    mds = bp.mds(distances, 2)
    assert mds["stress"] < 1e-9


def test_embedding_outliers(tiny_model):
    points = bp.embedding_outliers(tiny_model)
    assert len(points) == 257
    assert points[256]["is_padding"]


def test_activations_and_attribution(tiny_model, corpus_samples):
    records = bp.top_k_activations(tiny_model, b"\x90" * 200, k=10)
    assert len(records) == 10
    cfg = bp.AttributionConfig()
    cfg.n_samples = 8
    cfg.seed = 1
    attr = bp.gradient_shap(tiny_model, b"\x42" * 64, [b"\x13" * 64], cfg)
    assert len(attr["phi"]) == 128
    total = sum(v for _s, _e, v in attr["segments"])
    assert abs(total - sum(attr["phi"])) < 1e-9
