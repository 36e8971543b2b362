#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <random>

#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"
#include "promptcodec/prompt_encoders.hpp"

using namespace promptcodec;

namespace {

ConditionalEncoderConfig toy_cond() {
    ConditionalEncoderConfig cfg;
    cfg.model_dim = 16;
    cfg.n_blocks = 2;
    cfg.n_heads = 2;
    cfg.conv_kernel = 3;
    return cfg;
}

VoiceprintConfig toy_vp() {
    VoiceprintConfig cfg;
    cfg.embed_dim = 12;
    cfg.hidden_channels = 6;
    return cfg;
}

FeatureMatrix constant_features(int frames, int bins, double value) {
    FeatureMatrix m;
    m.frames = frames;
    m.bins = bins;
    m.values.assign(static_cast<size_t>(frames) * bins, value);
    return m;
}

FeatureMatrix random_features(int frames, int bins, uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, scale);
    FeatureMatrix m;
    m.frames = frames;
    m.bins = bins;
    m.values.resize(static_cast<size_t>(frames) * bins);
    for (double& v : m.values) v = dist(rng);
    return m;
}

nn::Tensor to_tensor(const FeatureMatrix& m) {
    return nn::Tensor::from(m.values, {m.frames, m.bins});
}

// find a named parameter tensor in a collected list
nn::Tensor find_param(const nn::NamedParams& params, const std::string& name) {
    for (const auto& [n, t] : params)
        if (n == name) return t;
    FAIL("missing parameter " << name);
    return {};
}

}  // namespace

TEST_CASE("constant-over-time mel input matches the single-frame output") {
    std::mt19937_64 rng(3);
    ConditionalPromptEncoder enc(toy_cond(), 10, 8, rng);
    PromptEmbedding one = enc.encode(constant_features(1, 10, 0.37));
    for (int frames : {5, 7, 100}) {
        PromptEmbedding many = enc.encode(constant_features(frames, 10, 0.37));
        REQUIRE(many.vector.size() == one.vector.size());
        for (size_t i = 0; i < one.vector.size(); ++i)
            CHECK(many.vector[i] == doctest::Approx(one.vector[i]).epsilon(1e-9));
    }
}

TEST_CASE("both branches emit one D-vector regardless of length") {
    std::mt19937_64 rng(5);
    const int d = 8;
    ConditionalPromptEncoder cond(toy_cond(), 10, d, rng);
    VoiceprintPromptEncoder vp(toy_vp(), 10, d, rng);
    for (int frames : {1, 7, 100}) {
        const FeatureMatrix m = random_features(frames, 10, 100 + frames);
        CHECK(cond.encode(m).vector.size() == static_cast<size_t>(d));
        CHECK(vp.encode(m).vector.size() == static_cast<size_t>(d));
    }
    CHECK_THROWS_AS(cond.encode(constant_features(0, 10, 0.0)), InvalidInput);
    CHECK_THROWS_AS(vp.encode(constant_features(0, 10, 0.0)), InvalidInput);
}

TEST_CASE("conditional encoder output stays finite for large inputs") {
    std::mt19937_64 rng(7);
    ConditionalPromptEncoder enc(toy_cond(), 10, 8, rng);
    PromptEmbedding e = enc.encode(random_features(12, 10, 9, 1e3));
    for (double v : e.vector) CHECK(std::isfinite(v));
}

TEST_CASE("conditional encoder gradients match finite differences") {
    std::mt19937_64 rng(11);
    ConditionalPromptEncoder enc(toy_cond(), 6, 4, rng);
    const FeatureMatrix m = random_features(3, 6, 13);
    nn::NamedParams params;
    enc.collect_backbone("cond", params);
    enc.collect_mlp("cond_mlp", params);

    auto loss = [&]() { return nn::mean_all(enc.forward(to_tensor(m))); };
    for (auto& [n, t] : params) t.zero_grad();
    loss().backward();

    std::mt19937_64 pick(17);
    const double h = 1e-6;
    for (int probe = 0; probe < 10; ++probe) {
        auto& [name, t] = params[pick() % params.size()];
        const size_t j = pick() % t.data().size();
        const double keep = t.data()[j];
        t.data()[j] = keep + h;
        const double up = loss().value();
        t.data()[j] = keep - h;
        const double dn = loss().value();
        t.data()[j] = keep;
        const double fd = (up - dn) / (2.0 * h);
        const double analytic = t.grad()[j];
        // key-projection biases have exactly-zero true gradients (softmax
        // shift invariance); both sides below FD noise counts as agreement
        if (std::fabs(fd) < 1e-8 && std::fabs(analytic) < 1e-8) continue;
        const double rel =
            std::fabs(fd - analytic) / std::max({std::fabs(fd), std::fabs(analytic), 1e-8});
        INFO(name << "[" << j << "]");
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("stats pooling yields a near-zero std half on constant input") {
    // embed_dim = 2h with an identity projection exposes [mean; std] directly
    VoiceprintConfig cfg;
    cfg.hidden_channels = 6;
    cfg.embed_dim = 12;
    cfg.frozen = false;
    std::mt19937_64 rng(19);
    VoiceprintPromptEncoder vp(cfg, 10, 8, rng);
    nn::NamedParams params;
    vp.collect_backbone("vp", params);
    nn::Tensor w = find_param(params, "vp.proj.w");  // [2h, embed]
    nn::Tensor b = find_param(params, "vp.proj.b");
    std::fill(w.data().begin(), w.data().end(), 0.0);
    for (int i = 0; i < 12; ++i) w.data()[static_cast<size_t>(i) * 12 + i] = 1.0;
    std::fill(b.data().begin(), b.data().end(), 0.0);

    nn::NoGradGuard ng;
    nn::Tensor e = vp.backbone_embedding(to_tensor(constant_features(20, 10, 0.8)));
    for (int i = 6; i < 12; ++i) CHECK(std::fabs(e.data()[i]) < 1e-6);  // std half
}

TEST_CASE("voiceprint embedding is deterministic") {
    std::mt19937_64 rng(23);
    VoiceprintPromptEncoder vp(toy_vp(), 10, 8, rng);
    const FeatureMatrix m = random_features(15, 10, 29);
    const PromptEmbedding a = vp.encode(m);
    const PromptEmbedding b = vp.encode(m);
    CHECK(a.vector == b.vector);
}

TEST_CASE("frozen backend exposes no trainable parameters, aligner stays trainable") {
    std::mt19937_64 rng(31);
    VoiceprintPromptEncoder vp(toy_vp(), 10, 8, rng);  // frozen by default
    nn::NamedParams backbone, mlp;
    vp.collect_backbone("vp", backbone);
    vp.collect_mlp("vp_mlp", mlp);
    CHECK(nn::count_parameters(backbone) == 0);
    CHECK(nn::count_parameters(mlp) > 0);

    // gradients do not reach the frozen backend
    nn::Tensor out = vp.forward(to_tensor(random_features(6, 10, 33)));
    nn::mean_all(out).backward();
    for (auto& [n, t] : backbone) CHECK(t.impl()->grad.empty());
}

TEST_CASE("align mlp contracts") {
    std::mt19937_64 rng(37);
    AlignMlp mlp(4, 4, rng);
    nn::NamedParams params;
    mlp.collect("mlp", params);

    SUBCASE("zero input with a zero final layer gives zero output") {
        nn::Tensor l2w = find_param(params, "mlp.l2.w");
        nn::Tensor l2b = find_param(params, "mlp.l2.b");
        std::fill(l2w.data().begin(), l2w.data().end(), 0.0);
        std::fill(l2b.data().begin(), l2b.data().end(), 0.0);
        nn::Tensor out = mlp.forward(nn::Tensor::zeros({4}));
        for (double v : out.data()) CHECK(v == 0.0);
    }

    SUBCASE("identity-configured layers pass nonnegative input through") {
        for (const char* name : {"mlp.l1.w", "mlp.l2.w"}) {
            nn::Tensor w = find_param(params, name);
            std::fill(w.data().begin(), w.data().end(), 0.0);
            for (int i = 0; i < 4; ++i) w.data()[static_cast<size_t>(i) * 4 + i] = 1.0;
        }
        for (const char* name : {"mlp.l1.b", "mlp.l2.b"}) {
            nn::Tensor b = find_param(params, name);
            std::fill(b.data().begin(), b.data().end(), 0.0);
        }
        nn::Tensor in = nn::Tensor::from({0.5, 0.0, 2.0, 1.25}, {4});
        nn::Tensor out = mlp.forward(in);
        for (int i = 0; i < 4; ++i) CHECK(out.data()[i] == doctest::Approx(in.data()[i]));
    }

    SUBCASE("jacobian matches finite differences") {
        nn::Tensor in = nn::Tensor::from({0.4, -0.6, 1.2, -0.1}, {4}, true);
        nn::Tensor probe = nn::Tensor::from({0.3, 0.9, -0.4, 0.7}, {4});
        auto loss = [&]() { return nn::mean_all(nn::mul(mlp.forward(in), probe)); };
        loss().backward();
        const double h = 1e-6;
        for (int i = 0; i < 4; ++i) {
            const double keep = in.data()[i];
            in.data()[i] = keep + h;
            const double up = loss().value();
            in.data()[i] = keep - h;
            const double dn = loss().value();
            in.data()[i] = keep;
            const double fd = (up - dn) / (2.0 * h);
            const double rel = std::fabs(fd - in.grad()[i]) /
                               std::max({std::fabs(fd), std::fabs(in.grad()[i]), 1e-8});
            CHECK(rel < 1e-4);
        }
    }

    SUBCASE("dimension mismatch is rejected") {
        CHECK_THROWS_AS(mlp.forward(nn::Tensor::zeros({5})), InvalidInput);
    }
}

TEST_CASE("external embedding file round trip and dimension checks") {
    EmbeddingTable table;
    table["utt_a"] = {0.25, -0.5, 1.0};
    table["utt_b"] = {0.125, 0.375, -2.0};
    const std::string path = "test_tmp_embeddings.bin";
    write_embedding_file(path, table);
    EmbeddingTable back = read_embedding_file(path);
    REQUIRE(back.size() == 2);
    CHECK(back["utt_a"] == table["utt_a"]);  // float32 exact values chosen
    CHECK(back["utt_b"] == table["utt_b"]);
    std::remove(path.c_str());

    VoiceprintConfig cfg = toy_vp();
    cfg.kind = VoiceprintBackendKind::external_file;
    std::mt19937_64 rng(41);
    VoiceprintPromptEncoder vp(cfg, 10, 8, rng);
    CHECK_THROWS_AS(vp.encode_external({0.1, 0.2}), InvalidInput);  // wrong dimension
    std::vector<double> good(cfg.embed_dim, 0.1);
    CHECK(vp.encode_external(good).vector.size() == 8);
}
