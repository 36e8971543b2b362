#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "promptcodec/errors.hpp"
#include "promptcodec/fusion.hpp"
#include "promptcodec/ops.hpp"

using namespace promptcodec;

namespace {

nn::Tensor rand_t(std::vector<int> shape, uint64_t seed, bool rg = false) {
    std::mt19937_64 rng(seed);
    return nn::Tensor::randn(std::move(shape), rng, 1.0, rg);
}

}  // namespace

TEST_CASE("alpha (1,0,0) reproduces z_q exactly") {
    FusionWeights w = FusionWeights::make(1.0, 0.0, 0.0);
    nn::Tensor z_q = rand_t({5, 6}, 1);
    nn::Tensor pc = rand_t({6}, 2);
    nn::Tensor pv = rand_t({6}, 3);
    nn::Tensor out = fuse(z_q, pc, pv, w);
    REQUIRE(out.shape() == z_q.shape());
    for (size_t i = 0; i < out.data().size(); ++i) CHECK(out.data()[i] == z_q.data()[i]);
}

TEST_CASE("alpha (0,1,0) broadcasts the conditional prompt") {
    FusionWeights w = FusionWeights::make(0.0, 1.0, 0.0);
    nn::Tensor z_q = rand_t({4, 3}, 5);
    nn::Tensor pc = rand_t({3}, 6);
    nn::Tensor pv = rand_t({3}, 7);
    nn::Tensor out = fuse(z_q, pc, pv, w);
    for (int t = 0; t < 4; ++t)
        for (int d = 0; d < 3; ++d) CHECK(out.data()[t * 3 + d] == pc.data()[d]);
}

TEST_CASE("alpha (1,1,1) with zero z_q adds both prompts per frame") {
    FusionWeights w = FusionWeights::make(1.0, 1.0, 1.0);
    nn::Tensor z_q = nn::Tensor::zeros({3, 4});
    nn::Tensor pc = rand_t({4}, 8);
    nn::Tensor pv = rand_t({4}, 9);
    nn::Tensor out = fuse(z_q, pc, pv, w);
    for (int t = 0; t < 3; ++t)
        for (int d = 0; d < 4; ++d)
            CHECK(out.data()[t * 4 + d] == doctest::Approx(pc.data()[d] + pv.data()[d]));
}

TEST_CASE("linearity in z_q with fixed weights") {
    FusionWeights w = FusionWeights::make(0.8, 0.3, -0.2);
    nn::Tensor z_q = rand_t({6, 5}, 10);
    nn::Tensor pc = rand_t({5}, 11);
    nn::Tensor pv = rand_t({5}, 12);
    nn::Tensor base = fuse(z_q, pc, pv, w);
    nn::Tensor scaled = fuse(nn::mul_scalar(z_q, 2.0), pc, pv, w);
    // the z_q term scales by exactly 2, prompt terms unchanged
    for (size_t i = 0; i < base.data().size(); ++i) {
        const double prompt_part = base.data()[i] - 0.8 * z_q.data()[i];
        CHECK(scaled.data()[i] ==
              doctest::Approx(0.8 * 2.0 * z_q.data()[i] + prompt_part).epsilon(1e-12));
    }
}

TEST_CASE("d fused / d alpha2 equals the broadcast conditional prompt") {
    FusionWeights w = FusionWeights::make(1.0, 0.1, 0.1);
    nn::Tensor z_q = rand_t({4, 3}, 13);
    nn::Tensor pc = rand_t({3}, 14);
    nn::Tensor pv = rand_t({3}, 15);
    nn::Tensor probe = rand_t({4, 3}, 16);

    auto loss_fn = [&]() { return nn::mean_all(nn::mul(fuse(z_q, pc, pv, w), probe)); };
    loss_fn().backward();
    const double analytic = w.alpha2.grad()[0];

    const double h = 1e-7;
    w.alpha2.data()[0] += h;
    const double up = loss_fn().value();
    w.alpha2.data()[0] -= 2.0 * h;
    const double dn = loss_fn().value();
    w.alpha2.data()[0] += h;
    const double fd = (up - dn) / (2.0 * h);
    CHECK(std::fabs(fd - analytic) / std::max(std::fabs(fd), 1e-8) < 1e-6);

    // the analytic gradient equals sum(probe * broadcast(pc)) / N
    double expect = 0.0;
    for (int t = 0; t < 4; ++t)
        for (int d = 0; d < 3; ++d) expect += probe.data()[t * 3 + d] * pc.data()[d];
    expect /= 12.0;
    CHECK(analytic == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("frame count is preserved and dimensions validated") {
    FusionWeights w = FusionWeights::make();
    nn::Tensor z_q = rand_t({7, 4}, 17);
    CHECK(fuse(z_q, nn::Tensor(), nn::Tensor(), w).dim(0) == 7);
    nn::Tensor bad = rand_t({5}, 18);
    CHECK_THROWS_AS(fuse(z_q, bad, nn::Tensor(), w), InvalidInput);
}

TEST_CASE("plain-value fusion matches the graph path") {
    FusionWeights w = FusionWeights::make(0.9, 0.2, 0.4);
    LatentSequence z;
    z.frames = 3;
    z.dim = 4;
    std::mt19937_64 rng(19);
    std::normal_distribution<double> dist;
    z.values.resize(12);
    for (double& v : z.values) v = dist(rng);
    PromptEmbedding pc, pv;
    pc.vector = {0.1, -0.2, 0.3, 0.4};
    pv.vector = {1.0, 0.5, -0.5, 0.0};
    const LatentSequence fused = fuse(z, &pc, &pv, w);
    for (int t = 0; t < 3; ++t)
        for (int d = 0; d < 4; ++d)
            CHECK(fused.at(t, d) ==
                  doctest::Approx(0.9 * z.at(t, d) + 0.2 * pc.vector[d] + 0.4 * pv.vector[d]));
}
