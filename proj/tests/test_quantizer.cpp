#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "promptcodec/errors.hpp"
#include "promptcodec/ops.hpp"
#include "promptcodec/quantizer.hpp"

using namespace promptcodec;

namespace {

LatentSequence random_latent(int frames, int dim, uint64_t seed, double stddev = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, stddev);
    LatentSequence z;
    z.frames = frames;
    z.dim = dim;
    z.values.resize(static_cast<size_t>(frames) * dim);
    for (double& v : z.values) v = dist(rng);
    return z;
}

// exhaustive nearest-neighbor oracle, lowest index wins ties
int brute_force_nn(const double* v, const Codebook& book, int k, int dim) {
    int best = 0;
    double best_d = 0.0;
    for (int i = 0; i < k; ++i) {
        double d = 0.0;
        for (int c = 0; c < dim; ++c) {
            const double diff = v[c] - book.entries[static_cast<size_t>(i) * dim + c];
            d += diff * diff;
        }
        if (i == 0 || d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("n_q mapping to groups and residual layers") {
    int g, r;
    grvq_split_for_nq(1, g, r);
    CHECK((g == 1 && r == 1));
    grvq_split_for_nq(2, g, r);
    CHECK((g == 2 && r == 1));
    grvq_split_for_nq(4, g, r);
    CHECK((g == 2 && r == 2));
    grvq_split_for_nq(3, g, r);
    CHECK((g == 1 && r == 3));
}

TEST_CASE("a latent row equal to a codebook entry quantizes exactly") {
    GRVQConfig cfg;
    cfg.groups = 1;
    cfg.residual_layers = 1;
    cfg.codebook_size = 8;
    GroupResidualQuantizer q(cfg, 4);
    LatentSequence z;
    z.frames = 1;
    z.dim = 4;
    const int chosen = 5;
    z.values.assign(q.books()[0].entries.begin() + chosen * 4,
                    q.books()[0].entries.begin() + (chosen + 1) * 4);
    QuantizeResult r = q.quantize(z);
    CHECK(r.indices.at(0, 0) == chosen);
    CHECK(r.z_q.values == z.values);
    CHECK(r.commitment_loss == 0.0);
}

TEST_CASE("chosen indices equal exhaustive nearest-neighbor search") {
    GRVQConfig cfg;
    cfg.groups = 1;
    cfg.residual_layers = 1;
    cfg.codebook_size = 4;
    GroupResidualQuantizer q(cfg, 6);
    const LatentSequence z = random_latent(500, 6, 42);
    QuantizeResult r = q.quantize(z);
    for (int t = 0; t < z.frames; ++t) {
        const int oracle = brute_force_nn(&z.values[static_cast<size_t>(t) * 6], q.books()[0],
                                          cfg.codebook_size, 6);
        CHECK(r.indices.at(t, 0) == oracle);
    }
}

TEST_CASE("residual refinement does not increase the error on safe books") {
    // stage-2 books contain the zero vector, which guarantees per-frame
    // monotonicity of the residual chain
    GRVQConfig cfg2;
    cfg2.groups = 2;
    cfg2.residual_layers = 2;
    cfg2.codebook_size = 6;
    GroupResidualQuantizer deep(cfg2, 8);
    for (int g = 0; g < 2; ++g) {
        Codebook& stage2 = deep.books()[g * 2 + 1];
        for (int c = 0; c < 4; ++c) stage2.entries[c] = 0.0;  // entry 0 := 0
    }
    GRVQConfig cfg1 = cfg2;
    cfg1.residual_layers = 1;
    GroupResidualQuantizer shallow(cfg1, 8);
    for (int g = 0; g < 2; ++g) shallow.books()[g] = deep.books()[g * 2];  // shared stage-1 books

    const LatentSequence z = random_latent(64, 8, 77);
    const QuantizeResult rd = deep.quantize(z);
    const QuantizeResult rs = shallow.quantize(z);
    for (int t = 0; t < z.frames; ++t) {
        double ed = 0.0, es = 0.0;
        for (int d = 0; d < 8; ++d) {
            const double a = z.at(t, d) - rd.z_q.at(t, d);
            const double b = z.at(t, d) - rs.z_q.at(t, d);
            ed += a * a;
            es += b * b;
        }
        CHECK(ed <= es + 1e-12);
    }
}

TEST_CASE("dequantize definition, round trip, and bounds") {
    GRVQConfig cfg;
    cfg.groups = 2;
    cfg.residual_layers = 2;
    cfg.codebook_size = 5;
    GroupResidualQuantizer q(cfg, 8);

    CodeIndices zeros;
    zeros.frames = 3;
    zeros.n_q = 4;
    zeros.values.assign(12, 0);
    const LatentSequence dz = q.dequantize(zeros);
    for (int t = 0; t < 3; ++t)
        for (int g = 0; g < 2; ++g)
            for (int d = 0; d < 4; ++d) {
                const double expect = q.books()[g * 2 + 0].entries[d] +
                                      q.books()[g * 2 + 1].entries[d];
                CHECK(dz.at(t, g * 4 + d) == doctest::Approx(expect));
            }

    const LatentSequence z = random_latent(100, 8, 99);
    const QuantizeResult r = q.quantize(z);
    const LatentSequence back = q.dequantize(r.indices);
    CHECK(back.values == r.z_q.values);  // bitwise

    CodeIndices bad = r.indices;
    bad.values[0] = cfg.codebook_size;
    CHECK_THROWS_AS(q.dequantize(bad), CorruptStream);
}

TEST_CASE("quantization is idempotent on codebook reconstructions (R=1)") {
    GRVQConfig cfg;
    cfg.groups = 2;
    cfg.residual_layers = 1;
    cfg.codebook_size = 8;
    GroupResidualQuantizer q(cfg, 8);
    const LatentSequence z = random_latent(50, 8, 7);
    const QuantizeResult first = q.quantize(z);
    const QuantizeResult second = q.quantize(q.dequantize(first.indices));
    CHECK(second.indices.values == first.indices.values);
    CHECK(second.commitment_loss == 0.0);
}

TEST_CASE("commitment loss is nonnegative and zero only on exact reconstruction") {
    GRVQConfig cfg;
    cfg.groups = 1;
    cfg.residual_layers = 2;
    cfg.codebook_size = 4;
    GroupResidualQuantizer q(cfg, 4);
    const LatentSequence z = random_latent(20, 4, 15);
    const QuantizeResult r = q.quantize(z);
    CHECK(r.commitment_loss >= 0.0);
    const bool exact = r.z_q.values == z.values;
    CHECK((r.commitment_loss == 0.0) == exact);
}

TEST_CASE("straight-through estimator passes the gradient unchanged") {
    GRVQConfig cfg;
    cfg.groups = 2;
    cfg.residual_layers = 1;
    cfg.codebook_size = 4;
    GroupResidualQuantizer q(cfg, 4);
    std::mt19937_64 rng(21);
    nn::Tensor z = nn::Tensor::randn({2, 4}, rng, 1.0, true);
    nn::Tensor weights = nn::Tensor::randn({2, 4}, rng, 1.0);

    // loss through the quantizer
    QuantizeGraphResult res = q.quantize_graph(z);
    nn::Tensor loss = nn::mean_all(nn::mul(res.z_q, weights));
    loss.backward();
    // straight-through contract: identical to d/dz mean(z * weights)
    for (size_t i = 0; i < z.data().size(); ++i)
        CHECK(z.grad()[i] == doctest::Approx(weights.data()[i] / 8.0).epsilon(1e-12));

    // the estimator's gradient equals the finite difference of the identity
    // surrogate (z_q treated as z), which is what straight-through means
    z.zero_grad();
    nn::mean_all(nn::mul(q.quantize_graph(z).z_q, weights)).backward();
    auto surrogate = [&]() { return nn::mean_all(nn::mul(z, weights)); };
    const double h = 1e-6;
    for (size_t i = 0; i < z.data().size(); ++i) {
        const double keep = z.data()[i];
        z.data()[i] = keep + h;
        const double up = surrogate().value();
        z.data()[i] = keep - h;
        const double dn = surrogate().value();
        z.data()[i] = keep;
        const double fd = (up - dn) / (2.0 * h);
        const double rel = std::fabs(fd - z.grad()[i]) /
                           std::max({std::fabs(fd), std::fabs(z.grad()[i]), 1e-8});
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("commitment gradient pulls z toward the selected entries") {
    GRVQConfig cfg;
    cfg.groups = 1;
    cfg.residual_layers = 1;
    cfg.codebook_size = 4;
    cfg.commitment_weight = 0.25;
    GroupResidualQuantizer q(cfg, 4);
    std::mt19937_64 rng(23);
    nn::Tensor z = nn::Tensor::randn({3, 4}, rng, 1.0, true);
    QuantizeGraphResult res = q.quantize_graph(z);
    res.loss_vq.backward();
    // d/dz cw * mean((z - zq)^2) = 2 cw (z - zq) / N
    for (size_t i = 0; i < z.data().size(); ++i) {
        const double expect =
            2.0 * cfg.commitment_weight * (z.data()[i] - res.z_q.data()[i]) / 12.0;
        CHECK(z.grad()[i] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("EMA update behavior") {
    GRVQConfig cfg;
    cfg.groups = 1;
    cfg.residual_layers = 1;
    cfg.codebook_size = 4;
    cfg.dead_code_threshold = 0.0;  // no restarts in this case
    GroupResidualQuantizer q(cfg, 4);

    SUBCASE("decay 1.0 freezes the books") {
        q.books()[0].ema_counts[1] = 3.0;
        GRVQConfig frozen = cfg;
        frozen.ema_decay = 1.0;
        GroupResidualQuantizer qf(frozen, 4);
        const auto before = qf.books();
        const LatentSequence z = random_latent(16, 4, 3);
        QuantizeGraphResult r = qf.quantize_graph(nn::Tensor::from(z.values, {16, 4}));
        qf.update_ema(r.assignments);
        CHECK(qf.books()[0].entries == before[0].entries);
        CHECK(qf.books()[0].ema_counts == before[0].ema_counts);
        CHECK(qf.books()[0].ema_sums == before[0].ema_sums);
    }

    SUBCASE("a single repeated vector becomes a fixed point") {
        cfg.ema_decay = 0.9;
        GroupResidualQuantizer qq(cfg, 4);
        LatentSequence z;
        z.frames = 32;
        z.dim = 4;
        const std::vector<double> target{0.3, -0.7, 1.1, 0.05};
        for (int t = 0; t < z.frames; ++t)
            z.values.insert(z.values.end(), target.begin(), target.end());
        int idx = -1;
        for (int step = 0; step < 200; ++step) {
            QuantizeGraphResult r =
                qq.quantize_graph(nn::Tensor::from(z.values, {z.frames, z.dim}));
            idx = r.indices.at(0, 0);
            qq.update_ema(r.assignments);
        }
        double delta = 0.0;
        for (int c = 0; c < 4; ++c) {
            const double d = qq.books()[0].entries[static_cast<size_t>(idx) * 4 + c] - target[c];
            delta += d * d;
        }
        CHECK(std::sqrt(delta) < 1e-3);
    }

    SUBCASE("unused entries fall below the threshold and are re-seeded") {
        GRVQConfig dead = cfg;
        dead.ema_decay = 0.01;  // counts collapse after one update
        dead.dead_code_threshold = 0.5;
        GroupResidualQuantizer qd(dead, 4);
        // all frames sit on entry 0's neighborhood
        LatentSequence z;
        z.frames = 8;
        z.dim = 4;
        for (int t = 0; t < 8; ++t)
            z.values.insert(z.values.end(), qd.books()[0].entries.begin(),
                            qd.books()[0].entries.begin() + 4);
        const auto before = qd.books()[0].entries;
        QuantizeGraphResult r = qd.quantize_graph(nn::Tensor::from(z.values, {8, 4}));
        for (int t = 0; t < 8; ++t) REQUIRE(r.indices.at(t, 0) == 0);
        qd.update_ema(r.assignments);
        // entries 1..K-1 were re-seeded from batch vectors (== entry-0 value here)
        for (int k = 1; k < 4; ++k) {
            CHECK(qd.books()[0].ema_counts[k] == 1.0);
            for (int c = 0; c < 4; ++c)
                CHECK(qd.books()[0].entries[static_cast<size_t>(k) * 4 + c] ==
                      doctest::Approx(before[c]));
        }
    }
}

TEST_CASE("dimension mismatches are rejected") {
    GRVQConfig cfg;
    cfg.groups = 2;
    cfg.residual_layers = 1;
    cfg.codebook_size = 4;
    CHECK_THROWS_AS(GroupResidualQuantizer(cfg, 7), InvalidConfig);  // 7 % 2 != 0
    GroupResidualQuantizer q(cfg, 8);
    CHECK_THROWS_AS(q.quantize(random_latent(4, 6, 1)), InvalidInput);
}
