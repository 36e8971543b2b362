#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "promptcodec/ablation.hpp"
#include "promptcodec/errors.hpp"

using namespace promptcodec;
namespace fs = std::filesystem;

namespace {

train::TrainConfig micro_train(const std::string& out_dir) {
    train::TrainConfig cfg;
    cfg.model.codec.sample_rate = 8000;
    cfg.model.codec.latent_dim = 8;
    cfg.model.codec.encoder_strides = {4, 4};
    cfg.model.codec.decoder_strides = {4, 4};
    cfg.model.codec.base_channels = 4;
    cfg.model.grvq.groups = 1;
    cfg.model.grvq.residual_layers = 1;
    cfg.model.grvq.codebook_size = 8;
    cfg.model.cond.model_dim = 8;
    cfg.model.cond.n_blocks = 1;
    cfg.model.cond.n_heads = 2;
    cfg.model.cond.conv_kernel = 3;
    cfg.model.vp.embed_dim = 8;
    cfg.model.vp.hidden_channels = 4;
    cfg.model.analysis.n_fft = 256;
    cfg.model.analysis.hop = 128;
    cfg.model.analysis.win = 256;
    cfg.model.analysis.n_mels = 12;
    cfg.mel_loss.windows = {64};
    cfg.mpd.periods = {2};
    cfg.mpd.channels = {4};
    cfg.msstftd.fft_sizes = {64};
    cfg.msstftd.channels = 4;
    cfg.batch_size = 1;
    cfg.steps = 2;
    cfg.seed = 9;
    cfg.segment_samples = 512;
    cfg.synthetic.count = 2;
    cfg.synthetic.seed = 4;
    cfg.synthetic.duration_seconds = 1.0;  // long enough for the STOI minimum
    cfg.out_dir = (fs::temp_directory_path() / out_dir).string();
    fs::remove_all(cfg.out_dir);
    return cfg;
}

}  // namespace

TEST_CASE("default plan carries the five-variant ladder with documented flags") {
    train::AblationPlan plan = train::AblationPlan::default_plan();
    REQUIRE(plan.variants.size() == 5);
    CHECK(plan.n_q_values == std::vector<int>{1, 2, 4});

    const auto& v = plan.variants;
    CHECK(v[0].name == "PromptCodec");
    CHECK((v[0].use_drl && v[0].use_afwf && v[0].use_conditional && v[0].use_voiceprint));
    CHECK(v[1].name == "w/o DRL");
    CHECK((!v[1].use_drl && v[1].use_afwf && v[1].use_conditional && v[1].use_voiceprint));
    CHECK(v[2].name == "w/o DRL, w/o AFWF");
    CHECK((!v[2].use_drl && !v[2].use_afwf && v[2].use_conditional && v[2].use_voiceprint));
    CHECK(v[3].name == "w/o DRL, w/o AFWF, w/o ConditionEncoder");
    CHECK((!v[3].use_drl && !v[3].use_afwf && !v[3].use_conditional && v[3].use_voiceprint));
    // the voiceprint-ablated row keeps the conditional encoder
    CHECK(v[4].name == "w/o DRL, w/o AFWF, w/o VoiceprintEncoder");
    CHECK((!v[4].use_drl && !v[4].use_afwf && v[4].use_conditional && !v[4].use_voiceprint));
}

TEST_CASE("published reference rows resolve for every ladder cell") {
    train::AblationPlan plan = train::AblationPlan::default_plan();
    for (int n_q : {1, 2, 4})
        for (const auto& v : plan.variants) {
            double p, s, m;
            CHECK(train::reference_metrics(v.name, n_q, p, s, m));
        }
    double p, s, m;
    CHECK(train::reference_metrics("PromptCodec", 4, p, s, m));
    CHECK(p == doctest::Approx(3.720));
    CHECK(s == doctest::Approx(0.976));
    CHECK(m == doctest::Approx(0.561));
    CHECK_FALSE(train::reference_metrics("PromptCodec", 3, p, s, m));
}

TEST_CASE("a single-cell plan produces exactly one row") {
    train::TrainConfig base = micro_train("pc_abl_single");
    train::AblationPlan plan;
    plan.variants = {{"PromptCodec", true, true, true, true}};
    plan.n_q_values = {1};
    plan.out_dir = base.out_dir + "_report";
    fs::remove_all(plan.out_dir);
    train::AblationReport report =
        train::run_ablation(plan, base, train::open_dataset(base));
    REQUIRE(report.rows.size() == 1);
    CHECK(report.rows[0].error.empty());
    CHECK(report.rows[0].n_q == 1);
    fs::remove_all(base.out_dir);
    fs::remove_all(plan.out_dir);
}

TEST_CASE("full ladder over three codebook counts yields 15 ordered rows") {
    train::TrainConfig base = micro_train("pc_abl_full");
    train::AblationPlan plan = train::AblationPlan::default_plan();
    plan.out_dir = base.out_dir + "_report";
    fs::remove_all(plan.out_dir);
    train::DatasetManifest manifest = train::open_dataset(base);

    train::AblationReport report = train::run_ablation(plan, base, manifest);
    REQUIRE(report.rows.size() == 15);
    // grouped by n_q with the ladder order inside each group
    for (int g = 0; g < 3; ++g) {
        const int n_q = plan.n_q_values[g];
        for (int i = 0; i < 5; ++i) {
            const auto& row = report.rows[g * 5 + i];
            CHECK(row.n_q == n_q);
            CHECK(row.variant == plan.variants[i].name);
            INFO(row.variant << " nq=" << row.n_q << ": " << row.error);
            CHECK(row.error.empty());
            CHECK(row.pesq_paper.has_value());
        }
    }

    // determinism: a second run reproduces the tables byte for byte
    train::AblationReport again = train::run_ablation(plan, base, manifest);
    CHECK(report.to_csv() == again.to_csv());
    CHECK(report.to_markdown() == again.to_markdown());

    // report regeneration from the stored JSON is byte-identical
    train::write_ablation_report(report, plan.out_dir);
    std::ifstream f(fs::path(plan.out_dir) / "ablation_rows.json", std::ios::binary);
    std::string json((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    train::AblationReport reloaded = train::AblationReport::from_json(json);
    CHECK(reloaded.to_csv() == report.to_csv());
    CHECK(reloaded.to_markdown() == report.to_markdown());
    CHECK(reloaded.to_json() == report.to_json());

    fs::remove_all(base.out_dir);
    fs::remove_all(plan.out_dir);
}

TEST_CASE("variant failures are recorded as rows and the run continues") {
    train::TrainConfig base = micro_train("pc_abl_fail");
    base.segment_samples = 513;  // not a stride multiple: every variant fails
    train::AblationPlan plan;
    plan.variants = {{"PromptCodec", true, true, true, true}, {"w/o DRL", false, true, true, true}};
    plan.n_q_values = {1};
    plan.out_dir = base.out_dir + "_report";
    train::AblationReport report =
        train::run_ablation(plan, base, train::open_dataset(base));
    REQUIRE(report.rows.size() == 2);
    CHECK_FALSE(report.rows[0].error.empty());
    CHECK_FALSE(report.rows[1].error.empty());
    fs::remove_all(base.out_dir);
    fs::remove_all(plan.out_dir);
}

TEST_CASE("plan validation") {
    train::AblationPlan plan = train::AblationPlan::default_plan();
    plan.variants.push_back(plan.variants[0]);  // duplicate name
    CHECK_THROWS_AS(plan.validate(), InvalidConfig);
}
