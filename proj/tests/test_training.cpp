#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "promptcodec/errors.hpp"
#include "promptcodec/training.hpp"

using namespace promptcodec;
namespace fs = std::filesystem;

namespace {

train::TrainConfig toy_train(const std::string& out_dir) {
    train::TrainConfig cfg;
    cfg.model.codec.sample_rate = 8000;
    cfg.model.codec.latent_dim = 16;
    cfg.model.codec.encoder_strides = {4, 4};
    cfg.model.codec.decoder_strides = {4, 4};
    cfg.model.codec.base_channels = 8;
    cfg.model.grvq.groups = 2;
    cfg.model.grvq.residual_layers = 1;
    cfg.model.grvq.codebook_size = 16;
    cfg.model.cond.model_dim = 16;
    cfg.model.cond.n_blocks = 1;
    cfg.model.cond.n_heads = 2;
    cfg.model.cond.conv_kernel = 3;
    cfg.model.vp.embed_dim = 12;
    cfg.model.vp.hidden_channels = 6;
    cfg.model.analysis.n_fft = 256;
    cfg.model.analysis.hop = 128;
    cfg.model.analysis.win = 256;
    cfg.model.analysis.n_mels = 20;
    cfg.mel_loss.windows = {64, 128};
    cfg.mpd.periods = {2, 3};
    cfg.mpd.channels = {4, 8};
    cfg.msstftd.fft_sizes = {64, 128};
    cfg.msstftd.channels = 4;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 1;
    cfg.steps = 2;
    cfg.seed = 77;
    cfg.segment_samples = 512;
    cfg.synthetic.count = 2;
    cfg.synthetic.seed = 5;
    cfg.synthetic.duration_seconds = 0.2;
    cfg.out_dir = (fs::temp_directory_path() / out_dir).string();
    fs::remove_all(cfg.out_dir);
    return cfg;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::set<std::string> group_names(const PromptCodecModel& model) {
    std::set<std::string> names;
    for (const auto& [g, params] : model.parameter_groups())
        if (!params.empty()) names.insert(g);
    return names;
}

std::set<std::string> trainable_prefixes(const PromptCodecModel& model) {
    std::set<std::string> prefixes;
    for (const auto& [name, t] : model.trainable_parameters())
        prefixes.insert(name.substr(0, name.find('.')));
    return prefixes;
}

}  // namespace

TEST_CASE("two seeded runs produce identical loss logs") {
    train::TrainConfig a = toy_train("pc_train_det_a");
    train::TrainConfig b = toy_train("pc_train_det_b");
    train::TrainResult ra = train::train(a, train::open_dataset(a));
    train::TrainResult rb = train::train(b, train::open_dataset(b));
    CHECK(slurp(ra.log_path) == slurp(rb.log_path));
    REQUIRE(ra.log.size() == 2);
    for (const auto& entry : ra.log) {
        CHECK(std::isfinite(entry.report.l_total));
        CHECK(std::isfinite(entry.alpha1));
    }
    fs::remove_all(a.out_dir);
    fs::remove_all(b.out_dir);
}

TEST_CASE("log totals equal the beta-weighted component sum") {
    train::TrainConfig cfg = toy_train("pc_train_total");
    train::TrainResult r = train::train(cfg, train::open_dataset(cfg));
    for (const auto& e : r.log) {
        const double expect = cfg.loss.beta1 * e.report.l_rec + cfg.loss.beta2 * e.report.l_f +
                              cfg.loss.beta3 * e.report.l_vq + cfg.loss.beta4 * e.report.l_adv +
                              cfg.loss.beta5 * e.report.l_drl;
        CHECK(e.report.l_total == doctest::Approx(expect).epsilon(1e-6));
    }
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("optimizer parameter groups track the ablation flags") {
    train::TrainConfig base = toy_train("pc_train_groups");

    PromptCodecModel full(base.model);
    CHECK(group_names(full) == std::set<std::string>{"encoder", "decoder", "fusion",
                                                     "cond_encoder", "cond_mlp", "vp_backend",
                                                     "vp_mlp"});
    // frozen voiceprint backend stays out of the trainable set
    CHECK(trainable_prefixes(full) == std::set<std::string>{"encoder", "decoder", "fusion",
                                                            "cond_encoder", "cond_mlp", "vp_mlp"});

    ModelConfig no_afwf = base.model;
    no_afwf.use_afwf = false;
    PromptCodecModel m1(no_afwf);
    CHECK(trainable_prefixes(m1) == std::set<std::string>{"encoder", "decoder", "cond_encoder",
                                                          "cond_mlp", "vp_mlp"});
    CHECK(m1.fusion().a1() == 1.0);  // frozen plain addition
    CHECK(m1.fusion().a2() == 1.0);
    CHECK(m1.fusion().a3() == 1.0);

    ModelConfig no_cond = base.model;
    no_cond.use_conditional = false;
    PromptCodecModel m2(no_cond);
    CHECK(trainable_prefixes(m2) ==
          std::set<std::string>{"encoder", "decoder", "fusion", "vp_mlp"});

    ModelConfig no_vp = base.model;
    no_vp.use_voiceprint = false;
    PromptCodecModel m3(no_vp);
    CHECK(trainable_prefixes(m3) ==
          std::set<std::string>{"encoder", "decoder", "fusion", "cond_encoder", "cond_mlp"});

    ModelConfig trainable_vp = base.model;
    trainable_vp.vp.frozen = false;
    PromptCodecModel m4(trainable_vp);
    CHECK(trainable_prefixes(m4).count("vp_backend") == 1);
}

TEST_CASE("disabling both prompts reduces fusion to alpha1 * z_q") {
    train::TrainConfig cfg = toy_train("pc_train_plain");
    cfg.model.use_conditional = false;
    cfg.model.use_voiceprint = false;
    cfg.use_drl = false;
    PromptCodecModel model(cfg.model);

    train::SyntheticSpec spec = cfg.synthetic;
    spec.sample_rate = cfg.model.codec.sample_rate;
    const Waveform w = train::synthesize_utterance(spec, 0);
    LatentSequence z = model.encoder().encode(w);
    QuantizeResult q = model.quantizer().quantize(z);
    const Waveform out = model.reconstruct(w, PromptPair{});

    LatentSequence scaled = q.z_q;
    for (double& v : scaled.values) v *= model.fusion().a1();
    const Waveform direct = model.decoder().decode(scaled);
    CHECK(out.samples == direct.samples);

    // and the training log reports a zero drl term
    train::TrainResult r = train::train(cfg, train::open_dataset(cfg));
    for (const auto& e : r.log) CHECK(e.report.l_drl == 0.0);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("frozen voiceprint backend is bitwise unchanged by training") {
    train::TrainConfig cfg = toy_train("pc_train_frozen");
    train::TrainResult r = train::train(cfg, train::open_dataset(cfg));

    auto trained = PromptCodecModel::load(r.checkpoint_path);
    PromptCodecModel fresh(cfg.model);  // same seed, same init
    auto trained_groups = trained->parameter_groups();
    auto fresh_groups = fresh.parameter_groups();
    REQUIRE(trained_groups.count("vp_backend") == 1);
    const auto& a = trained_groups["vp_backend"];
    const auto& b = fresh_groups["vp_backend"];
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        // float32 checkpoint round trip applies to both sides
        for (size_t j = 0; j < a[i].second.data().size(); ++j)
            CHECK(static_cast<float>(a[i].second.data()[j]) ==
                  static_cast<float>(b[i].second.data()[j]));
    }
    // the encoder, by contrast, moved
    bool encoder_moved = false;
    for (size_t j = 0; j < trained_groups["encoder"][0].second.data().size(); ++j)
        if (trained_groups["encoder"][0].second.data()[j] !=
            fresh_groups["encoder"][0].second.data()[j])
            encoder_moved = true;
    CHECK(encoder_moved);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("checkpoint save -> load -> save is byte stable") {
    train::TrainConfig cfg = toy_train("pc_train_ckpt");
    PromptCodecModel model(cfg.model);
    const std::string p1 = cfg.out_dir + "/a.pckp";
    const std::string p2 = cfg.out_dir + "/b.pckp";
    fs::create_directories(cfg.out_dir);
    model.save(p1);
    auto loaded = PromptCodecModel::load(p1);
    loaded->save(p2);
    CHECK(slurp(p1) == slurp(p2));
    CHECK_THROWS_AS(PromptCodecModel::load(cfg.out_dir + "/missing.pckp"), IoError);

    // corrupt checkpoints carry a diagnostic
    std::string bytes = slurp(p1);
    bytes[4] = 9;  // version byte
    const std::string broken = cfg.out_dir + "/broken.pckp";
    std::ofstream(broken, std::ios::binary) << bytes;
    CHECK_THROWS_WITH_AS(PromptCodecModel::load(broken),
                         doctest::Contains("unsupported version"), CorruptStream);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("divergent training aborts with a numerical error") {
    train::TrainConfig cfg = toy_train("pc_train_nan");
    cfg.learning_rate = 1e280;
    cfg.steps = 5;
    CHECK_THROWS_AS(train::train(cfg, train::open_dataset(cfg)), NumericalError);
    fs::remove_all(cfg.out_dir);
}

TEST_CASE("evaluation of an identity codec is perfect") {
    train::SyntheticSpec spec;
    spec.count = 3;
    spec.seed = 11;
    spec.sample_rate = 16000;
    spec.duration_seconds = 1.0;
    train::DatasetManifest manifest = train::build_manifest(spec);
    train::EvalResult res = train::evaluate_with(
        [](const Waveform& w, const train::ManifestEntry&) { return w; }, manifest, 1234.5);
    REQUIRE(res.rows.size() == 3);
    double stoi_sum = 0.0, mcd_sum = 0.0;
    for (const auto& row : res.rows) {
        CHECK(row.stoi == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(row.mcd == 0.0);
        CHECK(row.bitrate_bps == 1234.5);
        CHECK_FALSE(row.pesq.has_value());
        stoi_sum += row.stoi;
        mcd_sum += row.mcd;
    }
    CHECK(res.aggregate.stoi == doctest::Approx(stoi_sum / 3.0).epsilon(1e-9));
    CHECK(res.aggregate.mcd == doctest::Approx(mcd_sum / 3.0).epsilon(1e-9));
    CHECK(res.aggregate.utt_id == "aggregate");

    const std::string csv = res.to_csv();
    CHECK(csv.rfind("utt_id,pesq,stoi,mcd,bitrate_bps\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 3 rows + aggregate
}

TEST_CASE("train config files round trip") {
    train::TrainConfig cfg = toy_train("pc_train_cfg");
    cfg.loss.beta1 = 12.5;
    cfg.use_drl = false;
    const io::KeyValues kv = cfg.to_key_values();
    train::TrainConfig back = train::TrainConfig::from_key_values(kv);
    CHECK(back.loss.beta1 == 12.5);
    CHECK(back.use_drl == false);
    CHECK(back.model.codec.latent_dim == 16);
    CHECK(back.model.codec.encoder_strides == std::vector<int>{4, 4});
    CHECK(back.to_key_values() == kv);
}
