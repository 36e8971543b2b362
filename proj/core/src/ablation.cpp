#include "promptcodec/ablation.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "promptcodec/errors.hpp"

namespace promptcodec::train {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

AblationPlan AblationPlan::default_plan() {
    AblationPlan p;
    p.variants = {
        {"PromptCodec", true, true, true, true},
        {"w/o DRL", false, true, true, true},
        {"w/o DRL, w/o AFWF", false, false, true, true},
        {"w/o DRL, w/o AFWF, w/o ConditionEncoder", false, false, false, true},
        {"w/o DRL, w/o AFWF, w/o VoiceprintEncoder", false, false, true, false},
    };
    return p;
}

void AblationPlan::validate() const {
    if (variants.empty()) throw InvalidConfig("ablation: no variants");
    if (n_q_values.empty()) throw InvalidConfig("ablation: no n_q values");
    std::set<std::string> names;
    for (const auto& v : variants)
        if (!names.insert(v.name).second)
            throw InvalidConfig("ablation: duplicate variant name " + v.name);
    for (int n : n_q_values)
        if (n < 1) throw InvalidConfig("ablation: n_q must be >= 1");
}

namespace {

struct RefRow {
    const char* variant;
    int n_q;
    double pesq, stoi, mcd;
};

// published comparison table for the five-variant ladder
constexpr RefRow kReference[] = {
    {"PromptCodec", 1, 2.728, 0.938, 0.847},
    {"w/o DRL", 1, 2.661, 0.934, 0.895},
    {"w/o DRL, w/o AFWF", 1, 2.620, 0.932, 0.901},
    {"w/o DRL, w/o AFWF, w/o ConditionEncoder", 1, 2.403, 0.922, 1.018},
    {"w/o DRL, w/o AFWF, w/o VoiceprintEncoder", 1, 2.530, 0.93, 0.944},
    {"PromptCodec", 2, 2.843, 0.947, 0.764},
    {"w/o DRL", 2, 2.742, 0.944, 0.811},
    {"w/o DRL, w/o AFWF", 2, 2.701, 0.941, 0.822},
    {"w/o DRL, w/o AFWF, w/o ConditionEncoder", 2, 2.566, 0.937, 0.866},
    {"w/o DRL, w/o AFWF, w/o VoiceprintEncoder", 2, 2.580, 0.939, 0.877},
    {"PromptCodec", 4, 3.720, 0.976, 0.561},
    {"w/o DRL", 4, 3.661, 0.976, 0.574},
    {"w/o DRL, w/o AFWF", 4, 3.646, 0.975, 0.574},
    {"w/o DRL, w/o AFWF, w/o ConditionEncoder", 4, 3.603, 0.974, 0.608},
    {"w/o DRL, w/o AFWF, w/o VoiceprintEncoder", 4, 3.613, 0.975, 0.611},
};

std::string fmt3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

bool reference_metrics(const std::string& variant, int n_q, double& pesq, double& stoi,
                       double& mcd) {
    for (const RefRow& r : kReference) {
        if (variant == r.variant && n_q == r.n_q) {
            pesq = r.pesq;
            stoi = r.stoi;
            mcd = r.mcd;
            return true;
        }
    }
    return false;
}

AblationReport run_ablation(const AblationPlan& plan, const TrainConfig& base,
                            const DatasetManifest& manifest) {
    plan.validate();
    fs::create_directories(plan.out_dir);
    AblationReport report;
    for (int n_q : plan.n_q_values) {
        for (const AblationVariant& v : plan.variants) {
            AblationRow row;
            row.variant = v.name;
            row.n_q = n_q;
            double rp, rs, rm;
            if (reference_metrics(v.name, n_q, rp, rs, rm)) {
                row.pesq_paper = rp;
                row.stoi_paper = rs;
                row.mcd_paper = rm;
            }
            try {
                TrainConfig cfg = base;
                grvq_split_for_nq(n_q, cfg.model.grvq.groups, cfg.model.grvq.residual_layers);
                cfg.use_drl = v.use_drl;
                cfg.model.use_afwf = v.use_afwf;
                cfg.model.use_conditional = v.use_conditional;
                cfg.model.use_voiceprint = v.use_voiceprint;
                std::string run_name = v.name + "_nq" + std::to_string(n_q);
                for (char& c : run_name)
                    if (c == ' ' || c == '/' || c == ',') c = '_';
                cfg.out_dir = (fs::path(plan.out_dir) / run_name).string();
                TrainResult tr = train(cfg, manifest);
                auto model = PromptCodecModel::load(tr.checkpoint_path);
                EmbeddingTable table;
                const EmbeddingTable* table_ptr = nullptr;
                if (!cfg.vp_embeddings_path.empty()) {
                    table = read_embedding_file(cfg.vp_embeddings_path);
                    table_ptr = &table;
                }
                EvalResult ev = evaluate(*model, manifest, table_ptr);
                row.pesq = ev.aggregate.pesq;
                row.stoi = ev.aggregate.stoi;
                row.mcd = ev.aggregate.mcd;
                row.bitrate_bps = ev.aggregate.bitrate_bps;
            } catch (const std::exception& e) {
                row.error = e.what();
            }
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

std::string AblationReport::to_csv() const {
    std::string out =
        "n_q,variant,pesq,stoi,mcd,bitrate_bps,pesq_paper,stoi_paper,mcd_paper,error\n";
    for (const AblationRow& r : rows) {
        out += std::to_string(r.n_q) + "," + csv_quote(r.variant) + ",";
        if (r.error.empty()) {
            out += (r.pesq ? fmt6(*r.pesq) : std::string()) + ",";
            out += fmt6(r.stoi) + "," + fmt6(r.mcd) + "," + fmt6(r.bitrate_bps) + ",";
        } else {
            out += ",,,,";
        }
        out += (r.pesq_paper ? fmt3(*r.pesq_paper) : std::string()) + ",";
        out += (r.stoi_paper ? fmt3(*r.stoi_paper) : std::string()) + ",";
        out += (r.mcd_paper ? fmt3(*r.mcd_paper) : std::string()) + ",";
        out += csv_quote(r.error) + "\n";
    }
    return out;
}

std::string AblationReport::to_markdown() const {
    std::string out =
        "| N_q | Model | PESQ | STOI | MCD | bitrate (bps) | PESQ (paper) | STOI (paper) | MCD "
        "(paper) |\n|---|---|---|---|---|---|---|---|---|\n";
    for (const AblationRow& r : rows) {
        out += "| " + std::to_string(r.n_q) + " | " + r.variant + " | ";
        if (r.error.empty()) {
            out += (r.pesq ? fmt3(*r.pesq) : std::string("-")) + " | " + fmt3(r.stoi) + " | " +
                   fmt3(r.mcd) + " | " + fmt6(r.bitrate_bps) + " | ";
        } else {
            out += "error | error | error | error | ";
        }
        out += (r.pesq_paper ? fmt3(*r.pesq_paper) : std::string("-")) + " | ";
        out += (r.stoi_paper ? fmt3(*r.stoi_paper) : std::string("-")) + " | ";
        out += (r.mcd_paper ? fmt3(*r.mcd_paper) : std::string("-")) + " |\n";
    }
    return out;
}

std::string AblationReport::to_json() const {
    ordered_json j = ordered_json::array();
    for (const AblationRow& r : rows) {
        ordered_json o;
        o["variant"] = r.variant;
        o["n_q"] = r.n_q;
        o["pesq"] = r.pesq ? ordered_json(*r.pesq) : ordered_json(nullptr);
        o["stoi"] = r.stoi;
        o["mcd"] = r.mcd;
        o["bitrate_bps"] = r.bitrate_bps;
        o["error"] = r.error;
        o["pesq_paper"] = r.pesq_paper ? ordered_json(*r.pesq_paper) : ordered_json(nullptr);
        o["stoi_paper"] = r.stoi_paper ? ordered_json(*r.stoi_paper) : ordered_json(nullptr);
        o["mcd_paper"] = r.mcd_paper ? ordered_json(*r.mcd_paper) : ordered_json(nullptr);
        j.push_back(std::move(o));
    }
    return j.dump(2);
}

AblationReport AblationReport::from_json(const std::string& text) {
    AblationReport report;
    const auto j = nlohmann::json::parse(text);
    for (const auto& o : j) {
        AblationRow r;
        r.variant = o.at("variant").get<std::string>();
        r.n_q = o.at("n_q").get<int>();
        if (!o.at("pesq").is_null()) r.pesq = o.at("pesq").get<double>();
        r.stoi = o.at("stoi").get<double>();
        r.mcd = o.at("mcd").get<double>();
        r.bitrate_bps = o.at("bitrate_bps").get<double>();
        r.error = o.at("error").get<std::string>();
        if (!o.at("pesq_paper").is_null()) r.pesq_paper = o.at("pesq_paper").get<double>();
        if (!o.at("stoi_paper").is_null()) r.stoi_paper = o.at("stoi_paper").get<double>();
        if (!o.at("mcd_paper").is_null()) r.mcd_paper = o.at("mcd_paper").get<double>();
        report.rows.push_back(std::move(r));
    }
    return report;
}

void write_ablation_report(const AblationReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        if (!f) throw IoError("cannot create report file: " + name);
        f << content;
    };
    write("ablation_rows.json", report.to_json());
    write("ablation.csv", report.to_csv());
    write("ablation.md", report.to_markdown());
}

}  // namespace promptcodec::train
