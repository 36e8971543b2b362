// Ablation harness: trains and evaluates model variants over a grid of
// codebook counts and emits CSV/Markdown comparison tables, with published
// reference values alongside where a variant matches a known row.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "promptcodec/training.hpp"

namespace promptcodec::train {

struct AblationVariant {
    std::string name;
    bool use_drl = true;
    bool use_afwf = true;
    bool use_conditional = true;
    bool use_voiceprint = true;
};

struct AblationPlan {
    std::vector<AblationVariant> variants;
    std::vector<int> n_q_values{1, 2, 4};
    std::string out_dir = "pc_ablation";

    // The five-row ladder: full model, then cumulative removals.
    static AblationPlan default_plan();
    void validate() const;
};

struct AblationRow {
    std::string variant;
    int n_q = 0;
    std::optional<double> pesq;
    double stoi = 0.0;
    double mcd = 0.0;
    double bitrate_bps = 0.0;
    std::string error;  // non-empty when this variant failed; metrics invalid
    // published reference values for matching rows (desk-scale numbers are
    // not comparable to these)
    std::optional<double> pesq_paper, stoi_paper, mcd_paper;
};

struct AblationReport {
    std::vector<AblationRow> rows;  // grouped by n_q, ladder order within

    std::string to_csv() const;
    std::string to_markdown() const;
    std::string to_json() const;
    static AblationReport from_json(const std::string& text);
};

// Returns reference metrics for (variant name, n_q) when published.
bool reference_metrics(const std::string& variant, int n_q, double& pesq, double& stoi,
                       double& mcd);

AblationReport run_ablation(const AblationPlan& plan, const TrainConfig& base,
                            const DatasetManifest& manifest);

// Compute and formatting are separated: rows.json is the stored result;
// CSV and Markdown regenerate from it byte-identically.
void write_ablation_report(const AblationReport& report, const std::string& out_dir);

}  // namespace promptcodec::train
