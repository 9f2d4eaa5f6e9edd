#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsynth/accountant.hpp"
#include "dpsynth/dataset.hpp"

namespace dpsynth {

/// Resolved experiment description. The stored JSON carries every default
/// applied, so its dump is a byte-stable snapshot and two runs with equal
/// snapshots and seeds collide on the same run id.
class ExperimentConfig {
public:
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig from_file(const std::string& path);

    const nlohmann::json& raw() const { return raw_; }
    uint64_t seed() const { return seed_; }
    std::string method() const { return raw_.at("method").at("id"); }

    /// Byte-stable resolved snapshot (sorted keys, two-space indent).
    std::string snapshot() const;
    /// Short content hash of (snapshot, seed).
    std::string run_id() const;

    double target_epsilon() const; // +inf for non-private runs
    /// Resolves "auto" against the training-split size.
    double resolve_delta(std::size_t n_train) const;

    ExperimentConfig with_override(const std::string& pointer,
                                   const nlohmann::json& value) const;

private:
    nlohmann::json raw_;
    uint64_t seed_ = 0;
};

struct ExperimentRecord {
    std::string run_id;
    std::string run_dir;
    nlohmann::json config_snapshot;
    AccountantLedger ledger;
    nlohmann::json metrics;
    double wall_seconds = 0.0;
};

/// Materializes the configured sensitive (and public) datasets under
/// <exp_root>/data; the standalone `prepare` stage.
void write_datasets(const ExperimentConfig& cfg, const std::string& exp_root);

/// Ensures the cached pretrained checkpoint for this config exists and
/// returns its path stem ("" when the method takes no pretraining).
std::string ensure_pretrained(const ExperimentConfig& cfg, const std::string& exp_root);

/// Stages prepare -> (pretrain) -> train -> synth. Writes config.json,
/// ledger.json, checkpoints/ and synthetic/ into the run directory and
/// aborts with an error marker when the ledger exceeds the target.
std::string run_train(const ExperimentConfig& cfg, const std::string& exp_root);

/// Evaluation stage over an existing run directory: fidelity and utility
/// metrics. Refuses to write metrics.json for an over-budget ledger.
nlohmann::json run_eval(const ExperimentConfig& cfg, const std::string& exp_root);

/// Regenerates the synthetic set from the stored checkpoint.
void regenerate_synthetic(const ExperimentConfig& cfg, const std::string& exp_root);

/// The whole stage graph; what the acceptance suite and `sweep` drive.
ExperimentRecord run_experiment(const ExperimentConfig& cfg,
                                const std::string& exp_root);

struct ReportRow {
    std::string method;
    double epsilon = 0.0; // +inf encoded as "inf" in files
    double fid = 0.0;
    double is_proxy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    nlohmann::json utility; // accuracy per protocol
    double eps_spent = 0.0;
    std::string run_id;
};

/// Scans run directories with metrics.json into comparison rows.
std::vector<ReportRow> collect_report_rows(const std::vector<std::string>& run_dirs);

/// CSV plus Markdown comparison table, rows sorted by method then epsilon.
void emit_report(const std::vector<ReportRow>& rows, const std::string& out_stem);

/// Parse-back oracle for the CSV side of the report.
std::vector<ReportRow> parse_report_csv(const std::string& path);

/// Loads a run's ledger and prints-ready epsilon for a delta.
double accounted_epsilon(const AccountantLedger& ledger, double delta);

} // namespace dpsynth
