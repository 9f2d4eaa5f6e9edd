#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dpsynth/accountant.hpp"
#include "dpsynth/audits.hpp"
#include "dpsynth/errors.hpp"
#include "dpsynth/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dpsynth;

namespace {

ExperimentConfig load_config(const std::string& path, int seed_override) {
    ExperimentConfig cfg = ExperimentConfig::from_file(path);
    if (seed_override >= 0)
        cfg = cfg.with_override("/seed", static_cast<uint64_t>(seed_override));
    return cfg;
}

std::vector<std::string> run_dirs_under(const std::string& exp_dir) {
    std::vector<std::string> dirs;
    if (!fs::exists(exp_dir)) return dirs;
    for (const auto& entry : fs::directory_iterator(exp_dir))
        if (entry.is_directory() && fs::exists(entry.path() / "metrics.json"))
            dirs.push_back(entry.path().string());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dpsynth: desk-scale differentially private data synthesis lab"};
    app.require_subcommand(1);

    std::string config_path;
    std::string exp_dir = "exp";
    int seed_override = -1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "experiment config JSON")->required();
        sub->add_option("--exp-dir", exp_dir, "experiment root directory");
        sub->add_option("--seed", seed_override, "override the config seed");
    };

    auto* prepare = app.add_subcommand("prepare", "materialize the configured datasets");
    add_common(prepare);
    auto* pretrain_cmd =
        app.add_subcommand("pretrain", "build or reuse the cached pretrained checkpoint");
    add_common(pretrain_cmd);
    auto* train = app.add_subcommand("train", "train the synthesizer and emit samples");
    add_common(train);
    auto* synth = app.add_subcommand("synth", "regenerate synthetic data from a run");
    add_common(synth);
    auto* eval = app.add_subcommand("eval", "evaluate a trained run into metrics.json");
    add_common(eval);
    auto* runcmd = app.add_subcommand("run", "train and evaluate in one go");
    add_common(runcmd);

    auto* report = app.add_subcommand("report", "comparison table across finished runs");
    report->add_option("--exp-dir", exp_dir, "experiment root directory");
    std::string report_out = "report";
    report->add_option("--out", report_out, "output stem for .csv and .md");

    auto* account = app.add_subcommand("account", "convert a ledger JSON to epsilon");
    std::string ledger_path;
    std::vector<double> deltas{1e-5};
    account->add_option("--ledger", ledger_path, "ledger JSON file")->required();
    account->add_option("--delta", deltas, "delta values to convert at");

    auto* sweep = app.add_subcommand("sweep", "run the config over epsilons and seeds");
    add_common(sweep);
    std::vector<std::string> sweep_eps;
    std::vector<uint64_t> sweep_seeds;
    sweep->add_option("--epsilon", sweep_eps, "epsilon values (number or inf)");
    sweep->add_option("--seeds", sweep_seeds, "seeds to run");

    auto* audit = app.add_subcommand("audit", "run the analytical-claim audits");
    std::string only_audit;
    std::string audit_out = "audits.json";
    audit->add_option("--only", only_audit, "run a single audit by id");
    audit->add_option("--out", audit_out, "machine-readable output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) {
            write_datasets(load_config(config_path, seed_override), exp_dir);
            std::cout << "datasets written under " << exp_dir << "/data\n";
        } else if (pretrain_cmd->parsed()) {
            const std::string stem =
                ensure_pretrained(load_config(config_path, seed_override), exp_dir);
            std::cout << (stem.empty() ? "method takes no pretraining" : stem) << "\n";
        } else if (train->parsed()) {
            const std::string dir =
                run_train(load_config(config_path, seed_override), exp_dir);
            std::cout << dir << "\n";
        } else if (synth->parsed()) {
            regenerate_synthetic(load_config(config_path, seed_override), exp_dir);
        } else if (eval->parsed()) {
            const json metrics =
                run_eval(load_config(config_path, seed_override), exp_dir);
            std::cout << metrics.dump(2) << "\n";
        } else if (runcmd->parsed()) {
            const ExperimentRecord rec =
                run_experiment(load_config(config_path, seed_override), exp_dir);
            std::cout << rec.run_dir << "\n";
        } else if (report->parsed()) {
            const auto rows = collect_report_rows(run_dirs_under(exp_dir));
            emit_report(rows, report_out);
            std::cout << report_out << ".csv\n" << report_out << ".md\n";
        } else if (account->parsed()) {
            std::ifstream in(ledger_path);
            if (!in) throw ValidationError("cannot read ledger: " + ledger_path);
            const AccountantLedger ledger = ledger_from_json(json::parse(in));
            for (double delta : deltas)
                std::cout << "delta=" << delta
                          << " epsilon=" << accounted_epsilon(ledger, delta) << "\n";
        } else if (sweep->parsed()) {
            if (sweep_eps.empty()) sweep_eps = {"1.0", "10.0"};
            if (sweep_seeds.empty()) sweep_seeds = {1};
            ExperimentConfig base = load_config(config_path, seed_override);
            std::vector<std::string> dirs;
            for (const std::string& eps : sweep_eps) {
                const json eps_value = eps == "inf" ? json("inf") : json(std::stod(eps));
                for (uint64_t seed : sweep_seeds) {
                    ExperimentConfig cfg =
                        base.with_override("/privacy/epsilon", eps_value)
                            .with_override("/seed", seed);
                    const ExperimentRecord rec = run_experiment(cfg, exp_dir);
                    std::cout << "done " << rec.run_dir << "\n";
                    dirs.push_back(rec.run_dir);
                }
            }
            emit_report(collect_report_rows(dirs),
                        (fs::path(exp_dir) / "report").string());
        } else if (audit->parsed()) {
            std::vector<AuditReport> reports;
            if (only_audit.empty()) {
                reports = run_all_audits();
            } else if (only_audit == "sensitivity") {
                reports.push_back(audit_sensitivity());
            } else if (only_audit == "dppromise") {
                reports.push_back(audit_dppromise(100, NoiseSchedule::linear(50)));
            } else if (only_audit == "accountant") {
                reports.push_back(audit_accountant(default_accountant_grid()));
            } else {
                throw ValidationError("unknown audit id: " + only_audit);
            }
            json out = json::array();
            bool all_passed = true;
            for (const auto& r : reports) {
                out.push_back(r.to_json());
                all_passed = all_passed && r.passed;
                std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.id << ": "
                          << r.claim << "\n";
            }
            std::ofstream of(audit_out);
            of << out.dump(2) << "\n";
            if (!all_passed) return 1;
        }
        return 0;
    } catch (const BudgetError& e) {
        std::cerr << "budget violation: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
