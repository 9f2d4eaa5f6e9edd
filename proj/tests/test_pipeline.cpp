#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dpsynth/audits.hpp"
#include "dpsynth/errors.hpp"
#include "dpsynth/pipeline.hpp"

using namespace dpsynth;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path p = fs::temp_directory_path() / ("dpsynth_pipe_" + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

json toy_merf_config() {
    return json{
        {"seed", 3},
        {"dataset",
         {{"kind", "three_gaussians"}, {"n", 600}, {"seed", 5},
          {"split", {{"train", 0.7}, {"val", 0.15}, {"test", 0.15}, {"stratified", false}}}}},
        {"privacy", {{"epsilon", "inf"}, {"delta", "auto"}}},
        {"method",
         {{"id", "dp-merf"}, {"rff_dim", 128}, {"iters", 150}, {"batch", 96}}},
        {"eval",
         {{"n_synth", 150},
          {"fidelity_cap", 300},
          {"clf_epochs", 3},
          {"clf_hidden", {12}}}},
    };
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config snapshots are byte-stable and run ids collide on purpose") {
    const ExperimentConfig a = ExperimentConfig::from_json(toy_merf_config());
    const ExperimentConfig b = ExperimentConfig::from_json(toy_merf_config());
    CHECK(a.snapshot() == b.snapshot());
    CHECK(a.run_id() == b.run_id());
    CHECK(a.run_id().size() == 16);

    const ExperimentConfig c = a.with_override("/seed", 4);
    CHECK(c.run_id() != a.run_id());

    CHECK(a.target_epsilon() == std::numeric_limits<double>::infinity());
    // delta auto resolves through the 1/(N ln N) rule on the train split.
    CHECK(a.resolve_delta(420) == doctest::Approx(delta_default(420)));
}

TEST_CASE("dp-merf end-to-end run produces ledger, metrics and all fidelity keys") {
    const fs::path root = fresh_dir("merf");
    const ExperimentConfig cfg = ExperimentConfig::from_json(toy_merf_config());
    const ExperimentRecord rec = run_experiment(cfg, root.string());

    CHECK(rec.ledger.size() == 1); // one Gaussian release, nothing else
    CHECK(fs::exists(fs::path(rec.run_dir) / "config.json"));
    CHECK(fs::exists(fs::path(rec.run_dir) / "ledger.json"));
    CHECK(fs::exists(fs::path(rec.run_dir) / "synthetic" / "images.tf"));
    CHECK(fs::exists(fs::path(rec.run_dir) / "metrics.json"));
    CHECK(fs::exists(fs::path(rec.run_dir) / "log.txt"));

    const json& fid = rec.metrics.at("fidelity");
    for (const char* key : {"fid", "is_proxy", "precision", "recall"}) {
        CHECK(fid.contains(key));
        CHECK(fid.at(key).is_number());
    }
    // Reserved slots stay in the schema even though they are out of scope.
    CHECK(fid.at("fld").is_null());
    CHECK(fid.at("image_reward").is_null());
    for (const char* proto : {"testfix", "senv", "synv", "noisy_senv"})
        CHECK(rec.metrics.at("utility").contains(proto));
    CHECK(rec.metrics.at("utility").at("senv").at("dp_violating") == true);
    CHECK(rec.metrics.at("utility").at("testfix").at("dp_violating") == false);
}

TEST_CASE("identical config and seed reproduce metrics.json byte for byte") {
    const ExperimentConfig cfg = ExperimentConfig::from_json(toy_merf_config());
    const fs::path root_a = fresh_dir("det_a"), root_b = fresh_dir("det_b");
    const ExperimentRecord ra = run_experiment(cfg, root_a.string());
    const ExperimentRecord rb = run_experiment(cfg, root_b.string());
    const std::string ma = slurp(fs::path(ra.run_dir) / "metrics.json");
    const std::string mb = slurp(fs::path(rb.run_dir) / "metrics.json");
    CHECK(!ma.empty());
    CHECK(ma == mb);

    // A different seed changes the run directory and the metrics.
    const ExperimentConfig other = cfg.with_override("/seed", 11);
    const ExperimentRecord rc = run_experiment(other, root_a.string());
    CHECK(rc.run_dir != ra.run_dir);
}

TEST_CASE("budget guard aborts over-budget runs with an error marker") {
    const fs::path root = fresh_dir("budget");
    json bad = toy_merf_config();
    bad["dataset"] = {{"kind", "toy_digits"}, {"n", 120}, {"seed", 2},
                      {"split", {{"train", 0.7}, {"val", 0.15}, {"test", 0.15},
                                 {"stratified", false}}}};
    bad["method"] = {{"id", "dpdm"},  {"sched_T", 16}, {"k_mult", 1},
                     {"hidden", {16}}, {"q", 0.5},      {"steps", 40},
                     {"sigma_override", 0.31}};
    bad["privacy"] = {{"epsilon", 1.0}, {"delta", "auto"}};
    const ExperimentConfig cfg = ExperimentConfig::from_json(bad);

    CHECK_THROWS_AS(run_train(cfg, root.string()), BudgetError);
    CHECK(fs::exists(root / cfg.run_id() / "error.txt"));
    CHECK_FALSE(fs::exists(root / cfg.run_id() / "metrics.json"));
}

TEST_CASE("report emits sorted rows and the CSV round-trips") {
    // Two synthetic records, deliberately out of order.
    ReportRow r1;
    r1.method = "dpdm";
    r1.epsilon = 10.0;
    r1.fid = 3.25;
    r1.is_proxy = 2.0;
    r1.precision = 0.5;
    r1.recall = 0.25;
    r1.eps_spent = 9.99;
    r1.run_id = "aaaa";
    r1.utility = {{"noisy_senv", {{"test_accuracy", 0.75}}}};
    ReportRow r2 = r1;
    r2.method = "dp-merf";
    r2.epsilon = 1.0;
    r2.run_id = "bbbb";
    ReportRow r3 = r1;
    r3.epsilon = 1.0;
    r3.run_id = "cccc";

    const fs::path root = fresh_dir("report");
    const std::string stem = (root / "report").string();
    emit_report({r1, r2, r3}, stem);

    const auto rows = parse_report_csv(stem + ".csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].method == "dp-merf");       // sorted by method id
    CHECK(rows[1].method == "dpdm");
    CHECK(rows[1].epsilon == 1.0);            // then by epsilon
    CHECK(rows[2].epsilon == 10.0);
    CHECK(rows[2].fid == doctest::Approx(3.25));
    CHECK(rows[2].utility.at("noisy_senv").at("test_accuracy").get<double>() ==
          doctest::Approx(0.75));

    // One record makes one data row.
    emit_report({r1}, (root / "single").string());
    CHECK(parse_report_csv((root / "single").string() + ".csv").size() == 1);

    const std::string md = slurp(root / "report.md");
    CHECK(md.find("| dp-merf |") != std::string::npos);
}

TEST_CASE("audits run green and carry witnesses") {
    const AuditReport sens = audit_sensitivity();
    CHECK(sens.passed);
    CHECK(sens.witness.is_array());
    CHECK(sens.witness.size() == 30); // 5 m-values x 3 notions x 2 alphabets

    const AuditReport promise = audit_dppromise(100, NoiseSchedule::linear(50));
    CHECK(promise.passed);
    CHECK(promise.witness.at("max_reconstruction_error").get<double>() < 1e-9);
    CHECK(promise.witness.at("min_control_error").get<double>() > 1e-3);
    CHECK(promise.witness.at("example").contains("x_t"));

    // Small grid here; the acceptance suite runs the full default grid.
    const AuditReport acct = audit_accountant({{1.0, 1.0, 1, 1e-5},
                                               {0.05, 1.0, 40, 1e-6}});
    CHECK(acct.passed);
    const auto& first = acct.witness.at(0);
    CHECK(first.at("ledger_epsilon").get<double>() == doctest::Approx(5.30).epsilon(0.002));
    CHECK(first.at("oracle_epsilon").get<double>() == doctest::Approx(5.30).epsilon(0.002));
}

} // TEST_SUITE
