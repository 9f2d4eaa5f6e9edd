#include "dpsynth/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "dpsynth/diffusion.hpp"
#include "dpsynth/errors.hpp"
#include "dpsynth/fidelity.hpp"
#include "dpsynth/fixtures.hpp"
#include "dpsynth/merf.hpp"
#include "dpsynth/pe.hpp"
#include "dpsynth/privimage.hpp"
#include "dpsynth/utility.hpp"

namespace dpsynth {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

uint64_t fnv1a(const std::string& bytes, uint64_t h = 0xCBF29CE484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::string hex16(uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

json dataset_defaults(const std::string& kind) {
    return json{{"kind", kind},
                {"n", 1000},
                {"seed", 1},
                {"path", ""},
                {"split",
                 {{"train", 0.7}, {"val", 0.15}, {"test", 0.15}, {"stratified", false}}}};
}

json method_defaults(const std::string& id) {
    if (id == "dp-merf")
        return json{{"id", id},          {"rff_dim", 256},   {"bandwidth", 0.0},
                    {"latent_dim", 4},   {"gen_hidden", {48, 48}},
                    {"iters", 600},      {"batch", 128},     {"lr", 0.01},
                    {"notion", "replace_one"}, {"class_conditional", true}};
    if (id == "dpdm")
        return json{{"id", id},         {"sched_T", 32},  {"k_mult", 4},
                    {"hidden", {64}},   {"clip", 1.0},    {"q", 0.25},
                    {"lr", 0.05},       {"steps", 60},    {"sigma_override", -1.0},
                    {"conditional", true}};
    if (id == "dp-feta") {
        json j = method_defaults("dpdm");
        j["id"] = id;
        j["n_central"] = 2;
        j["pixel_clip"] = 8.0;
        j["central_fraction"] = 0.1;
        j["central_iters"] = 300;
        j["central_lr"] = 0.002;
        return j;
    }
    if (id == "pe")
        return json{{"id", id},          {"n_cand", 128}, {"iters", 8},
                    {"sigma_hist", 5.0}, {"threshold", -1.0},
                    {"init_scale", 0.15}, {"decay", 0.6}};
    if (id == "privimage") {
        json j = method_defaults("dpdm");
        j["id"] = id;
        j["select"] = json{{"k_frac", 0.05},    {"sigma_fraction", 0.1},
                           {"clf_hidden", {32}}, {"clf_epochs", 8},
                           {"clf_lr", 0.002}};
        j["pretrain_iters"] = 300;
        j["pretrain_batch"] = 16;
        j["pretrain_lr"] = 0.002;
        return j;
    }
    throw ValidationError("unknown method id: " + id);
}

json eval_defaults() {
    return json{{"extractor", "raw_pixels"},
                {"rff_dim", 128},
                {"bandwidth", 0.0},
                {"knn_k", 3},
                {"n_synth", 400},
                {"protocols", {"testfix", "senv", "synv", "noisy_senv"}},
                {"eps_val", 1.0},
                {"clf_hidden", {24}},
                {"clf_epochs", 6},
                {"clf_lr", 0.08},
                {"clf_batch", 32},
                {"fidelity_cap", 1000}};
}

json pretrain_defaults() {
    return json{{"enabled", false}, {"mode", "conditional"}, {"iters", 300},
                {"batch", 16},      {"lr", 0.002},           {"seed", 1234}};
}

void deep_merge(json& base, const json& over) {
    if (!over.is_object() || !base.is_object()) {
        base = over;
        return;
    }
    for (auto it = over.begin(); it != over.end(); ++it) {
        if (base.contains(it.key()))
            deep_merge(base[it.key()], it.value());
        else
            base[it.key()] = it.value();
    }
}

json encode_eps(double eps) {
    if (std::isinf(eps)) return "inf";
    return eps;
}

double decode_eps(const json& j) {
    if (j.is_string()) {
        if (j.get<std::string>() == "inf") return kInf;
        throw ValidationError("epsilon must be a number or \"inf\"");
    }
    const double v = j.get<double>();
    if (!(v > 0.0)) throw ValidationError("epsilon must be positive");
    return v;
}

Dataset resolve_dataset(const json& section, bool with_split) {
    const std::string kind = section.at("kind");
    Dataset ds;
    if (kind == "toy_digits") {
        ds = make_toy_digits(section.at("n").get<std::size_t>(),
                             section.at("seed").get<uint64_t>());
    } else if (kind == "three_gaussians") {
        ds = make_three_gaussians(section.at("n").get<std::size_t>(),
                                  section.at("seed").get<uint64_t>());
    } else if (kind == "dir") {
        ds = load_dataset(section.at("path").get<std::string>());
    } else {
        throw ValidationError("unknown dataset kind: " + kind);
    }
    if (section.contains("resize") && section.at("resize").is_array()) {
        const auto hw = section.at("resize").get<std::vector<std::size_t>>();
        if (hw.size() != 2) throw ValidationError("resize expects [h, w]");
        ds = resize_nearest(ds, hw[0], hw[1]);
    }
    if (with_split) {
        const json& sp = section.at("split");
        ds = split_dataset(ds,
                           {sp.at("train").get<double>(), sp.at("val").get<double>(),
                            sp.at("test").get<double>()},
                           section.at("seed").get<uint64_t>() ^ 0xA5A5ULL,
                           sp.at("stratified").get<bool>());
    }
    return ds;
}

NeighborNotion notion_from(const std::string& s) {
    if (s == "replace_one") return NeighborNotion::replace_one;
    if (s == "add_remove_unknown_m") return NeighborNotion::add_remove_unknown_m;
    if (s == "add_remove_known_m") return NeighborNotion::add_remove_known_m;
    throw ValidationError("unknown neighboring notion: " + s);
}

void append_log(const fs::path& run_dir, const std::string& line) {
    std::ofstream log(run_dir / "log.txt", std::ios::app);
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    log << std::chrono::duration_cast<std::chrono::milliseconds>(now).count() << " "
        << line << "\n";
}

void write_error_marker(const fs::path& run_dir, const std::string& message) {
    std::ofstream marker(run_dir / "error.txt");
    marker << message << "\n";
}

Dataset samples_to_dataset(const std::vector<std::vector<double>>& samples,
                           const std::vector<std::size_t>& labels, std::size_t k,
                           std::size_t h, std::size_t w, std::size_t c) {
    Tensor im({samples.size(), h, w, c});
    for (std::size_t i = 0; i < samples.size(); ++i)
        std::copy(samples[i].begin(), samples[i].end(),
                  im.data.begin() + static_cast<std::ptrdiff_t>(i * samples[i].size()));
    round_through_f32(im);
    return Dataset(std::move(im), labels, k);
}

std::vector<std::size_t> cycling(std::size_t n, std::size_t k) {
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = k == 0 ? 0 : i % k;
    return labels;
}

} // namespace

ExperimentConfig ExperimentConfig::from_json(const json& user) {
    if (!user.contains("method") || !user.at("method").contains("id"))
        throw ValidationError("config needs method.id");

    json resolved;
    resolved["seed"] = user.value("seed", 1);
    resolved["dataset"] = dataset_defaults("toy_digits");
    resolved["public"] = dataset_defaults("none");
    resolved["public"]["kind"] = "none";
    resolved["privacy"] = json{{"epsilon", "inf"}, {"delta", "auto"}};
    resolved["method"] = method_defaults(user.at("method").at("id"));
    resolved["pretrain"] = pretrain_defaults();
    resolved["eval"] = eval_defaults();
    deep_merge(resolved, user);

    decode_eps(resolved.at("privacy").at("epsilon")); // validate early

    ExperimentConfig cfg;
    cfg.raw_ = std::move(resolved);
    cfg.seed_ = cfg.raw_.at("seed").get<uint64_t>();
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    return from_json(j);
}

std::string ExperimentConfig::snapshot() const { return raw_.dump(2); }

std::string ExperimentConfig::run_id() const {
    return hex16(fnv1a(snapshot() + "#" + std::to_string(seed_)));
}

double ExperimentConfig::target_epsilon() const {
    return decode_eps(raw_.at("privacy").at("epsilon"));
}

double ExperimentConfig::resolve_delta(std::size_t n_train) const {
    const json& d = raw_.at("privacy").at("delta");
    if (d.is_string()) {
        if (d.get<std::string>() == "auto") return delta_default(n_train);
        throw ValidationError("delta must be a number or \"auto\"");
    }
    const double v = d.get<double>();
    if (!(v > 0.0 && v < 1.0)) throw ValidationError("delta must lie in (0,1)");
    return v;
}

ExperimentConfig ExperimentConfig::with_override(const std::string& pointer,
                                                 const json& value) const {
    json j = raw_;
    j[json::json_pointer(pointer)] = value;
    return from_json(j);
}

void write_datasets(const ExperimentConfig& cfg, const std::string& exp_root) {
    const fs::path data_dir = fs::path(exp_root) / "data";
    const Dataset sensitive = resolve_dataset(cfg.raw().at("dataset"), true);
    save_dataset((data_dir / "sensitive").string(), sensitive);
    if (cfg.raw().at("public").at("kind").get<std::string>() != "none") {
        const Dataset pub = resolve_dataset(cfg.raw().at("public"), false);
        save_dataset((data_dir / "public").string(), pub);
    }
}

std::string ensure_pretrained(const ExperimentConfig& cfg, const std::string& exp_root) {
    const json& pre = cfg.raw().at("pretrain");
    const std::string method = cfg.method();
    const bool wants = pre.at("enabled").get<bool>() &&
                       (method == "dpdm" || method == "dp-feta");
    if (!wants) return "";
    if (cfg.raw().at("public").at("kind").get<std::string>() == "none")
        throw ValidationError("pretraining needs a public dataset section");

    const Dataset pub = resolve_dataset(cfg.raw().at("public"), false);
    const Dataset sens_probe = resolve_dataset(cfg.raw().at("dataset"), false);
    const json& m = cfg.raw().at("method");

    // Cache key ignores privacy budget and run seed, so epsilon sweeps
    // share the same warm start.
    const std::string key_src = cfg.raw().at("public").dump() + pre.dump() +
                                m.at("hidden").dump() + "|" +
                                std::to_string(pub.sample_dim()) + "|" +
                                std::to_string(sens_probe.num_classes());
    const fs::path cache = fs::path(exp_root) / "cache";
    fs::create_directories(cache);
    const std::string stem = (cache / ("pretrain-" + hex16(fnv1a(key_src)))).string();
    if (fs::exists(stem + ".params.tf") && fs::exists(stem + ".spec.json"))
        return stem;

    const auto hidden = m.at("hidden").get<std::vector<std::size_t>>();
    const MlpSpec spec =
        make_denoiser_spec(pub.sample_dim(), hidden, sens_probe.num_classes());
    const NoiseSchedule sched =
        NoiseSchedule::linear(m.at("sched_T").get<std::size_t>());
    const std::string mode_s = pre.at("mode").get<std::string>();
    const PretrainMode mode = mode_s == "conditional" ? PretrainMode::conditional
                              : mode_s == "unconditional" ? PretrainMode::unconditional
                                                          : PretrainMode::random_label;
    SeededRng rng(pre.at("seed").get<uint64_t>(), 11);
    const ModelCheckpoint ckpt =
        pretrain(spec, pub, mode, sched, pre.at("iters").get<std::size_t>(),
                 pre.at("batch").get<std::size_t>(), pre.at("lr").get<double>(), rng,
                 sens_probe.num_classes());
    save_checkpoint(stem, ckpt);
    return stem;
}

namespace {

struct TrainOutcome {
    AccountantLedger ledger;
    Dataset synthetic;
    ModelCheckpoint checkpoint; // empty params for training-free methods
    json flags = json::object();
    double sigma_used = 0.0;
};

TrainOutcome train_method(const ExperimentConfig& cfg, const Dataset& sensitive,
                          const std::string& pretrained_stem) {
    const json& m = cfg.raw().at("method");
    const json& ev = cfg.raw().at("eval");
    const std::string id = cfg.method();
    const Dataset train_ds = take_subset(sensitive, sensitive.split().train_idx);
    const double eps = cfg.target_epsilon();
    const double delta = cfg.resolve_delta(train_ds.size());
    const PrivacySpec target{eps, delta};
    const std::size_t n_synth = ev.at("n_synth").get<std::size_t>();

    TrainOutcome out;
    SeededRng rng(cfg.seed(), 21);

    if (id == "dp-merf") {
        double bandwidth = m.at("bandwidth").get<double>();
        if (bandwidth <= 0.0) {
            // Median heuristic on public rows when available; a generated
            // surrogate of the same kind otherwise. Never the sensitive set.
            if (cfg.raw().at("public").at("kind").get<std::string>() != "none") {
                bandwidth =
                    median_heuristic_bandwidth(resolve_dataset(cfg.raw().at("public"), false));
            } else if (cfg.raw().at("dataset").at("kind").get<std::string>() != "dir") {
                json surrogate = cfg.raw().at("dataset");
                surrogate["seed"] = surrogate.at("seed").get<uint64_t>() + 7777;
                surrogate["n"] = 500;
                bandwidth = median_heuristic_bandwidth(resolve_dataset(surrogate, false));
            } else {
                throw ValidationError(
                    "directory datasets need an explicit bandwidth or a public section");
            }
        }
        SeededRng map_rng(cfg.seed(), 22);
        const RffMap map = RffMap::create(train_ds.sample_dim(),
                                          m.at("rff_dim").get<std::size_t>(),
                                          bandwidth, map_rng);
        MerfConfig mc;
        mc.latent_dim = m.at("latent_dim").get<std::size_t>();
        mc.gen_hidden = m.at("gen_hidden").get<std::vector<std::size_t>>();
        mc.iters = m.at("iters").get<std::size_t>();
        mc.batch = m.at("batch").get<std::size_t>();
        mc.lr = m.at("lr").get<double>();
        mc.notion = notion_from(m.at("notion").get<std::string>());
        mc.class_conditional = m.at("class_conditional").get<bool>();

        const MerfResult res = dpmerf_train(train_ds, map, target, mc, rng, out.ledger);
        out.checkpoint = res.generator;
        out.sigma_used = res.sigma_used;
        out.flags["initial_objective"] = res.initial_objective;
        out.flags["final_objective"] = res.final_objective;
        out.flags["bandwidth"] = bandwidth;

        SeededRng gen_rng(cfg.seed(), 23);
        const auto samples = merf_generate(
            res.generator, mc.latent_dim,
            mc.class_conditional ? train_ds.num_classes() : 0, n_synth, gen_rng);
        out.synthetic = samples_to_dataset(
            samples, cycling(n_synth, train_ds.num_classes()), train_ds.num_classes(),
            train_ds.height(), train_ds.width(), train_ds.channels());
        return out;
    }

    if (id == "dpdm" || id == "dp-feta" || id == "privimage") {
        const auto hidden = m.at("hidden").get<std::vector<std::size_t>>();
        const NoiseSchedule sched =
            NoiseSchedule::linear(m.at("sched_T").get<std::size_t>());
        const MlpSpec spec =
            make_denoiser_spec(train_ds.sample_dim(), hidden, train_ds.num_classes());

        DiffusionTrainConfig dc;
        dc.dpsgd.clip_bound = m.at("clip").get<double>();
        dc.dpsgd.q = m.at("q").get<double>();
        dc.dpsgd.lr = m.at("lr").get<double>();
        dc.dpsgd.steps = m.at("steps").get<std::size_t>();
        dc.noise_multiplicity = m.at("k_mult").get<std::size_t>();
        dc.conditional = m.at("conditional").get<bool>();
        dc.sigma_override = m.at("sigma_override").get<double>();

        DiffusionTrainResult res;
        if (id == "dpdm") {
            ModelCheckpoint warm;
            const bool have_warm = !pretrained_stem.empty();
            if (have_warm) warm = load_checkpoint(pretrained_stem);
            res = dpdmlite_train(train_ds, sched, target, spec, dc, rng, out.ledger,
                                 have_warm ? &warm : nullptr);
        } else if (id == "dp-feta") {
            FetaConfig fc;
            fc.diffusion = dc;
            fc.n_central = m.at("n_central").get<std::size_t>();
            fc.pixel_clip = m.at("pixel_clip").get<double>();
            fc.central_budget_fraction = m.at("central_fraction").get<double>();
            fc.central_pretrain_iters = m.at("central_iters").get<std::size_t>();
            fc.central_pretrain_lr = m.at("central_lr").get<double>();
            res = dpfeta_train(train_ds, sched, target, spec, fc, rng, out.ledger);
        } else {
            // privimage: noisy class selection over public data, pretraining
            // on the selected subset, then the DP-SGD finetune; selection and
            // training compose in one ledger.
            if (cfg.raw().at("public").at("kind").get<std::string>() == "none")
                throw ValidationError("privimage needs a public dataset section");
            const Dataset pub = resolve_dataset(cfg.raw().at("public"), false);
            const json& sel = m.at("select");

            SeededRng clf_rng(cfg.seed(), 24);
            const ModelCheckpoint query_clf = train_query_classifier(
                pub, sel.at("clf_hidden").get<std::vector<std::size_t>>(),
                sel.at("clf_epochs").get<std::size_t>(), sel.at("clf_lr").get<double>(),
                clf_rng);

            double sigma_sel = 0.0;
            if (!target.is_infinite()) {
                const PrivacySpec sel_target{
                    sel.at("sigma_fraction").get<double>() * eps, delta};
                sigma_sel = calibrate_sigma(sel_target, 1.0, 1);
            }
            SeededRng sel_rng(cfg.seed(), 25);
            const PrivImageSelection selection = privimage_select(
                pub, train_ds, query_clf, sel.at("k_frac").get<double>(), sigma_sel,
                sel_rng, out.ledger);
            out.flags["selected_classes"] = selection.top_classes;

            const PretrainMode mode = pub.num_classes() == train_ds.num_classes()
                                          ? PretrainMode::conditional
                                          : PretrainMode::random_label;
            SeededRng pre_rng(cfg.seed(), 26);
            const ModelCheckpoint warm = pretrain(
                spec, selection.selected, mode, sched,
                m.at("pretrain_iters").get<std::size_t>(),
                m.at("pretrain_batch").get<std::size_t>(),
                m.at("pretrain_lr").get<double>(), pre_rng, train_ds.num_classes());
            res = dpdmlite_train(train_ds, sched, target, spec, dc, rng, out.ledger,
                                 &warm);
        }

        out.checkpoint = res.checkpoint;
        out.sigma_used = res.sigma_used;
        out.flags["final_train_loss"] = res.final_train_loss;

        SeededRng gen_rng(cfg.seed(), 27);
        const auto labels = cycling(n_synth, train_ds.num_classes());
        const auto samples =
            generate_diffusion(res.checkpoint, sched, n_synth, labels, gen_rng);
        out.synthetic = samples_to_dataset(samples, labels, train_ds.num_classes(),
                                           train_ds.height(), train_ds.width(),
                                           train_ds.channels());
        return out;
    }

    if (id == "pe") {
        PeConfig pc;
        pc.n_candidates = m.at("n_cand").get<std::size_t>();
        pc.iterations = m.at("iters").get<std::size_t>();
        pc.sigma_hist = m.at("sigma_hist").get<double>();
        pc.threshold = m.at("threshold").get<double>();
        const PeApi api = make_jitter_api(train_ds.sample_dim(),
                                          m.at("init_scale").get<double>(),
                                          m.at("decay").get<double>());

        // One PE run per class over class-disjoint private rows: parallel
        // composition, so the ledger carries a single run's releases.
        const std::size_t k = train_ds.num_classes();
        std::vector<std::vector<double>> all_samples;
        std::vector<std::size_t> all_labels;
        bool fallback = false;
        json trend = json::array();
        for (std::size_t cls = 0; cls < k; ++cls) {
            std::vector<std::vector<double>> pts;
            for (std::size_t i = 0; i < train_ds.size(); ++i)
                if (train_ds.labels()[i] == cls) pts.push_back(train_ds.sample(i));
            if (pts.empty()) continue;
            SeededRng cls_rng(cfg.seed(), 30 + cls);
            AccountantLedger scratch;
            const PeResult res = pe_synthesize(pts, api, pc, cls_rng, scratch);
            fallback = fallback || res.fallback_used;
            trend.push_back(res.mean_nn_distance);
            for (std::size_t i = 0; i < res.samples.size(); ++i) {
                all_samples.push_back(res.samples[i]);
                all_labels.push_back(cls);
            }
        }
        out.ledger.add_gaussian(pc.sigma_hist, pc.iterations);
        out.flags["pe_fallback"] = fallback;
        out.flags["pe_nn_trend"] = trend;
        out.synthetic = samples_to_dataset(all_samples, all_labels, k,
                                           train_ds.height(), train_ds.width(),
                                           train_ds.channels());
        const double accounted = compose_and_convert(out.ledger, delta);
        if (accounted > eps + 1e-9)
            throw BudgetError("PE histogram releases exceed the privacy target");
        return out;
    }

    throw ValidationError("unknown method id: " + id);
}

} // namespace

std::string run_train(const ExperimentConfig& cfg, const std::string& exp_root) {
    const fs::path run_dir = fs::path(exp_root) / cfg.run_id();
    fs::create_directories(run_dir);
    {
        std::ofstream cf(run_dir / "config.json");
        cf << cfg.snapshot() << "\n";
    }
    append_log(run_dir, "train: start method=" + cfg.method());

    try {
        const Dataset sensitive = resolve_dataset(cfg.raw().at("dataset"), true);
        const std::string pre_stem = ensure_pretrained(cfg, exp_root);
        const TrainOutcome out = train_method(cfg, sensitive, pre_stem);

        const double delta = cfg.resolve_delta(sensitive.split().n_train());
        const double accounted = compose_and_convert(out.ledger, delta);
        if (accounted > cfg.target_epsilon() + 1e-9)
            throw BudgetError("accounted epsilon " + std::to_string(accounted) +
                              " exceeds the target");

        {
            std::ofstream lf(run_dir / "ledger.json");
            lf << ledger_to_json(out.ledger).dump(2) << "\n";
        }
        if (!out.checkpoint.params.empty()) {
            fs::create_directories(run_dir / "checkpoints");
            save_checkpoint((run_dir / "checkpoints" / "model").string(),
                            out.checkpoint);
        }
        save_dataset((run_dir / "synthetic").string(), out.synthetic);
        {
            std::ofstream ff(run_dir / "train_flags.json");
            json flags = out.flags;
            flags["sigma_used"] = out.sigma_used;
            ff << flags.dump(2) << "\n";
        }
        append_log(run_dir, "train: done");
        return run_dir.string();
    } catch (const Error& e) {
        write_error_marker(run_dir, e.what());
        append_log(run_dir, std::string("train: failed: ") + e.what());
        throw;
    }
}

void regenerate_synthetic(const ExperimentConfig& cfg, const std::string& exp_root) {
    const fs::path run_dir = fs::path(exp_root) / cfg.run_id();
    if (!fs::exists(run_dir / "checkpoints" / "model.spec.json"))
        throw ValidationError("no checkpoint to synthesize from; run train first");
    const ModelCheckpoint ckpt =
        load_checkpoint((run_dir / "checkpoints" / "model").string());
    const Dataset sensitive = resolve_dataset(cfg.raw().at("dataset"), true);
    const json& m = cfg.raw().at("method");
    const std::size_t n_synth = cfg.raw().at("eval").at("n_synth").get<std::size_t>();
    const auto labels = cycling(n_synth, sensitive.num_classes());

    SeededRng gen_rng(cfg.seed(), 27);
    std::vector<std::vector<double>> samples;
    if (cfg.method() == "dp-merf") {
        SeededRng merf_rng(cfg.seed(), 23);
        samples = merf_generate(ckpt, m.at("latent_dim").get<std::size_t>(),
                                m.at("class_conditional").get<bool>()
                                    ? sensitive.num_classes()
                                    : 0,
                                n_synth, merf_rng);
    } else {
        const NoiseSchedule sched =
            NoiseSchedule::linear(m.at("sched_T").get<std::size_t>());
        samples = generate_diffusion(ckpt, sched, n_synth, labels, gen_rng);
    }
    save_dataset((run_dir / "synthetic").string(),
                 samples_to_dataset(samples, labels, sensitive.num_classes(),
                                    sensitive.height(), sensitive.width(),
                                    sensitive.channels()));
    append_log(run_dir, "synth: regenerated " + std::to_string(n_synth) + " samples");
}

nlohmann::json run_eval(const ExperimentConfig& cfg, const std::string& exp_root) {
    const fs::path run_dir = fs::path(exp_root) / cfg.run_id();
    if (!fs::exists(run_dir / "ledger.json"))
        throw ValidationError("run directory has no ledger; run train first");
    append_log(run_dir, "eval: start");

    try {
        const Dataset sensitive = resolve_dataset(cfg.raw().at("dataset"), true);
        const Dataset synthetic = load_dataset((run_dir / "synthetic").string());

        AccountantLedger ledger;
        {
            std::ifstream lf(run_dir / "ledger.json");
            ledger = ledger_from_json(json::parse(lf));
        }
        const double delta = cfg.resolve_delta(sensitive.split().n_train());
        const double accounted = compose_and_convert(ledger, delta);
        const double target = cfg.target_epsilon();
        // Ledger-before-metrics: an over-budget run never gets metrics.
        if (accounted > target + 1e-9)
            throw BudgetError("accounted epsilon exceeds the target; metrics withheld");

        const json& ev = cfg.raw().at("eval");
        const Dataset real_train = take_subset(sensitive, sensitive.split().train_idx);
        const std::size_t cap = ev.at("fidelity_cap").get<std::size_t>();
        std::vector<std::size_t> fid_idx;
        for (std::size_t i = 0; i < std::min(cap, real_train.size()); ++i)
            fid_idx.push_back(i);
        const Dataset real_fid = take_subset(real_train, fid_idx);

        // Probe classifier on the real training split drives the IS proxy
        // and the penultimate-feature extractor.
        SeededRng probe_rng(cfg.seed(), 40);
        MlpSpec probe_spec;
        probe_spec.layer_sizes.push_back(sensitive.sample_dim());
        for (std::size_t hsz : ev.at("clf_hidden").get<std::vector<std::size_t>>())
            probe_spec.layer_sizes.push_back(hsz);
        probe_spec.layer_sizes.push_back(sensitive.num_classes());
        probe_spec.activation = Activation::relu;
        probe_spec.output_head = OutputHead::softmax;
        const ModelCheckpoint probe = train_query_classifier(
            real_train, ev.at("clf_hidden").get<std::vector<std::size_t>>(),
            ev.at("clf_epochs").get<std::size_t>(), ev.at("clf_lr").get<double>(),
            probe_rng);

        FeatureExtractor extractor;
        const std::string ex_kind = ev.at("extractor").get<std::string>();
        if (ex_kind == "raw_pixels") {
            extractor.kind = FeatureExtractor::Kind::raw_pixels;
        } else if (ex_kind == "rff") {
            extractor.kind = FeatureExtractor::Kind::rff;
            SeededRng map_rng(cfg.seed(), 41);
            double bw = ev.at("bandwidth").get<double>();
            if (bw <= 0.0) bw = median_heuristic_bandwidth(real_fid);
            extractor.map = RffMap::create(sensitive.sample_dim(),
                                           ev.at("rff_dim").get<std::size_t>(), bw,
                                           map_rng);
        } else if (ex_kind == "classifier_penultimate") {
            extractor.kind = FeatureExtractor::Kind::classifier_penultimate;
            extractor.clf = probe;
        } else {
            throw ValidationError("unknown extractor kind: " + ex_kind);
        }

        const FidelityReport fid = evaluate_fidelity(
            real_fid, synthetic, extractor, probe, ev.at("knn_k").get<std::size_t>());

        json utility = json::object();
        for (const auto& pj : ev.at("protocols")) {
            const std::string pname = pj.get<std::string>();
            ProtocolConfig pc;
            pc.protocol = pname == "testfix"  ? Protocol::testfix
                          : pname == "senv"   ? Protocol::senv
                          : pname == "synv"   ? Protocol::synv
                                              : Protocol::noisy_senv;
            pc.eps_val = ev.at("eps_val").get<double>();
            pc.epochs = ev.at("clf_epochs").get<std::size_t>();
            pc.batch = ev.at("clf_batch").get<std::size_t>();
            pc.lr = ev.at("clf_lr").get<double>();
            pc.eps_train = accounted;
            MlpSpec clf_spec = probe_spec;
            SeededRng urng(cfg.seed(), 42);
            const UtilityResult res =
                train_eval_classifier(synthetic, sensitive, clf_spec, pc, urng);
            json entry{{"test_accuracy", res.test_accuracy},
                       {"selected_step", res.selected_step},
                       {"dp_violating", res.dp_violating}};
            if (pc.protocol == Protocol::noisy_senv) {
                entry["eps_total"] = encode_eps(res.eps_total);
                entry["laplace_seed"] = res.laplace_seed;
            }
            utility[pname] = entry;
        }

        json train_flags = json::object();
        if (fs::exists(run_dir / "train_flags.json")) {
            std::ifstream ff(run_dir / "train_flags.json");
            train_flags = json::parse(ff);
        }

        json metrics;
        metrics["run_id"] = cfg.run_id();
        metrics["seed"] = cfg.seed();
        metrics["method"] = cfg.method();
        metrics["privacy"] = {{"target_epsilon", encode_eps(target)},
                              {"delta", delta},
                              {"accounted_epsilon", encode_eps(accounted)}};
        metrics["fidelity"] = {{"fid", fid.fid},
                               {"is_proxy", fid.is_proxy},
                               {"precision", fid.precision},
                               {"recall", fid.recall},
                               {"fld", nullptr},
                               {"image_reward", nullptr},
                               {"extractor", fid.extractor},
                               {"covariance_regularized", fid.covariance_regularized}};
        metrics["utility"] = utility;
        metrics["flags"] = train_flags;

        {
            std::ofstream mf(run_dir / "metrics.json");
            mf << metrics.dump(2) << "\n";
        }
        append_log(run_dir, "eval: done");
        return metrics;
    } catch (const Error& e) {
        write_error_marker(run_dir, e.what());
        append_log(run_dir, std::string("eval: failed: ") + e.what());
        throw;
    }
}

ExperimentRecord run_experiment(const ExperimentConfig& cfg,
                                const std::string& exp_root) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentRecord record;
    record.run_id = cfg.run_id();
    record.config_snapshot = cfg.raw();
    record.run_dir = run_train(cfg, exp_root);
    record.metrics = run_eval(cfg, exp_root);
    {
        std::ifstream lf(fs::path(record.run_dir) / "ledger.json");
        record.ledger = ledger_from_json(json::parse(lf));
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    append_log(record.run_dir,
               "experiment: wall_seconds=" + std::to_string(record.wall_seconds));
    return record;
}

std::vector<ReportRow> collect_report_rows(const std::vector<std::string>& run_dirs) {
    std::vector<ReportRow> rows;
    for (const auto& dir : run_dirs) {
        const fs::path metrics_path = fs::path(dir) / "metrics.json";
        if (!fs::exists(metrics_path)) continue;
        std::ifstream mf(metrics_path);
        const json m = json::parse(mf);
        ReportRow row;
        row.method = m.at("method").get<std::string>();
        row.run_id = m.at("run_id").get<std::string>();
        row.epsilon = decode_eps(m.at("privacy").at("target_epsilon"));
        row.eps_spent = m.at("privacy").at("accounted_epsilon").is_string()
                            ? kInf
                            : m.at("privacy").at("accounted_epsilon").get<double>();
        row.fid = m.at("fidelity").at("fid").get<double>();
        row.is_proxy = m.at("fidelity").at("is_proxy").get<double>();
        row.precision = m.at("fidelity").at("precision").get<double>();
        row.recall = m.at("fidelity").at("recall").get<double>();
        row.utility = m.at("utility");
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

std::string fmt(double v) {
    if (std::isinf(v)) return "inf";
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

double parse_eps_field(const std::string& s) {
    if (s == "inf") return kInf;
    if (s.empty()) return 0.0;
    return std::stod(s);
}

const char* kProtocolColumns[4] = {"testfix", "senv", "synv", "noisy_senv"};

} // namespace

void emit_report(const std::vector<ReportRow>& rows_in, const std::string& out_stem) {
    if (rows_in.empty()) throw ValidationError("nothing to report");
    std::vector<ReportRow> rows(rows_in);
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.method != b.method) return a.method < b.method;
        return a.epsilon < b.epsilon;
    });

    std::ofstream csv(out_stem + ".csv");
    csv << "method,epsilon,fid,is_proxy,precision,recall";
    for (const char* p : kProtocolColumns) csv << ",acc_" << p;
    csv << ",eps_spent,run_id\n";
    for (const auto& r : rows) {
        csv << r.method << "," << fmt(r.epsilon) << "," << fmt(r.fid) << ","
            << fmt(r.is_proxy) << "," << fmt(r.precision) << "," << fmt(r.recall);
        for (const char* p : kProtocolColumns) {
            csv << ",";
            if (r.utility.contains(p))
                csv << fmt(r.utility.at(p).at("test_accuracy").get<double>());
        }
        csv << "," << fmt(r.eps_spent) << "," << r.run_id << "\n";
    }
    csv.close();

    std::ofstream md(out_stem + ".md");
    md << "| method | epsilon | fid | is_proxy | precision | recall |";
    for (const char* p : kProtocolColumns) md << " acc_" << p << " |";
    md << " eps_spent |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : rows) {
        md << "| " << r.method << " | " << fmt(r.epsilon) << " | " << fmt(r.fid)
           << " | " << fmt(r.is_proxy) << " | " << fmt(r.precision) << " | "
           << fmt(r.recall) << " |";
        for (const char* p : kProtocolColumns) {
            md << " ";
            if (r.utility.contains(p))
                md << fmt(r.utility.at(p).at("test_accuracy").get<double>());
            else
                md << "-";
            md << " |";
        }
        md << " " << fmt(r.eps_spent) << " |\n";
    }
}

std::vector<ReportRow> parse_report_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read report: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty report CSV");

    std::vector<ReportRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 12) throw FormatError("report row has wrong arity");
        ReportRow row;
        row.method = fields[0];
        row.epsilon = parse_eps_field(fields[1]);
        row.fid = std::stod(fields[2]);
        row.is_proxy = std::stod(fields[3]);
        row.precision = std::stod(fields[4]);
        row.recall = std::stod(fields[5]);
        row.utility = json::object();
        for (std::size_t p = 0; p < 4; ++p)
            if (!fields[6 + p].empty())
                row.utility[kProtocolColumns[p]] = {
                    {"test_accuracy", std::stod(fields[6 + p])}};
        row.eps_spent = parse_eps_field(fields[10]);
        row.run_id = fields[11];
        rows.push_back(std::move(row));
    }
    return rows;
}

double accounted_epsilon(const AccountantLedger& ledger, double delta) {
    return compose_and_convert(ledger, delta);
}

} // namespace dpsynth
