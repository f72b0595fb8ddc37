// gpvtf command-line harness: synth, train, sweep, eval.

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gpvtf/checkpoint.hpp"
#include "gpvtf/report.hpp"
#include "gpvtf/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace gpvtf;

namespace {

enum ExitCode : int { kOk = 0, kFailure = 1, kValidation = 2, kIo = 3, kDivergence = 4 };

constexpr const char* kSynthFormat = "gpvtf-synth-manifest";
constexpr const char* kRunFormat = "gpvtf-run";

// ---------------------------------------------------------------- json helpers

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("failed writing '" + path + "'");
}

/// Config key/values as typed JSON: numbers and booleans stay native.
json config_json(const TrainConfig& c) {
    json j = json::object();
    for (const auto& [k, v] : to_key_values(c)) {
        try {
            j[k] = json::parse(v);
        } catch (const json::exception&) {
            j[k] = v;
        }
    }
    return j;
}

std::string json_scalar_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

/// A config file is either flat `key = value` text or a JSON object; a JSON
/// document with a "config" member (such as metrics.json) uses that member.
void apply_config_file(TrainConfig& c, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw ParseError("config '" + path + "' is not valid JSON: " + e.what());
        }
        const json& body = j.contains("config") ? j["config"] : j;
        for (const auto& [k, v] : body.items()) apply_key_value(c, k, json_scalar_text(v));
        return;
    }
    std::istringstream lines(text);
    apply_config_text(c, lines);
}

// ---------------------------------------------------------------- datasets

json synth_json(const SynthParams& p) {
    return {{"k", p.k},
            {"per_cluster", p.per_cluster},
            {"d1", p.d1},
            {"d2", p.d2},
            {"separation", p.separation},
            {"modality_noise", p.modality_noise},
            {"latent_dim", p.latent_dim},
            {"view_rank", p.view_rank},
            {"seed", p.seed}};
}

SynthParams synth_from_json(const json& j) {
    SynthParams p;
    try {
        p.k = j.at("k").get<int>();
        p.per_cluster = j.at("per_cluster").get<int>();
        p.d1 = j.at("d1").get<int>();
        p.d2 = j.at("d2").get<int>();
        p.separation = j.at("separation").get<double>();
        p.modality_noise = j.at("modality_noise").get<double>();
        p.latent_dim = j.value("latent_dim", p.latent_dim);
        p.view_rank = j.value("view_rank", p.view_rank);
        p.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ParseError(std::string("bad synthetic parameters: ") + e.what());
    }
    return p;
}

struct SynthFlags {
    SynthParams p;

    void add(CLI::App& app) {
        app.add_option("--k", p.k, "number of clusters")->capture_default_str();
        app.add_option("--per-cluster", p.per_cluster, "samples per cluster")->capture_default_str();
        app.add_option("--d1", p.d1, "visual feature dimension")->capture_default_str();
        app.add_option("--d2", p.d2, "tactile feature dimension")->capture_default_str();
        app.add_option("--separation", p.separation, "cluster mean scale")->capture_default_str();
        app.add_option("--modality-noise", p.modality_noise, "per-feature noise std")
            ->capture_default_str();
        app.add_option("--latent-dim", p.latent_dim, "shared latent code dimension")
            ->capture_default_str();
        app.add_option("--view-rank", p.view_rank, "rank of each modality map (0 = full)")
            ->capture_default_str();
    }
};

/// Where a run's data comes from: generated in process, a synth manifest, or
/// three CSV files.
struct DataSource {
    std::optional<SynthParams> synth;  // regenerate in process
    std::string visual, tactile, labels;
    std::optional<int> k;

    PairedDataset load() const {
        if (synth) return synth_dataset(*synth);
        return load_dataset(visual, tactile, labels, k);
    }

    json to_json() const {
        if (synth) return {{"kind", "synthetic"}, {"params", synth_json(*synth)}};
        json j = {{"kind", "files"},
                  {"visual", fs::absolute(visual).lexically_normal().string()},
                  {"tactile", fs::absolute(tactile).lexically_normal().string()},
                  {"labels", fs::absolute(labels).lexically_normal().string()}};
        if (k) j["k"] = *k;
        return j;
    }

    static DataSource from_json(const json& j) {
        DataSource d;
        const std::string kind = j.value("kind", "");
        if (kind == "synthetic") {
            d.synth = synth_from_json(j.at("params"));
        } else if (kind == "files") {
            d.visual = j.at("visual").get<std::string>();
            d.tactile = j.at("tactile").get<std::string>();
            d.labels = j.at("labels").get<std::string>();
            if (j.contains("k")) d.k = j["k"].get<int>();
        } else {
            throw ParseError("unknown dataset kind '" + kind + "'");
        }
        return d;
    }

    /// A synth manifest points at the CSV files it wrote, relative to itself.
    static DataSource from_manifest(const std::string& path) {
        const json m = read_json(path);
        if (m.value("format", "") != kSynthFormat) {
            throw ParseError("'" + path + "' is not a synth manifest");
        }
        const fs::path dir = fs::path(path).parent_path();
        DataSource d;
        d.visual = (dir / m.at("files").at("visual").get<std::string>()).string();
        d.tactile = (dir / m.at("files").at("tactile").get<std::string>()).string();
        d.labels = (dir / m.at("files").at("labels").get<std::string>()).string();
        d.k = m.at("params").at("k").get<int>();
        return d;
    }
};

struct DataFlags {
    std::string manifest, visual, tactile, labels;
    std::optional<int> k;
    bool synthesize = false;
    SynthFlags synth;

    void add(CLI::App& app) {
        app.add_option("--manifest", manifest, "synth manifest JSON to read the dataset from");
        app.add_option("--visual", visual, "visual feature CSV");
        app.add_option("--tactile", tactile, "tactile feature CSV");
        app.add_option("--labels", labels, "ground-truth labels CSV");
        app.add_option("--clusters", k, "cluster count for CSV input (default max label + 1)");
        app.add_flag("--synthetic", synthesize, "generate the dataset in process");
        synth.add(app);
    }

    /// For sweeps, an in-process synthetic dataset takes its seed per run.
    DataSource resolve(std::uint64_t seed) const {
        const bool files = !visual.empty() || !tactile.empty() || !labels.empty();
        const int sources = int(!manifest.empty()) + int(files) + int(synthesize);
        if (sources != 1) {
            throw ParameterError(
                "choose exactly one dataset source: --manifest, --visual/--tactile/--labels, or "
                "--synthetic");
        }
        if (!manifest.empty()) return DataSource::from_manifest(manifest);
        if (files) {
            if (visual.empty() || tactile.empty() || labels.empty()) {
                throw ParameterError("--visual, --tactile and --labels must be given together");
            }
            return {std::nullopt, visual, tactile, labels, k};
        }
        SynthParams p = synth.p;
        p.seed = seed;
        return {p, {}, {}, {}, std::nullopt};
    }
};

// ---------------------------------------------------------------- config flags

struct ConfigFlags {
    struct Value {
        std::string key;
        std::string text;
        CLI::Option* opt = nullptr;
    };
    std::vector<Value> values;
    struct Flag {
        std::string key;
        bool set = false;
        CLI::Option* opt = nullptr;
    };
    std::vector<Flag> flags;

    void add(CLI::App& app) {
        static const char* value_keys[] = {
            "max_iter", "batch_size", "lr_encoders", "lr_g1", "lr_g2", "lr_d", "g_updates_per_d",
            "alpha", "beta", "lambda", "phi1", "phi2", "gamma", "sigma", "encoder_hidden",
            "latent_dim", "generator_hidden", "discriminator_hidden", "minibatch_kernels",
            "minibatch_kernel_dim", "noise_dim", "kmeans_iter", "kmeans_restarts", "tol",
            "center_update"};
        static const char* flag_keys[] = {"disable_gan", "disable_fusion_kl", "non_saturating",
                                          "same_modality_condition"};
        values.reserve(std::size(value_keys));
        flags.reserve(std::size(flag_keys));
        const TrainConfig defaults;
        const auto kv = to_key_values(defaults);
        for (const char* key : value_keys) {
            values.push_back({key, {}, nullptr});
            std::string name = std::string("--") + key;
            std::replace(name.begin(), name.end(), '_', '-');
            // latent_dim collides with the synthetic generator's flag
            if (std::string(key) == "latent_dim") name = "--embedding-dim";
            values.back().opt = app.add_option(name, values.back().text,
                                               std::string("config ") + key + " (default " +
                                                   kv.at(key) + ")");
        }
        for (const char* key : flag_keys) {
            flags.push_back({key, false, nullptr});
            std::string name = std::string("--") + key;
            std::replace(name.begin(), name.end(), '_', '-');
            flags.back().opt = app.add_flag(name, flags.back().set, std::string("config ") + key);
        }
    }

    void apply(TrainConfig& c) const {
        for (const auto& v : values)
            if (v.opt->count() > 0) apply_key_value(c, v.key, v.text);
        for (const auto& f : flags)
            if (f.opt->count() > 0) apply_key_value(c, f.key, f.set ? "true" : "false");
    }
};

struct Globals {
    std::uint64_t seed = 0;
    std::string config_path;
    std::string out = ".";
    CLI::Option* seed_opt = nullptr;
};

/// defaults < config file < flags; --seed is a flag like any other.
TrainConfig resolve_config(const Globals& g, const ConfigFlags& flags) {
    TrainConfig c;
    if (!g.config_path.empty()) apply_config_file(c, g.config_path);
    flags.apply(c);
    if (g.seed_opt->count() > 0) c.seed = g.seed;
    c.validate();
    return c;
}

fs::path ensure_out(const Globals& g) {
    const fs::path dir(g.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + g.out + "': " + ec.message());
    return dir;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const Globals& g, const SynthFlags& flags, const std::string& replay) {
    SynthParams p = flags.p;
    if (!replay.empty()) {
        const json m = read_json(replay);
        if (m.value("format", "") != kSynthFormat) {
            throw ParseError("'" + replay + "' is not a synth manifest");
        }
        p = synth_from_json(m.at("params"));
    } else {
        p.seed = g.seed;
    }
    const PairedDataset ds = synth_dataset(p);
    const fs::path dir = ensure_out(g);
    save_dataset(ds, (dir / "visual.csv").string(), (dir / "tactile.csv").string(),
                 (dir / "labels.csv").string());
    write_json((dir / "manifest.json").string(),
               {{"format", kSynthFormat},
                {"version", 1},
                {"params", synth_json(p)},
                {"n", ds.size()},
                {"files", {{"visual", "visual.csv"}, {"tactile", "tactile.csv"}, {"labels", "labels.csv"}}}});
    std::cerr << "wrote " << ds.size() << " samples to " << dir.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    double mr = 0.0;
    std::optional<std::uint64_t> mask_seed;
    std::string mask_path;
    std::size_t checkpoint_every = 0;
    std::string resume;
    std::string replay;
};

void write_losses_csv(const std::string& path, const std::vector<EpochLosses>& trace,
                      std::size_t first_epoch) {
    auto out = detail::open_out(path);
    out << "epoch,L_E1,L_E2,L_G1,L_G2,L_D1,L_D2,label_change\n";
    for (std::size_t e = 0; e < trace.size(); ++e) {
        const auto& l = trace[e];
        out << first_epoch + e + 1;
        for (double v : {l.e1, l.e2, l.g1, l.g2, l.d1, l.d2, l.label_change})
            out << ',' << detail::format_double(v);
        out << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

json counters_json(const StepCounters& c) {
    return {{"encoder_updates", c.encoder_updates},
            {"generator_updates", {c.generator_updates[0], c.generator_updates[1]}},
            {"discriminator_updates", {c.discriminator_updates[0], c.discriminator_updates[1]}},
            {"batches", c.batches},
            {"largest_batch", c.largest_batch}};
}

int cmd_train(const Globals& g, const DataFlags& data_flags, const ConfigFlags& cfg_flags,
              TrainOptions opt) {
    TrainConfig config;
    DataSource source;
    if (!opt.replay.empty()) {
        const json run = read_json(opt.replay);
        if (run.value("format", "") != kRunFormat) {
            throw ParseError("'" + opt.replay + "' is not a run metrics file");
        }
        for (const auto& [k, v] : run.at("config").items())
            apply_key_value(config, k, json_scalar_text(v));
        config.validate();
        source = DataSource::from_json(run.at("dataset"));
        opt.mr = run.at("mr").get<double>();
        opt.mask_seed = run.at("mask_seed").get<std::uint64_t>();
    } else {
        config = resolve_config(g, cfg_flags);
        source = data_flags.resolve(config.seed);
    }
    const PairedDataset ds = source.load();
    const std::uint64_t mask_seed = opt.mask_seed.value_or(config.seed);
    MissingMask mask = opt.mask_path.empty() ? make_mask(ds.size(), opt.mr, mask_seed)
                                             : load_mask(opt.mask_path, opt.mr);
    if (mask.size() != ds.size()) {
        throw AlignmentError("mask has " + std::to_string(mask.size()) + " rows, dataset " +
                             std::to_string(ds.size()));
    }
    const fs::path dir = ensure_out(g);
    save_mask((dir / "mask.csv").string(), mask);

    Trainer trainer(ds, mask, config);
    if (!opt.resume.empty()) trainer.load(load_archive(opt.resume));
    const std::size_t first_epoch = trainer.epoch();
    EpochHook hook;
    if (opt.checkpoint_every > 0) {
        fs::create_directories(dir / "checkpoints");
        hook = [&](const Trainer& t, const EpochLosses&) {
            if (t.epoch() % opt.checkpoint_every != 0) return;
            char name[32];
            std::snprintf(name, sizeof name, "epoch_%04zu.ckpt", t.epoch());
            save_archive((dir / "checkpoints" / name).string(), t.to_archive());
        };
    }
    const TrainReport report = run(trainer, ds.labels, hook);

    write_labels_csv((dir / "predictions.csv").string(), report.labels);
    write_losses_csv((dir / "losses.csv").string(), report.trace, first_epoch);
    json metrics = {{"format", kRunFormat},
                    {"version", 1},
                    {"acc", *report.acc},
                    {"nmi", *report.nmi},
                    {"seed", config.seed},
                    {"mr", opt.mr},
                    {"mask_seed", mask_seed},
                    {"masked_slots", mask.masked_slots()},
                    {"n", ds.size()},
                    {"k", ds.k},
                    {"epochs_run", report.epochs_run},
                    {"converged", report.converged},
                    {"counters", counters_json(report.counters)},
                    {"config", config_json(config)},
                    {"dataset", source.to_json()}};
    if (!opt.resume.empty()) metrics["resumed_from_epoch"] = first_epoch;
    write_json((dir / "metrics.json").string(), metrics);
    double total = 0.0;
    for (double s : report.epoch_seconds) total += s;
    write_json((dir / "timing.json").string(),
               {{"epoch_seconds", report.epoch_seconds}, {"total_seconds", total}});
    std::cout << "acc " << detail::format_double(*report.acc) << " nmi "
              << detail::format_double(*report.nmi) << " epochs " << report.epochs_run << '\n';
    return kOk;
}

// ---------------------------------------------------------------- sweep

struct SweepOptions {
    std::vector<double> rates{0.1, 0.2, 0.3, 0.4, 0.5};
    std::size_t seeds = 10;
    std::vector<std::string> ablate;
    std::size_t jobs = 1;
};

struct Condition {
    std::string name;
    bool disable_gan = false;
    bool disable_fusion_kl = false;
};

int cmd_sweep(const Globals& g, const DataFlags& data_flags, const ConfigFlags& cfg_flags,
              const SweepOptions& opt) {
    const TrainConfig base = resolve_config(g, cfg_flags);
    if (opt.seeds < 1) throw ParameterError("--seeds must be >= 1");
    if (opt.rates.empty()) throw ParameterError("--mr needs at least one missing rate");
    for (double r : opt.rates)
        if (!(r >= 0.0 && r <= 0.5)) throw ParameterError("missing rates must lie in [0, 0.5]");

    std::vector<Condition> conditions{{"full", base.disable_gan, base.disable_fusion_kl}};
    for (const auto& a : opt.ablate) {
        if (a == "gan") conditions.push_back({"no-gan", true, base.disable_fusion_kl});
        else if (a == "fusion-kl") conditions.push_back({"no-fusion-kl", base.disable_gan, true});
        else throw ParameterError("unknown ablation '" + a + "' (expected gan or fusion-kl)");
    }

    struct Job {
        RunRecord record;
        TrainConfig config;
    };
    std::vector<Job> jobs;
    for (double mr : opt.rates)
        for (std::size_t s = 0; s < opt.seeds; ++s)
            for (const auto& c : conditions) {
                Job j;
                j.config = base;
                j.config.seed = base.seed + s;
                j.config.disable_gan = c.disable_gan;
                j.config.disable_fusion_kl = c.disable_fusion_kl;
                j.record.run_id = jobs.size();
                j.record.mr = mr;
                j.record.seed = j.config.seed;
                j.record.condition = c.name;
                jobs.push_back(std::move(j));
            }

    const fs::path dir = ensure_out(g);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            Job& j = jobs[i];
            const auto start = std::chrono::steady_clock::now();
            try {
                const PairedDataset ds = data_flags.resolve(j.config.seed).load();
                const MissingMask mask = make_mask(ds.size(), j.record.mr, j.config.seed);
                const TrainReport r = run(ds, mask, j.config);
                j.record.acc = *r.acc;
                j.record.nmi = *r.nmi;
                j.record.epochs_run = r.epochs_run;
            } catch (const DivergenceError& e) {
                j.record.status = "diverged";
            } catch (const std::exception& e) {
                j.record.status = "error";
            }
            j.record.wall_clock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::lock_guard lock(log_mutex);
            std::cerr << "[" << i + 1 << "/" << jobs.size() << "] mr "
                      << detail::format_double(j.record.mr) << " seed " << j.record.seed << ' '
                      << j.record.condition << " acc "
                      << (j.record.ok() ? detail::fixed(j.record.acc, 4) : j.record.status)
                      << '\n';
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < std::max<std::size_t>(1, opt.jobs); ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::vector<RunRecord> records;
    for (const auto& j : jobs) records.push_back(j.record);
    const auto summary = summarize(records);
    write_results_csv((dir / "results.csv").string(), records);
    write_summary_csv((dir / "summary.csv").string(), summary);
    for (bool use_nmi : {false, true}) {
        const std::string metric = use_nmi ? "NMI" : "ACC";
        auto out = detail::open_out((dir / (use_nmi ? "nmi_vs_mr.svg" : "acc_vs_mr.svg")).string());
        out << svg_line_chart("Mean " + metric + " vs missing rate", "missing rate",
                              metric + " (mean, ±1 std)", metric_series(summary, use_nmi));
    }
    json conds = json::array();
    for (const auto& c : conditions) conds.push_back(c.name);
    write_json((dir / "sweep.json").string(),
               {{"format", "gpvtf-sweep"},
                {"version", 1},
                {"rates", opt.rates},
                {"seeds", opt.seeds},
                {"base_seed", base.seed},
                {"conditions", conds},
                {"config", config_json(base)},
                {"dataset", data_flags.resolve(base.seed).to_json()}});

    for (const auto& s : summary) {
        std::cout << s.condition << " mr " << detail::fixed(s.mr, 2) << " acc "
                  << detail::fixed(s.acc_mean, 4) << " ± " << detail::fixed(s.acc_std, 4)
                  << " nmi " << detail::fixed(s.nmi_mean, 4) << " ± "
                  << detail::fixed(s.nmi_std, 4) << " (" << s.runs << " runs)\n";
    }
    return kOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const Globals& g, const std::string& pred_path, const std::string& labels_path,
             bool write_file) {
    const auto pred = read_labels_csv(pred_path);
    const auto truth = read_labels_csv(labels_path);
    if (pred.empty() || truth.empty()) throw ParameterError("eval requires non-empty label files");
    const json j = {{"acc", accuracy(truth, pred)}, {"nmi", nmi(truth, pred)}, {"n", truth.size()}};
    if (write_file) write_json((ensure_out(g) / "eval.json").string(), j);
    std::cout << j.dump(2) << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial visual-tactile clustering with cross-modal GAN completion"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "random seed (config seed, synth seed)");
    app.add_option("--config", g.config_path, "config file: key = value lines or JSON");
    auto* out_opt = app.add_option("--out", g.out, "output directory")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "generate a paired synthetic dataset");
    SynthFlags synth_flags;
    synth_flags.add(*synth);
    std::string synth_replay;
    synth->add_option("--manifest", synth_replay, "regenerate the dataset a manifest describes");

    auto* train = app.add_subcommand("train", "train on one dataset and masking");
    DataFlags train_data;
    train_data.add(*train);
    ConfigFlags train_cfg;
    train_cfg.add(*train);
    TrainOptions train_opt;
    train->add_option("--mr", train_opt.mr, "missing rate in [0, 0.5]")->capture_default_str();
    train->add_option("--mask-seed", train_opt.mask_seed, "mask seed (default: --seed)");
    train->add_option("--mask", train_opt.mask_path, "mask CSV to use instead of --mr");
    train->add_option("--checkpoint-every", train_opt.checkpoint_every,
                      "write a checkpoint every N epochs (0 = never)");
    train->add_option("--resume", train_opt.resume, "checkpoint to resume from");
    train->add_option("--replay", train_opt.replay, "rerun exactly the run a metrics.json records");

    auto* sweep = app.add_subcommand("sweep", "missing-rate × seed × ablation grid");
    DataFlags sweep_data;
    sweep_data.add(*sweep);
    ConfigFlags sweep_cfg;
    sweep_cfg.add(*sweep);
    SweepOptions sweep_opt;
    sweep->add_option("--mr", sweep_opt.rates, "missing rates")->delimiter(',')->capture_default_str();
    sweep->add_option("--seeds", sweep_opt.seeds, "seeds per rate, counting up from --seed")
        ->capture_default_str();
    sweep->add_option("--ablate", sweep_opt.ablate, "extra conditions: gan, fusion-kl")
        ->delimiter(',');
    sweep->add_option("--jobs", sweep_opt.jobs, "parallel runs")->capture_default_str();

    auto* eval = app.add_subcommand("eval", "ACC and NMI of predictions against labels");
    std::string eval_pred, eval_labels;
    eval->add_option("--pred", eval_pred, "predicted labels CSV")->required();
    eval->add_option("--labels", eval_labels, "ground-truth labels CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    try {
        if (*synth) return cmd_synth(g, synth_flags, synth_replay);
        if (*train) return cmd_train(g, train_data, train_cfg, train_opt);
        if (*sweep) return cmd_sweep(g, sweep_data, sweep_cfg, sweep_opt);
        if (*eval) return cmd_eval(g, eval_pred, eval_labels, out_opt->count() > 0);
    } catch (const DivergenceError& e) {
        std::cerr << "error: training diverged: " << e.what() << " (loss " << e.loss_name
                  << ", epoch " << e.epoch << ")\n";
        return kDivergence;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const std::invalid_argument& e) {  // ParameterError, DimensionError
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const AlignmentError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const LabelError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailure;
    }
    return kFailure;
}
