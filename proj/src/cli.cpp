#include "artss/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "artss/error.hpp"
#include "artss/experiments.hpp"
#include "artss/latent_store.hpp"
#include "artss/rejection.hpp"
#include "artss/run_report.hpp"
#include "artss/toy_ssr.hpp"

namespace artss::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw UsageError(path.string() + ": " + e.what());
    }
}

// Overlays `patch` onto `base`; keys must already exist in `base` so typos in
// config files fail loudly instead of being ignored.
void overlay(Json& base, const Json& patch, const std::string& where) {
    if (!patch.is_object()) throw UsageError(where + " must be a JSON object");
    for (const auto& [key, value] : patch.items()) {
        if (!base.contains(key)) throw UsageError("unknown config key '" + where + key + "'");
        if (base[key].is_object() && value.is_object()) {
            overlay(base[key], value, where + key + ".");
        } else {
            base[key] = value;
        }
    }
}

// Run inputs common to every subcommand.
struct Invocation {
    std::string subcommand;
    Json file = Json::object();   // config file contents
    Json flags = Json::object();  // explicitly given flags, same shape as the config
    fs::path out_dir;
    std::size_t jobs = 1;
};

// Flags > config file > defaults.
Json resolve(const Json& defaults, const Invocation& inv) {
    Json cfg = defaults;
    overlay(cfg, inv.file, "");
    overlay(cfg, inv.flags, "");
    return cfg;
}

bool touched(const Invocation& inv, const std::string& section, const std::string& key) {
    for (const Json* j : {&inv.file, &inv.flags}) {
        if (j->contains(section) && (*j)[section].contains(key)) return true;
    }
    return false;
}

Json load_config(const std::string& path, const std::string& subcommand) {
    Json j = read_json_file(path);
    // A manifest carries its resolved config; reuse it directly.
    if (j.is_object() && j.contains("subcommand") && j.contains("config")) {
        if (j["subcommand"] != subcommand) {
            throw UsageError(path + " is a manifest for '" + j["subcommand"].get<std::string>() + "'");
        }
        return j["config"];
    }
    return j;
}

class Manifest {
public:
    Manifest(const Invocation& inv, const Json& config, std::vector<std::string> outputs)
        : path_(inv.out_dir / "manifest.json"), start_(std::chrono::steady_clock::now()) {
        fs::create_directories(inv.out_dir);
        json_ = Json{{"artifact", "artss"},
                     {"version", kArtifactVersion},
                     {"subcommand", inv.subcommand},
                     {"status", "running"},
                     {"seed", config.contains("seed") ? config["seed"] : Json()},
                     {"jobs", inv.jobs},
                     {"config", config},
                     {"outputs", outputs},
                     {"wall_clock_seconds", nullptr}};
        write();
    }

    void complete() {
        json_["status"] = "completed";
        json_["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write();
    }

private:
    void write() const { write_text_file(path_, json_.dump(2) + "\n"); }

    fs::path path_;
    std::chrono::steady_clock::time_point start_;
    Json json_;
};

std::string fixed(double v, int digits) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(digits);
    s << v;
    return s.str();
}

// --- reject -----------------------------------------------------------------

Json reject_defaults() {
    return Json{{"labeled", ""}, {"unlabeled", ""}, {"m_nn", rejection::kDefaultNeighbors}, {"format", "csv"},
                {"epoch", 0}};
}

int cmd_reject(const Invocation& inv, std::ostream& out, std::ostream&) {
    Json cfg = resolve(reject_defaults(), inv);
    const auto labeled_path = cfg["labeled"].get<std::string>();
    const auto unlabeled_path = cfg["unlabeled"].get<std::string>();
    if (labeled_path.empty() || unlabeled_path.empty()) throw UsageError("reject needs --labeled and --unlabeled");
    // Absolute paths so the manifest replays from any working directory.
    cfg["labeled"] = fs::absolute(labeled_path).string();
    cfg["unlabeled"] = fs::absolute(unlabeled_path).string();
    const auto format = latent::parse_format(cfg["format"].get<std::string>());
    if (!format) throw UsageError("unknown format '" + cfg["format"].get<std::string>() + "'");
    const std::string ext = latent::to_string(*format);

    Manifest manifest(inv, cfg, {"decisions.csv", "accepted." + ext, "rejected." + ext, "threshold.json"});
    const auto labeled = latent::load_samples(labeled_path, *format, latent::Pool::Labeled);
    const auto unlabeled = latent::load_samples(unlabeled_path, *format, latent::Pool::Unlabeled);
    const auto result = rejection::filter_unlabeled(unlabeled, labeled, cfg["m_nn"].get<std::size_t>(),
                                                    cfg["epoch"].get<int>());

    std::ostringstream decisions;
    rejection::write_decisions_csv(decisions, result.decisions);
    write_text_file(inv.out_dir / "decisions.csv", decisions.str());
    latent::save_samples(inv.out_dir / ("accepted." + ext), result.accepted, *format);
    latent::save_samples(inv.out_dir / ("rejected." + ext), result.rejected, *format);
    write_text_file(inv.out_dir / "threshold.json", rejection::threshold_to_json(result.state).dump(2) + "\n");
    manifest.complete();
    out << "reject: accepted " << result.accepted.size() << " of " << unlabeled.size()
        << " (T=" << latent::format_double(result.state.threshold) << ") -> " << inv.out_dir.string() << "\n";
    return kExitOk;
}

// --- simulate ---------------------------------------------------------------

const std::vector<std::string> kExperiments{"lemma", "corollary1", "corollary2", "bias-variance"};

Json common_defaults(const lab::CommonConfig& c) {
    return Json{{"seed", c.seed},
                {"components", c.components},
                {"shift", c.shift},
                {"limit_factor", c.limit_factor},
                {"restarts", c.em.restarts},
                {"max_iterations", c.em.max_iterations}};
}

Json simulate_defaults(const std::string& experiment) {
    Json d;
    if (experiment == "lemma") {
        const lab::LemmaConfig c;
        d = common_defaults(c.common);
        d["trials"] = c.seeds;
        d["n_labeled"] = c.n_labeled;
        d["schedule"] = c.schedule;
        d["block"] = c.block == lab::Block::Marginal ? "marginal" : "full";
    } else if (experiment == "corollary1") {
        const lab::Corollary1Config c;
        d = common_defaults(c.common);
        d["trials"] = c.trials;
        d["n_labeled"] = c.n_labeled;
        d["n_unlabeled"] = c.n_unlabeled;
        d["n_eval"] = c.n_eval;
        d["n_mc"] = c.n_mc;
        d["control"] = c.control;
    } else if (experiment == "corollary2") {
        const lab::Corollary2Config c;
        d = common_defaults(c.common);
        d["trials"] = c.trials;
        d["n_labeled"] = c.n_labeled;
        d["n_unlabeled"] = c.n_unlabeled;
        d["source_fraction"] = c.source_fraction;
        d["m_nn"] = c.m_nn;
        d["selector"] = lab::to_string(c.selector);
    } else if (experiment == "bias-variance") {
        const lab::BiasVarianceConfig c;
        d = common_defaults(c.common);
        d["trials"] = c.trials;
        d["n_labeled"] = c.n_labeled;
        d["n_unlabeled"] = c.n_unlabeled;
    } else {
        throw UsageError("unknown experiment '" + experiment + "' (lemma, corollary1, corollary2, bias-variance)");
    }
    Json out{{"experiment", experiment}};
    out.update(d);
    return out;
}

lab::CommonConfig common_from(const Json& cfg, lab::CommonConfig c) {
    c.seed = cfg["seed"].get<std::uint64_t>();
    c.components = cfg["components"].get<std::size_t>();
    c.shift = cfg["shift"].get<double>();
    c.limit_factor = cfg["limit_factor"].get<std::size_t>();
    c.em.restarts = cfg["restarts"].get<std::size_t>();
    c.em.max_iterations = cfg["max_iterations"].get<std::size_t>();
    return c;
}

std::string simulate_summary(const std::string& experiment, const RunReport& r) {
    const Json& a = r.aggregates;
    if (experiment == "lemma") {
        return "final median distance " + latent::format_double(a["final_median_dist_unsup_limit"].get<double>()) +
               (a["strictly_decreasing"].get<bool>() ? ", strictly decreasing" : ", not strictly decreasing");
    }
    if (experiment == "corollary1") {
        const Json& m = a["misspecified"];
        return "degradation fraction " + fixed(m["degradation_fraction"].get<double>(), 3) + " [" +
               fixed(m["wilson_low"].get<double>(), 3) + ", " + fixed(m["wilson_high"].get<double>(), 3) + "]";
    }
    if (experiment == "corollary2") {
        return "median distance ratio filtered/all " + fixed(a["ratio_t1_to_all"].get<double>(), 3);
    }
    return "bias^2 semi " + fixed(a["semi_supervised"]["bias_sq"].get<double>(), 4) + " vs supervised " +
           fixed(a["supervised"]["bias_sq"].get<double>(), 4);
}

int cmd_simulate(const Invocation& inv, std::ostream& out, std::ostream&) {
    std::string experiment;
    for (const Json* j : {&inv.flags, &inv.file}) {
        if (j->contains("experiment")) {
            experiment = (*j)["experiment"].get<std::string>();
            break;
        }
    }
    if (experiment.empty()) throw UsageError("simulate needs --experiment");
    const Json cfg = resolve(simulate_defaults(experiment), inv);
    const auto trials = cfg["trials"].get<std::size_t>();
    if (trials == 0) throw UsageError("--trials must be >= 1");

    Manifest manifest(inv, cfg, {"report.json", "trials.csv"});
    RunReport report;
    if (experiment == "lemma") {
        lab::LemmaConfig c;
        c.common = common_from(cfg, c.common);
        c.seeds = trials;
        c.n_labeled = cfg["n_labeled"].get<std::size_t>();
        c.schedule = cfg["schedule"].get<std::vector<std::size_t>>();
        const auto block = cfg["block"].get<std::string>();
        if (block != "marginal" && block != "full") throw UsageError("block must be 'marginal' or 'full'");
        c.block = block == "marginal" ? lab::Block::Marginal : lab::Block::Full;
        report = lab::run_lemma_experiment(c, inv.jobs);
    } else if (experiment == "corollary1") {
        lab::Corollary1Config c;
        c.common = common_from(cfg, c.common);
        c.trials = trials;
        c.n_labeled = cfg["n_labeled"].get<std::size_t>();
        c.n_unlabeled = cfg["n_unlabeled"].get<std::size_t>();
        c.n_eval = cfg["n_eval"].get<std::size_t>();
        c.n_mc = cfg["n_mc"].get<std::size_t>();
        c.control = cfg["control"].get<bool>();
        report = lab::run_corollary1_experiment(c, inv.jobs);
    } else if (experiment == "corollary2") {
        lab::Corollary2Config c;
        c.common = common_from(cfg, c.common);
        c.trials = trials;
        c.n_labeled = cfg["n_labeled"].get<std::size_t>();
        c.n_unlabeled = cfg["n_unlabeled"].get<std::size_t>();
        c.source_fraction = cfg["source_fraction"].get<double>();
        c.m_nn = cfg["m_nn"].get<std::size_t>();
        const auto selector = cfg["selector"].get<std::string>();
        if (selector != "artss" && selector != "oracle") throw UsageError("selector must be 'artss' or 'oracle'");
        c.selector = selector == "artss" ? lab::Selector::ArtSS : lab::Selector::Oracle;
        report = lab::run_corollary2_experiment(c, inv.jobs);
    } else {
        lab::BiasVarianceConfig c;
        c.common = common_from(cfg, c.common);
        c.trials = trials;
        c.n_labeled = cfg["n_labeled"].get<std::size_t>();
        c.n_unlabeled = cfg["n_unlabeled"].get<std::size_t>();
        report = lab::run_bias_variance_experiment(c, inv.jobs);
    }
    report.save(inv.out_dir);
    manifest.complete();
    out << "simulate " << experiment << ": " << simulate_summary(experiment, report) << " -> "
        << inv.out_dir.string() << "\n";
    return kExitOk;
}

// --- toytrain ---------------------------------------------------------------

Json toytrain_defaults() {
    Json task = toy::to_json(toy::TaskConfig{});
    task.erase("seed");
    Json train = toy::to_json(toy::TrainConfig{});
    train.erase("arm");
    train.erase("seed");
    return Json{{"seed", 1}, {"arms", "all"}, {"seeds", 10}, {"task", task}, {"train", train}};
}

std::vector<toy::Arm> parse_arms(const std::string& spec) {
    if (spec == "all") return {std::begin(toy::kAllArms), std::end(toy::kAllArms)};
    std::vector<toy::Arm> arms;
    std::stringstream in(spec);
    std::string name;
    while (std::getline(in, name, ',')) {
        const auto arm = toy::parse_arm(name);
        if (!arm) throw UsageError("unknown arm '" + name + "' (nossd, nr, rs, psi, artss, all)");
        if (std::find(arms.begin(), arms.end(), *arm) != arms.end()) throw UsageError("arm '" + name + "' listed twice");
        arms.push_back(*arm);
    }
    if (arms.empty()) throw UsageError("--arm is empty");
    return arms;
}

int cmd_toytrain(const Invocation& inv, std::ostream& out, std::ostream& err) {
    const Json cfg = resolve(toytrain_defaults(), inv);
    const auto arms = parse_arms(cfg["arms"].get<std::string>());
    const auto master = cfg["seed"].get<std::uint64_t>();
    const auto n_seeds = cfg["seeds"].get<std::size_t>();
    if (n_seeds == 0) throw UsageError("--seeds must be >= 1");
    Json task_json = cfg["task"];
    task_json["seed"] = master;
    const auto task = toy::task_config_from_json(task_json);
    const auto train = toy::train_config_from_json(cfg["train"]);

    if (arms.size() == 1 && arms[0] == toy::Arm::NoSSD) {
        for (const auto& [section, key] : std::vector<std::pair<std::string, std::string>>{
                 {"task", "rho"}, {"task", "n_unlabeled"}, {"task", "shifted"}, {"train", "unlabeled_epochs"},
                 {"train", "rs_count"}, {"train", "unsup_weight"}, {"train", "interleave_labeled"}}) {
            if (touched(inv, section, key)) {
                err << "warning: arm nossd never uses unlabeled data; ignoring " << section << "." << key << "\n";
            }
        }
    }

    Manifest manifest(inv, cfg, {"report.json", "trials.csv", "metrics.csv", "decisions.csv"});
    const auto seeds = toy::replicate_seeds(master, n_seeds);
    const auto result = toy::run_arms(task, train, seeds, arms, inv.jobs);

    result.report.save(inv.out_dir);
    std::ostringstream metrics;
    result.metrics.write_csv(metrics);
    write_text_file(inv.out_dir / "metrics.csv", metrics.str());
    std::ostringstream decisions;
    for (std::size_t i = 0; i < result.decisions.size(); ++i) {
        toy::write_gate_decisions(decisions, arms[i / seeds.size()], seeds[i % seeds.size()], result.decisions[i],
                                  i == 0);
    }
    if (result.decisions.empty()) toy::write_gate_decisions(decisions, arms[0], 0, {}, true);
    write_text_file(inv.out_dir / "decisions.csv", decisions.str());
    manifest.complete();

    out << "toytrain:";
    const Json& per_arm = result.report.aggregates["arms"];
    for (const auto arm : arms) {
        out << " " << toy::to_string(arm) << " " << fixed(per_arm[toy::to_string(arm)]["median_psnr"].get<double>(), 2)
            << " dB";
    }
    out << " (median PSNR over " << n_seeds << " seed" << (n_seeds == 1 ? "" : "s") << ") -> "
        << inv.out_dir.string() << "\n";
    return kExitOk;
}

// --- report -----------------------------------------------------------------

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream in(line);
    std::string cell;
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

int cmd_report(const Invocation& inv, std::ostream& out, std::ostream&) {
    Json cfg = resolve(Json{{"runs", Json::array()}}, inv);
    auto runs = cfg["runs"].get<std::vector<std::string>>();
    if (runs.empty()) throw UsageError("report needs at least one run directory");
    for (auto& r : runs) r = fs::absolute(r).lexically_normal().string();
    cfg["runs"] = runs;

    struct Table {
        std::string run_id;
        std::vector<std::string> columns;
        std::vector<std::vector<std::string>> rows;
    };
    std::vector<Table> tables;
    std::map<std::string, int> seen;
    std::vector<std::string> columns;
    for (const auto& dir : runs) {
        fs::path p(dir);
        std::string id = p.filename().string();
        if (id.empty() || id == ".") id = p.parent_path().filename().string();
        if (id.empty()) id = "run";
        // Duplicate run ids get -2, -3, ... in input order.
        if (const int n = ++seen[id]; n > 1) id += "-" + std::to_string(n);

        std::ifstream in(p / "trials.csv");
        if (!in) fail(ErrorCode::Io, "cannot open " + (p / "trials.csv").string());
        Table t{id, {}, {}};
        std::string line;
        if (!std::getline(in, line)) fail(ErrorCode::MalformedRow, (p / "trials.csv").string() + ": missing header");
        t.columns = split_csv_line(line);
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto cells = split_csv_line(line);
            if (cells.size() != t.columns.size()) {
                fail(ErrorCode::MalformedRow, (p / "trials.csv").string() + ": " + line_detail(lineno, "wrong width"));
            }
            t.rows.push_back(std::move(cells));
        }
        for (const auto& c : t.columns) {
            if (std::find(columns.begin(), columns.end(), c) == columns.end()) columns.push_back(c);
        }
        tables.push_back(std::move(t));
    }

    Manifest manifest(inv, cfg, {"merged.csv"});
    std::ostringstream merged;
    merged << "run_id";
    for (const auto& c : columns) merged << ',' << c;
    merged << '\n';
    std::size_t rows = 0;
    for (const auto& t : tables) {
        std::vector<int> where(columns.size(), -1);
        for (std::size_t i = 0; i < columns.size(); ++i) {
            const auto it = std::find(t.columns.begin(), t.columns.end(), columns[i]);
            if (it != t.columns.end()) where[i] = static_cast<int>(it - t.columns.begin());
        }
        for (const auto& r : t.rows) {
            merged << t.run_id;
            for (int w : where) merged << ',' << (w >= 0 ? r[static_cast<std::size_t>(w)] : "");
            merged << '\n';
            ++rows;
        }
    }
    write_text_file(inv.out_dir / "merged.csv", merged.str());
    manifest.complete();
    out << "report: merged " << rows << " rows from " << tables.size() << " runs -> " << inv.out_dir.string() << "\n";
    return kExitOk;
}

int dispatch(const Invocation& inv, std::ostream& out, std::ostream& err) {
    if (inv.subcommand == "reject") return cmd_reject(inv, out, err);
    if (inv.subcommand == "simulate") return cmd_simulate(inv, out, err);
    if (inv.subcommand == "toytrain") return cmd_toytrain(inv, out, err);
    if (inv.subcommand == "report") return cmd_report(inv, out, err);
    throw UsageError("unknown subcommand '" + inv.subcommand + "'");
}

// Registers an option that, when given, writes its value at `path` in `sink`.
template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, Json& sink, std::vector<std::string> path,
                  const std::string& help) {
    return app->add_option_function<T>(
        name,
        [&sink, path](const T& v) {
            Json* node = &sink;
            for (std::size_t i = 0; i + 1 < path.size(); ++i) node = &(*node)[path[i]];
            (*node)[path.back()] = v;
        },
        help);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Latent-space filtering of unlabeled samples, mixture simulations and toy training"};
    app.require_subcommand(1);
    Invocation inv;
    std::string out_dir, config_path, manifest_path;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--out", out_dir, "Output directory")->required();
        sub->add_option("--config", config_path, "JSON config file or a previous run's manifest.json");
        sub->add_option("--jobs", inv.jobs, "Worker threads for independent trials")->check(CLI::PositiveNumber);
    };

    auto* reject = app.add_subcommand("reject", "Filter an unlabeled latent pool against a labeled one");
    common(reject);
    flag<std::string>(reject, "--labeled", inv.flags, {"labeled"}, "Labeled samples file");
    flag<std::string>(reject, "--unlabeled", inv.flags, {"unlabeled"}, "Unlabeled samples file");
    flag<std::size_t>(reject, "--m-nn", inv.flags, {"m_nn"}, "Nearest labeled neighbors per sample");
    flag<std::string>(reject, "--format", inv.flags, {"format"}, "csv or jsonl");
    flag<int>(reject, "--epoch", inv.flags, {"epoch"}, "Epoch stamped on decisions");

    auto* simulate = app.add_subcommand("simulate", "Run a mixture-of-regressions degradation experiment");
    common(simulate);
    flag<std::string>(simulate, "--experiment", inv.flags, {"experiment"},
                      "lemma, corollary1, corollary2 or bias-variance");
    flag<std::size_t>(simulate, "--trials", inv.flags, {"trials"}, "Trials (seeds for lemma)");
    flag<std::uint64_t>(simulate, "--seed", inv.flags, {"seed"}, "Master seed");
    flag<double>(simulate, "--shift", inv.flags, {"shift"}, "Target shift of the last component");
    flag<std::size_t>(simulate, "--components", inv.flags, {"components"}, "Model components K");
    flag<std::size_t>(simulate, "--n-labeled", inv.flags, {"n_labeled"}, "Labeled sample size");
    flag<std::size_t>(simulate, "--n-unlabeled", inv.flags, {"n_unlabeled"}, "Unlabeled sample size");
    flag<std::string>(simulate, "--selector", inv.flags, {"selector"}, "corollary2 filter: artss or oracle");

    auto* toytrain = app.add_subcommand("toytrain", "Train the toy restoration model under one or more gates");
    common(toytrain);
    flag<std::string>(toytrain, "--arm", inv.flags, {"arms"}, "nossd, nr, rs, psi, artss, a comma list, or all");
    flag<std::uint64_t>(toytrain, "--seed", inv.flags, {"seed"}, "Master seed (task and replicates)");
    flag<std::size_t>(toytrain, "--seeds", inv.flags, {"seeds"}, "Number of training replicates");
    flag<double>(toytrain, "--rho", inv.flags, {"task", "rho"}, "Shifted share of the unlabeled pool");
    flag<std::size_t>(toytrain, "--n-labeled", inv.flags, {"task", "n_labeled"}, "Labeled pairs");
    flag<std::size_t>(toytrain, "--n-unlabeled", inv.flags, {"task", "n_unlabeled"}, "Unlabeled pool size");
    flag<std::size_t>(toytrain, "--epochs", inv.flags, {"train", "unlabeled_epochs"}, "Unlabeled-phase epochs");
    flag<std::size_t>(toytrain, "--labeled-epochs", inv.flags, {"train", "labeled_epochs"}, "Labeled-phase epochs");
    flag<std::size_t>(toytrain, "--latent-dim", inv.flags, {"train", "latent_dim"}, "Encoder output size");
    flag<std::size_t>(toytrain, "--batch-size", inv.flags, {"train", "batch_size"}, "SGD batch size");
    flag<double>(toytrain, "--learning-rate", inv.flags, {"train", "learning_rate"}, "SGD step");
    flag<std::size_t>(toytrain, "--m-nn", inv.flags, {"train", "m_nn"}, "Nearest labeled neighbors");
    flag<std::size_t>(toytrain, "--rs-count", inv.flags, {"train", "rs_count"}, "RS subset size (0: half the pool)");
    flag<bool>(toytrain, "--interleave-labeled", inv.flags, {"train", "interleave_labeled"},
               "Add a labeled batch to each unlabeled-phase update");

    auto* report = app.add_subcommand("report", "Merge run directories into one comparison CSV");
    common(report);
    flag<std::vector<std::string>>(report, "runs", inv.flags, {"runs"}, "Run directories");

    auto* replay = app.add_subcommand("replay", "Re-run a previous run from its manifest.json");
    replay->add_option("manifest", manifest_path, "Manifest of the run to reproduce")->required();
    replay->add_option("--out", out_dir, "Output directory")->required();
    replay->add_option("--jobs", inv.jobs, "Worker threads")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream o, e2;
        const int code = app.exit(e, o, e2);
        out << o.str();
        err << e2.str();
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        inv.out_dir = out_dir;
        if (replay->parsed()) {
            const Json m = read_json_file(manifest_path);
            if (!m.is_object() || !m.contains("subcommand") || !m.contains("config")) {
                throw UsageError(manifest_path + " is not a run manifest");
            }
            inv.subcommand = m["subcommand"].get<std::string>();
            inv.file = m["config"];
        } else {
            inv.subcommand = app.get_subcommands().front()->get_name();
            if (!config_path.empty()) inv.file = load_config(config_path, inv.subcommand);
        }
        return dispatch(inv, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.is_numerical() ? kExitNumerical : kExitUsage;
    } catch (const Json::exception& e) {
        err << "error: bad config value: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
}

}  // namespace artss::cli
