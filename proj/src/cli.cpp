#include "sqrteps/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sqrteps/core_test.hpp"
#include "sqrteps/districting.hpp"
#include "sqrteps/errors.hpp"
#include "sqrteps/experiments.hpp"
#include "sqrteps/flip_chain.hpp"
#include "sqrteps/geography.hpp"
#include "sqrteps/rng.hpp"

namespace sqrteps::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::pair<int, int> parse_grid(const std::string& text) {
    const auto x = text.find_first_of("xX");
    int w = 0, h = 0;
    try {
        if (x == std::string::npos) throw std::invalid_argument("");
        std::size_t used_w = 0, used_h = 0;
        w = std::stoi(text.substr(0, x), &used_w);
        h = std::stoi(text.substr(x + 1), &used_h);
        if (used_w != x || used_h != text.size() - x - 1) throw std::invalid_argument("");
    } catch (const std::exception&) {
        throw UsageError("--grid expects WxH, got '" + text + "'");
    }
    return {w, h};
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << content;
}

void print_report(std::ostream& out, const OutlierReport& r) {
    out << std::setprecision(6);
    out << "k        " << r.k << "\n";
    out << "count_le " << r.count_le << "\n";
    out << "epsilon  " << r.epsilon << "\n";
    out << "ell      " << r.ell << "\n";
    if (r.tv_slack) out << "tv_slack " << *r.tv_slack << "\n";
    out << "p        " << r.p_value << "\n";
}

// Options shared by run and generate.
struct GeographyOptions {
    std::string geography;
    std::string grid;
    std::uint64_t geo_seed = 7;
    double gradient = VoteModel{}.gradient;
    double noise = VoteModel{}.noise;

    void add(CLI::App& app) {
        app.add_option("--geography", geography, "Geography JSON file");
        app.add_option("--grid", grid, "Synthetic grid WxH instead of a geography file");
        app.add_option("--geo-seed", geo_seed, "Seed of the synthetic vote field")->capture_default_str();
        app.add_option("--gradient", gradient, "Left-to-right Democratic share gradient")->capture_default_str();
        app.add_option("--noise", noise, "Half-width of the uniform vote-share noise")->capture_default_str();
    }

    Geography load() const {
        if (geography.empty() == grid.empty()) throw UsageError("give exactly one of --geography or --grid");
        if (!geography.empty()) return load_geography(geography);
        const auto [w, h] = parse_grid(grid);
        VoteModel votes;
        votes.gradient = gradient;
        votes.noise = noise;
        return grid_geography(w, h, PopulationModel{}, votes, geo_seed);
    }

    json to_json() const {
        return {{"geography", geography}, {"grid", grid}, {"geo_seed", geo_seed}, {"gradient", gradient}, {"noise", noise}};
    }
};

struct ConstraintOptions {
    int districts = 4;
    double pop_tol = 0.10;
    std::string compactness = "perimeter";
    double threshold = 150.0;

    void add(CLI::App& app) {
        app.add_option("--districts", districts, "Number of districts")->capture_default_str();
        app.add_option("--pop-tol", pop_tol, "Max relative deviation from mean district population")
            ->capture_default_str();
        app.add_option("--compactness", compactness, "perimeter, l1, l2 or linf")->capture_default_str();
        app.add_option("--threshold", threshold, "Compactness threshold")->capture_default_str();
    }

    ValidityConstraints constraints() const {
        ValidityConstraints c{pop_tol, parse_compactness_mode(compactness), threshold};
        c.validate();
        return c;
    }

    json to_json() const {
        return {{"districts", districts}, {"pop_tol", pop_tol}, {"compactness", compactness}, {"threshold", threshold}};
    }
};

int cmd_test(const std::string& labels_path, std::optional<double> tv_slack, const std::string& out_dir,
             std::ostream& out) {
    std::ifstream in(labels_path);
    if (!in) throw UsageError("cannot open " + labels_path);
    std::vector<double> labels = read_labels(in);
    if (labels.empty()) throw UsageError(labels_path + ": no labels");
    const OutlierReport r = run_sqrt_eps_test(LabeledTrajectory(std::move(labels)), tv_slack);
    out << "# sqrteps test labels=" << labels_path << "\n";
    print_report(out, r);
    if (!out_dir.empty()) {
        json doc{{"format", 1},
                 {"command", "test"},
                 {"config", {{"labels", labels_path}, {"tv_slack", tv_slack ? json(*tv_slack) : json(nullptr)}}},
                 {"report", to_json(r)}};
        write_file(fs::path(out_dir) / "report.json", doc.dump(2) + "\n");
    }
    return kOk;
}

int cmd_generate(const GeographyOptions& geo_opts, const ConstraintOptions& con_opts, bool planted,
                 const std::string& out_dir, std::ostream& out) {
    if (out_dir.empty()) throw UsageError("generate needs --out");
    const Geography geo = geo_opts.load();
    write_file(fs::path(out_dir) / "geography.json", geography_to_json(geo).dump(1) + "\n");
    out << "wrote " << (fs::path(out_dir) / "geography.json").string() << " (" << geo.size() << " precincts, "
        << geo.edges().size() << " adjacencies)\n";
    if (planted) {
        const Districting d = planted_districting(geo, con_opts.districts, con_opts.constraints());
        write_file(fs::path(out_dir) / "districting.json", districting_to_json(geo, d).dump(1) + "\n");
        out << "wrote " << (fs::path(out_dir) / "districting.json").string() << "\n";
    }
    return kOk;
}

int cmd_run(const GeographyOptions& geo_opts, const ConstraintOptions& con_opts, const std::string& districting_path,
            std::int64_t steps, std::uint64_t seed, const std::string& label_name, std::optional<double> tv_slack,
            const std::string& out_dir, std::ostream& out) {
    if (steps < 0) throw UsageError("--steps must be nonnegative");
    const LabelFunction label = parse_label_function(label_name);
    const Geography geo = geo_opts.load();
    const ValidityConstraints constraints = con_opts.constraints();
    std::optional<Districting> start;
    if (!districting_path.empty()) {
        start = load_districting(geo, districting_path);
    } else if (geo.grid()) {
        start = planted_districting(geo, con_opts.districts, constraints);
    } else {
        throw UsageError("--districting is required for a geography without grid metadata");
    }
    FlipChain chain(geo, constraints, *start);
    Rng rng(seed);

    std::ostringstream csv;
    csv << std::setprecision(17) << "step,label\n";
    std::vector<double> labels;
    labels.reserve(static_cast<std::size_t>(steps) + 1);
    labels.push_back(evaluate_label(label, chain.state()));
    csv << 0 << ',' << labels.back() << '\n';
    for (std::int64_t i = 1; i <= steps; ++i) {
        labels.push_back(chain.step(rng) == StepOutcome::Accepted ? evaluate_label(label, chain.state()) : labels.back());
        csv << i << ',' << labels.back() << '\n';
    }
    const OutlierReport r = run_sqrt_eps_test(LabeledTrajectory(labels), tv_slack);

    json config = geo_opts.to_json();
    config.update(con_opts.to_json());
    config.update({{"districting", districting_path},
                   {"steps", steps},
                   {"seed", seed},
                   {"generator_id", std::string(Rng::generator_id)},
                   {"label", label_name},
                   {"tv_slack", tv_slack ? json(*tv_slack) : json(nullptr)}});
    if (out_dir.empty()) {
        out << csv.str();
    } else {
        write_file(fs::path(out_dir) / "labels.csv", csv.str());
        json doc{{"format", 1},
                 {"command", "run"},
                 {"config", config},
                 {"accepted_moves", chain.accepted()},
                 {"report", to_json(r)}};
        write_file(fs::path(out_dir) / "report.json", doc.dump(2) + "\n");
    }
    out << "# sqrteps run " << config.dump() << "\n";
    out << "accepted " << chain.accepted() << "\n";
    print_report(out, r);
    return kOk;
}

struct ExperimentOptions {
    std::string name;
    std::uint64_t seed = 1;
    std::vector<std::int64_t> k{2, 4, 16, 100, 200};
    std::int64_t trials = 200'000;
    int chains = 50;
    int k_max = 8;
    std::int64_t steps = 1'000'000;
    int seeds = 20;
    std::int64_t pre_run = 1 << 20;
    std::string out_dir;
};

int cmd_experiment(const ExperimentOptions& o, const ConstraintOptions& con_opts, const GeographyOptions& geo_opts,
                   std::ostream& out) {
    ExperimentReport report;
    if (o.name == "tightness") {
        report = tightness_experiment(o.k, o.trials, o.seed);
    } else if (o.name == "bound-verify") {
        report = bound_verification(o.chains, o.k_max, o.seed);
    } else if (o.name == "stationarity") {
        report = stationarity_experiment(o.steps, o.seed);
    } else if (o.name == "planted") {
        PlantedConfig cfg;
        if (!geo_opts.grid.empty()) std::tie(cfg.width, cfg.height) = parse_grid(geo_opts.grid);
        cfg.geography_seed = geo_opts.geo_seed;
        cfg.votes.gradient = geo_opts.gradient;
        cfg.votes.noise = geo_opts.noise;
        cfg.districts = con_opts.districts;
        cfg.constraints = con_opts.constraints();
        cfg.steps = o.steps;
        cfg.control_pre_run = o.pre_run;
        report = planted_gerrymander_run(cfg, o.seeds, o.seed);
    } else {
        throw UsageError("unknown experiment '" + o.name + "' (tightness, bound-verify, stationarity, planted)");
    }
    out << report.to_text();
    if (!o.out_dir.empty()) {
        write_file(fs::path(o.out_dir) / (o.name + ".json"), report.to_json().dump(2) + "\n");
        write_file(fs::path(o.out_dir) / (o.name + ".txt"), report.to_text());
    }
    return report.passed ? kOk : kTolerance;
}

}  // namespace

std::vector<double> read_labels(std::istream& in) {
    std::vector<double> labels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        const std::string tok = line.substr(first, last - first + 1);
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(tok, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != tok.size() || !std::isfinite(v))
            throw FormatError("line " + std::to_string(line_no) + ": cannot parse '" + tok + "' as a finite real");
        labels.push_back(v);
    }
    return labels;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"sqrt(epsilon) outlier test for reversible Markov chains", "sqrteps"};
    app.require_subcommand(1);

    auto* test = app.add_subcommand("test", "Run the test on a labels file (one real per line, presented state first)");
    std::string labels_path, out_dir;
    std::optional<double> tv_slack;
    test->add_option("labels", labels_path, "Labels file")->required();
    test->add_option("--tv-slack", tv_slack, "Total-variation slack epsilon_1 added to p");
    test->add_option("--out", out_dir, "Directory for report.json");

    GeographyOptions geo_opts;
    ConstraintOptions con_opts;

    auto* generate = app.add_subcommand("generate", "Write a synthetic grid geography (and its planted districting)");
    bool planted = false;
    geo_opts.add(*generate);
    con_opts.add(*generate);
    generate->add_flag("--planted", planted, "Also write the planted districting");
    generate->add_option("--out", out_dir, "Output directory")->required();

    auto* run_cmd = app.add_subcommand("run", "Run the flip chain and test its presented state");
    std::string districting_path, label_name = "var";
    std::int64_t steps = 1 << 16;
    std::uint64_t seed = 1;
    geo_opts.add(*run_cmd);
    con_opts.add(*run_cmd);
    run_cmd->add_option("--districting", districting_path, "Initial districting JSON (default: planted, grids only)");
    run_cmd->add_option("--steps", steps, "Chain steps k")->capture_default_str();
    run_cmd->add_option("--seed", seed, "Generator seed")->capture_default_str();
    run_cmd->add_option("--label", label_name, "Label function: var or mm")->capture_default_str();
    run_cmd->add_option("--tv-slack", tv_slack, "Total-variation slack epsilon_1 added to p");
    run_cmd->add_option("--out", out_dir, "Directory for labels.csv and report.json");

    auto* exp = app.add_subcommand("experiment", "Run a named experiment: tightness, bound-verify, stationarity, planted");
    ExperimentOptions eo;
    geo_opts.add(*exp);
    con_opts.add(*exp);
    exp->add_option("name", eo.name, "Experiment name")->required();
    exp->add_option("--seed", eo.seed, "Generator seed")->capture_default_str();
    exp->add_option("--k", eo.k, "tightness: even step counts")->capture_default_str();
    exp->add_option("--trials", eo.trials, "tightness: Monte Carlo trials per k")->capture_default_str();
    exp->add_option("--chains", eo.chains, "bound-verify: random chains")->capture_default_str();
    exp->add_option("--k-max", eo.k_max, "bound-verify: largest k")->capture_default_str();
    exp->add_option("--steps", eo.steps, "stationarity/planted: chain steps")->capture_default_str();
    exp->add_option("--seeds", eo.seeds, "planted: number of seeds")->capture_default_str();
    exp->add_option("--pre-run", eo.pre_run, "planted: control pre-run steps")->capture_default_str();
    exp->add_option("--out", eo.out_dir, "Directory for <name>.json and <name>.txt");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n" << "run 'sqrteps --help' for usage\n";
        return kUsage;
    }

    // planted experiment defaults differ from the run defaults only in steps
    if (exp->parsed() && eo.name == "planted" && exp->count("--steps") == 0) eo.steps = 1 << 18;

    try {
        if (test->parsed()) return cmd_test(labels_path, tv_slack, out_dir, out);
        if (generate->parsed()) return cmd_generate(geo_opts, con_opts, planted, out_dir, out);
        if (run_cmd->parsed())
            return cmd_run(geo_opts, con_opts, districting_path, steps, seed, label_name, tv_slack, out_dir, out);
        return cmd_experiment(eo, con_opts, geo_opts, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const InvalidDistricting& e) {
        err << "error: initial districting is invalid (" << to_string(e.result().reason) << "): " << e.what() << "\n";
        return kValidation;
    } catch (const GeographyError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const FormatError& e) {
        // labels files are user input to parse; geography/districting documents are domain data
        err << "error: " << e.what() << "\n";
        return test->parsed() ? kUsage : kValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace sqrteps::cli
