#include "depcop/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "depcop/clustering.hpp"
#include "depcop/dependence.hpp"
#include "depcop/io.hpp"
#include "depcop/parallel.hpp"
#include "depcop/power.hpp"
#include "depcop/synth.hpp"

namespace depcop {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct VariablePair {
    std::size_t i;
    std::size_t j;
};

struct Artifacts {
    std::vector<std::pair<std::string, std::string>> files;
    json details = json::object();

    void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
};

const std::vector<std::string> kCommands = {"copula", "dist", "cluster", "tfdc", "query", "synth", "power", "target"};

bool needs_input(const std::string& c) {
    return c == "copula" || c == "dist" || c == "cluster" || c == "tfdc" || c == "query";
}

bool needs_seed(const std::string& c) { return c == "cluster" || c == "synth" || c == "power"; }

void invalid(const std::string& what) { fail(ErrorKind::InvalidParameter, what); }

std::vector<VariablePair> all_pairs(std::size_t n) {
    std::vector<VariablePair> out;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) out.push_back({i, j});
    }
    return out;
}

ObservationTable load_table(const RunConfig& cfg) {
    ObservationTable table = load_csv(cfg.input);
    table.validate();
    if (table.variable_count() < 2) fail(ErrorKind::InvalidData, "need at least 2 variables");
    return table;
}

std::vector<CopulaHistogram> pair_copulas(const ObservationTable& table, const std::vector<VariablePair>& pairs,
                                          std::size_t m) {
    std::vector<CopulaHistogram> out(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t p) {
        out[p] = copula_from_samples(table.columns[pairs[p].i], table.columns[pairs[p].j], m);
    });
    return out;
}

std::vector<CopulaHistogram> read_all(const std::vector<fs::path>& paths, std::size_t m, const char* role) {
    std::vector<CopulaHistogram> out;
    for (const auto& p : paths) {
        out.push_back(read_cop(p));
        if (out.back().m() != m) {
            fail(ErrorKind::InvalidData, std::string(role) + " " + p.string() + " has resolution " +
                                             std::to_string(out.back().m()) + ", expected " + std::to_string(m));
        }
    }
    return out;
}

double pair_distance(const CopulaHistogram& a, const CopulaHistogram& b, const GroundCost& cost,
                     const SinkhornConfig& sc, bool debias) {
    return debias ? sinkhorn_divergence(a, b, cost, sc) : sinkhorn_distance(a, b, cost, sc).value;
}

std::string cop_name(const VariablePair& p) {
    return "copula_" + std::to_string(p.i) + "_" + std::to_string(p.j) + ".cop";
}

void run_copula(const RunConfig& cfg, Artifacts& art) {
    const ObservationTable table = load_table(cfg);
    const auto pairs = all_pairs(table.variable_count());
    const auto hists = pair_copulas(table, pairs, cfg.m);
    std::string index = "pair_i,pair_j,file\n";
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        art.add(cop_name(pairs[p]), format_cop(hists[p]));
        index += table.names[pairs[p].i] + "," + table.names[pairs[p].j] + "," + cop_name(pairs[p]) + "\n";
    }
    art.add("pairs.csv", index);
}

void run_dist(const RunConfig& cfg, Artifacts& art) {
    const ObservationTable table = load_table(cfg);
    const auto pairs = all_pairs(table.variable_count());
    const auto hists = pair_copulas(table, pairs, cfg.m);
    const GroundCost cost(cfg.m);
    const SinkhornConfig sc = cfg.sinkhorn();
    const std::size_t n = hists.size();

    DistanceMatrix d(n);
    if (cfg.debias) {
        std::vector<VariablePair> upper = all_pairs(n);
        std::vector<double> values(upper.size());
        parallel_for(upper.size(), [&](std::size_t e) {
            values[e] = sinkhorn_divergence(hists[upper[e].i], hists[upper[e].j], cost, sc);
        });
        for (std::size_t e = 0; e < upper.size(); ++e) {
            d(upper[e].i, upper[e].j) = values[e];
            d(upper[e].j, upper[e].i) = values[e];
        }
    } else {
        d = pairwise_distance_matrix(hists, cost, sc);
    }

    std::string csv = "pair";
    for (const auto& p : pairs) csv += "," + table.names[p.i] + ":" + table.names[p.j];
    csv += "\n";
    for (std::size_t a = 0; a < n; ++a) {
        csv += table.names[pairs[a].i] + ":" + table.names[pairs[a].j];
        for (std::size_t b = 0; b < n; ++b) csv += "," + format_number(d(a, b));
        csv += "\n";
    }
    art.add("distance-matrix.csv", csv);
}

void run_cluster(const RunConfig& cfg, Artifacts& art) {
    const ObservationTable table = load_table(cfg);
    const auto pairs = all_pairs(table.variable_count());
    const auto hists = pair_copulas(table, pairs, cfg.m);
    ClusterOptions options;
    options.k = cfg.k;
    options.seed = *cfg.seed;
    options.debias = cfg.debias;
    const ClusterModel model = cluster_copulas(hists, GroundCost(cfg.m), cfg.sinkhorn(), options);

    std::string csv = "pair_i,pair_j,cluster,distance_to_centroid\n";
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        csv += table.names[pairs[p].i] + "," + table.names[pairs[p].j] + "," +
               std::to_string(model.assignment[p]) + "," + format_number(model.distances[p]) + "\n";
    }
    art.add("assignment.csv", csv);

    json clusters = json::array();
    for (const auto& s : centroid_report(model)) {
        const std::string stem = "centroid_" + std::to_string(s.cluster);
        art.add(stem + ".cop", format_cop(s.centroid));
        art.add(stem + ".pgm", format_heatmap(s.centroid));
        clusters.push_back({{"cluster", s.cluster},
                            {"size", s.size},
                            {"medoid", {table.names[pairs[s.medoid].i], table.names[pairs[s.medoid].j]}}});
    }
    art.details["clusters"] = clusters;
    art.details["objective_trace"] = model.objective_trace;
    art.details["rounds"] = model.rounds;
    art.details["converged"] = model.converged;
}

void run_tfdc(const RunConfig& cfg, Artifacts& art) {
    const ObservationTable table = load_table(cfg);
    TFDCSpec spec;
    spec.targets = read_all(cfg.targets, cfg.m, "target");
    spec.forgets = read_all(cfg.forgets, cfg.m, "forget");
    spec.cost = GroundCost(cfg.m);
    spec.cfg = cfg.sinkhorn();
    spec.debias = cfg.debias;
    spec.validate();

    // Entry (i, j) scores the copula of (x_i, x_j) with i <= j and is
    // mirrored below the diagonal.
    const std::size_t n = table.variable_count();
    std::vector<VariablePair> upper;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) upper.push_back({i, j});
    std::vector<double> values(n * n);
    parallel_for(upper.size(), [&](std::size_t e) {
        const auto [i, j] = upper[e];
        const double v = tfdc(copula_from_samples(table.columns[i], table.columns[j], cfg.m), spec);
        values[i * n + j] = v;
        values[j * n + i] = v;
    });

    std::string csv = "variable";
    for (const auto& name : table.names) csv += "," + name;
    csv += "\n";
    for (std::size_t i = 0; i < n; ++i) {
        csv += table.names[i];
        for (std::size_t j = 0; j < n; ++j) csv += "," + format_number(values[i * n + j]);
        csv += "\n";
    }
    art.add("tfdc-matrix.csv", csv);
}

void run_query(const RunConfig& cfg, Artifacts& art) {
    const ObservationTable table = load_table(cfg);
    const CopulaHistogram target = read_all(cfg.targets, cfg.m, "target").front();
    const auto pairs = all_pairs(table.variable_count());
    const auto hists = pair_copulas(table, pairs, cfg.m);
    const GroundCost cost(cfg.m);
    const SinkhornConfig sc = cfg.sinkhorn();

    std::vector<double> d(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t p) { d[p] = pair_distance(hists[p], target, cost, sc, cfg.debias); });
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t p = 0; p < order.size(); ++p) order[p] = p;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });

    std::string csv = "rank,pair_i,pair_j,distance\n";
    for (std::size_t r = 0; r < order.size(); ++r) {
        const auto& p = pairs[order[r]];
        csv += std::to_string(r + 1) + "," + table.names[p.i] + "," + table.names[p.j] + "," +
               format_number(d[order[r]]) + "\n";
    }
    art.add("query.csv", csv);
}

void run_synth(const RunConfig& cfg, Artifacts& art) {
    const std::uint64_t seed = *cfg.seed;
    SamplePair s;
    if (cfg.generator == "discontinuity") {
        s = gen_discontinuity(cfg.param, cfg.samples, seed);
    } else if (cfg.generator == "parabola") {
        s = gen_noisy_parabola(cfg.param, cfg.samples, seed);
    } else if (cfg.generator == "gaussian") {
        s = gen_gaussian_pair(cfg.param, cfg.samples, seed);
    } else {
        s = gen_power_pattern(parse_power_pattern(cfg.generator), cfg.param, cfg.samples, seed);
    }
    std::string csv = "x,y\n";
    for (std::size_t t = 0; t < s.x.size(); ++t) csv += format_number(s.x[t]) + "," + format_number(s.y[t]) + "\n";
    art.add("synth.csv", csv);
}

void run_power(const RunConfig& cfg, Artifacts& art) {
    std::vector<PowerPattern> patterns;
    for (const auto& name : cfg.patterns) patterns.push_back(parse_power_pattern(name));
    if (patterns.empty()) patterns.assign(kPowerPatterns.begin(), kPowerPatterns.end());

    std::vector<Coefficient> coefficients;
    for (const auto& name : cfg.coefficients) coefficients.push_back(parse_coefficient(name));
    if (coefficients.empty()) {
        coefficients = {Coefficient::Pearson, Coefficient::Spearman, Coefficient::DistanceCorrelation,
                        Coefficient::Rdc, Coefficient::Tfdc};
    }

    std::vector<double> noise = cfg.noise_levels;
    if (noise.empty()) {
        for (int i = 0; i <= 30; ++i) noise.push_back(i / 10.0);
    }

    PowerSettings settings;
    settings.n_sims = cfg.n_sims;
    settings.sample_size = cfg.sample_size;
    settings.seed = *cfg.seed;
    TFDCSpec spec;
    if (std::find(coefficients.begin(), coefficients.end(), Coefficient::Tfdc) != coefficients.end()) {
        spec = tfdc_power_targets(cfg.m, cfg.reference_samples, *cfg.seed);
        spec.cfg = cfg.sinkhorn();
        spec.debias = cfg.debias;
        settings.tfdc = &spec;
    }

    std::string csv = "pattern,noise,coefficient,power,n_sims,sample_size,seed\n";
    json rows = json::array();
    for (PowerPattern p : patterns) {
        for (double level : noise) {
            for (Coefficient c : coefficients) {
                const PowerResult r = estimate_power(p, level, c, settings);
                csv += std::string(to_string(p)) + "," + format_number(level) + "," + std::string(to_string(c)) +
                       "," + format_number(r.power) + "," + std::to_string(r.n_sims) + "," +
                       std::to_string(r.sample_size) + "," + std::to_string(r.seed) + "\n";
                rows.push_back({{"pattern", to_string(p)},
                                {"noise", level},
                                {"coefficient", to_string(c)},
                                {"threshold", r.threshold},
                                {"failures", r.failures}});
            }
        }
    }
    art.add("power.csv", csv);
    art.details["null_model"] = "independent draw with y randomly permuted";
    art.details["rejection_level"] = 0.05;
    art.details["threshold_rule"] = "order statistic ceil(0.95 n) of the null statistics";
    art.details["reference_samples"] = cfg.reference_samples;
    art.details["thresholds"] = rows;
}

void run_target(const RunConfig& cfg, Artifacts& art) {
    CopulaHistogram c;
    if (cfg.target == "M") {
        c = frechet_upper(cfg.m);
    } else if (cfg.target == "W") {
        c = frechet_lower(cfg.m);
    } else if (cfg.target == "Pi") {
        c = independence(cfg.m);
    } else if (cfg.target == "gaussian") {
        c = gaussian_copula(cfg.param, cfg.m);
    } else {
        invalid("unknown target '" + cfg.target + "' (M, W, Pi, gaussian)");
    }
    art.add("target.cop", format_cop(c));
    art.add("target.pgm", format_heatmap(c));
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json manifest(const RunConfig& cfg, const Artifacts& art) {
    const SinkhornConfig sc = cfg.sinkhorn();
    json paths_t = json::array(), paths_f = json::array(), files = json::array();
    for (const auto& p : cfg.targets) paths_t.push_back(p.string());
    for (const auto& p : cfg.forgets) paths_f.push_back(p.string());
    for (const auto& f : art.files) files.push_back(f.first);
    json j = {
        {"command", cfg.command},
        {"input", cfg.input.string()},
        {"m", cfg.m},
        {"lambda", sc.lambda},
        {"tol", sc.tol},
        {"max_iter", sc.max_iter},
        {"k", cfg.k},
        {"seed", cfg.seed ? json(*cfg.seed) : json(nullptr)},
        {"debias", cfg.debias},
        {"targets", paths_t},
        {"forgets", paths_f},
        {"out", cfg.out.string()},
        {"threads", thread_count()},
        {"files", files},
        {"created", utc_timestamp()},
    };
    if (cfg.command == "synth") {
        j["generator"] = cfg.generator;
        j["param"] = cfg.param;
        j["samples"] = cfg.samples;
    } else if (cfg.command == "power") {
        j["patterns"] = cfg.patterns;
        j["noise_levels"] = cfg.noise_levels;
        j["coefficients"] = cfg.coefficients;
        j["n_sims"] = cfg.n_sims;
        j["sample_size"] = cfg.sample_size;
    } else if (cfg.command == "target") {
        j["target"] = cfg.target;
        j["param"] = cfg.param;
    }
    if (!art.details.empty()) j["details"] = art.details;
    return j;
}

}  // namespace

SinkhornConfig RunConfig::sinkhorn() const {
    SinkhornConfig sc = SinkhornConfig::for_resolution(m);
    if (lambda) sc.lambda = *lambda;
    sc.tol = tol;
    sc.max_iter = max_iter;
    return sc;
}

void RunConfig::validate() const {
    if (std::find(kCommands.begin(), kCommands.end(), command) == kCommands.end()) {
        invalid("unknown command '" + command + "'");
    }
    if (m < 2) invalid("m must be at least 2");
    if (lambda && !(*lambda > 0.0 && std::isfinite(*lambda))) invalid("lambda must be positive and finite");
    if (!(tol > 0.0 && std::isfinite(tol))) invalid("tol must be positive and finite");
    if (max_iter == 0) invalid("max_iter must be at least 1");
    if (k == 0) invalid("k must be at least 1");
    if (needs_input(command) && input.empty()) invalid(command + " needs --input");
    if (needs_seed(command) && !seed) invalid(command + " needs --seed");
    if (command == "tfdc" && (targets.empty() || forgets.empty())) invalid("tfdc needs --targets and --forgets");
    if (command == "query" && targets.size() != 1) invalid("query needs exactly one --targets path");
    if (command == "synth" && samples < 2) invalid("synth needs at least 2 samples");
    if (command == "power") {
        if (n_sims < 10) invalid("power needs n_sims >= 10");
        if (sample_size < 4) invalid("power needs sample_size >= 4");
        if (reference_samples < m) invalid("reference sample smaller than m");
        for (double v : noise_levels) {
            if (!(v >= 0.0 && std::isfinite(v))) invalid("noise levels must be finite and >= 0");
        }
    }
}

void run_pipeline(const RunConfig& cfg) {
    cfg.validate();
    Artifacts art;
    if (cfg.command == "copula") run_copula(cfg, art);
    else if (cfg.command == "dist") run_dist(cfg, art);
    else if (cfg.command == "cluster") run_cluster(cfg, art);
    else if (cfg.command == "tfdc") run_tfdc(cfg, art);
    else if (cfg.command == "query") run_query(cfg, art);
    else if (cfg.command == "synth") run_synth(cfg, art);
    else if (cfg.command == "power") run_power(cfg, art);
    else run_target(cfg, art);

    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec) fail(ErrorKind::IoError, "cannot create " + cfg.out.string() + ": " + ec.message());
    for (const auto& [name, content] : art.files) write_file_atomic(cfg.out / name, content);
    write_file_atomic(cfg.out / "run-meta.json", manifest(cfg, art).dump(2) + "\n");
}

int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ConvergenceFailure:
        case ErrorKind::UnderflowDetected: return 3;
        case ErrorKind::IoError: return 4;
        default: return 2;
    }
}

}  // namespace depcop
