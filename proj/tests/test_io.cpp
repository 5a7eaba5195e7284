#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"
#include "json.hpp"

#include "depcop/copula.hpp"
#include "depcop/error.hpp"
#include "depcop/io.hpp"
#include "depcop/pipeline.hpp"
#include "depcop/random.hpp"
#include "depcop/synth.hpp"

using namespace depcop;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("depcop_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

void write_table(const fs::path& p, const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
    std::ofstream out(p);
    for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
    out << "\n";
    out.precision(17);
    for (std::size_t t = 0; t < cols[0].size(); ++t) {
        for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i][t];
        out << "\n";
    }
}

int run_cli(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + "\"" DEPCOP_CLI "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<double> uniform_column(std::size_t T, std::uint64_t seed) {
    Rng rng = make_rng(seed, 21);
    std::vector<double> v(T);
    for (double& x : v) x = uniform01(rng);
    return v;
}

std::vector<double> negated(std::vector<double> v) {
    for (double& x : v) x = -x;
    return v;
}

}  // namespace

TEST_CASE("csv parsing") {
    std::istringstream ok("\xEF\xBB\xBF\"a\", b\r\n1,2\n\n3.5, -4e2\n");
    const auto t = parse_csv(ok, "ok.csv");
    REQUIRE(t.names == std::vector<std::string>{"a", "b"});
    CHECK(t.columns[0] == std::vector<double>{1.0, 3.5});
    CHECK(t.columns[1] == std::vector<double>{2.0, -400.0});

    auto message = [](const char* text) {
        std::istringstream in(text);
        try {
            parse_csv(in, "bad.csv");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ParseError);
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("a,b\n1,2\n3\n").find("bad.csv:3") != std::string::npos);
    CHECK(message("a,b\n1,2\n3,x\n").find("bad.csv:3") != std::string::npos);
    CHECK(message("a,b\n1,2\n3,inf\n").find("bad.csv:3") != std::string::npos);
    CHECK(message("a,b\n1,2\n").find("at least 2") != std::string::npos);
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), Error);
}

TEST_CASE("heatmaps") {
    const std::size_t m = 5;
    auto pixels = [](const std::string& pgm) {
        std::istringstream in(pgm);
        std::string magic;
        std::size_t w = 0, h = 0, maxval = 0;
        in >> magic >> w >> h >> maxval;
        CHECK(magic == "P2");
        CHECK(maxval == 255);
        std::vector<int> px(w * h);
        for (int& v : px) in >> v;
        return px;
    };
    const auto pi = pixels(format_heatmap(independence(m)));
    REQUIRE(pi.size() == m * m);
    for (int v : pi) CHECK(v == pi[0]);

    const auto up = pixels(format_heatmap(frechet_upper(m)));
    for (std::size_t row = 0; row < m; ++row)
        for (std::size_t col = 0; col < m; ++col) CHECK(up[row * m + col] == (col == m - 1 - row ? 0 : 255));

    const auto g = gaussian_copula(0.3, 9);
    CHECK(format_heatmap(g) == format_heatmap(g));
}

TEST_CASE("atomic writes and cop files") {
    const fs::path dir = scratch("io");
    const auto g = gaussian_copula(-0.35, 6);
    write_cop(g, dir / "g.cop");
    CHECK(fs::exists(dir / "g.cop"));
    CHECK_FALSE(fs::exists(dir / "g.cop.partial"));
    const auto back = read_cop(dir / "g.cop");
    for (std::size_t i = 0; i < g.cells(); ++i) CHECK(std::abs(back.mass()[i] - g.mass()[i]) <= 1e-12);
    CHECK_THROWS_AS(write_file_atomic(dir / "missing" / "x.txt", "x"), Error);
    CHECK(format_number(0.1) == "0.1");
    fs::remove_all(dir);
}

TEST_CASE("exit codes") {
    const fs::path dir = scratch("exit");
    const auto z = uniform_column(300, 1), e = uniform_column(300, 2);
    write_table(dir / "in.csv", {"x", "y", "z"}, {z, e, negated(z)});
    const std::string in = " --input " + (dir / "in.csv").string();

    CHECK(run_cli("copula" + in + " --m 5 --out " + (dir / "ok").string()) == 0);
    CHECK(fs::exists(dir / "ok" / "copula_0_1.cop"));
    CHECK(fs::exists(dir / "ok" / "run-meta.json"));
    CHECK(run_cli("cluster" + in + " --m 5 --k 2 --out " + (dir / "a").string()) == 2);
    CHECK(run_cli("copula --input " + (dir / "nope.csv").string() + " --out " + (dir / "b").string()) == 2);
    CHECK(run_cli("copula" + in + " --m 1 --out " + (dir / "c").string()) == 2);
    CHECK(run_cli("bogus") == 2);
    CHECK(run_cli("dist" + in + " --m 5 --max-iter 2 --out " + (dir / "d").string()) == 3);
    CHECK_FALSE(fs::exists(dir / "d"));
    std::ofstream(dir / "file") << "x";
    CHECK(run_cli("copula" + in + " --m 5 --out " + (dir / "file" / "sub").string()) == 4);
    fs::remove_all(dir);
}

TEST_CASE("manifest records the run") {
    const fs::path dir = scratch("meta");
    RunConfig cfg;
    cfg.command = "synth";
    cfg.generator = "gaussian";
    cfg.param = 0.4;
    cfg.samples = 50;
    cfg.seed = 17;
    cfg.out = dir;
    run_pipeline(cfg);
    const auto meta = nlohmann::json::parse(slurp(dir / "run-meta.json"));
    CHECK(meta["command"] == "synth");
    CHECK(meta["seed"] == 17);
    CHECK(meta["samples"] == 50);
    CHECK(meta.contains("created"));
    const auto rows = read_rows(dir / "synth.csv");
    CHECK(rows.size() == 51);
    CHECK(rows[0] == std::vector<std::string>{"x", "y"});
    fs::remove_all(dir);
}

TEST_CASE("cluster separates comonotone from countermonotone pairs") {
    const fs::path dir = scratch("cluster");
    const auto z = uniform_column(400, 3);
    // Pairs (a,b) and (c,d) are comonotone; the other four countermonotone.
    write_table(dir / "in.csv", {"a", "b", "c", "d"}, {z, z, negated(z), negated(z)});
    REQUIRE(run_cli("cluster --input " + (dir / "in.csv").string() + " --m 8 --k 2 --seed 1 --out " +
                    (dir / "out").string()) == 0);
    const auto rows = read_rows(dir / "out" / "assignment.csv");
    REQUIRE(rows.size() == 7);
    std::string m_cluster, w_cluster;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const bool comonotone = (rows[r][0] == "a" && rows[r][1] == "b") || (rows[r][0] == "c" && rows[r][1] == "d");
        std::string& slot = comonotone ? m_cluster : w_cluster;
        if (slot.empty()) slot = rows[r][2];
        CHECK(rows[r][2] == slot);
    }
    CHECK(m_cluster != w_cluster);
    CHECK(fs::exists(dir / "out" / "centroid_0.cop"));
    CHECK(fs::exists(dir / "out" / "centroid_1.pgm"));
    fs::remove_all(dir);
}

TEST_CASE("query ranks the matching gaussian pair first") {
    const fs::path dir = scratch("query");
    const auto g = gen_gaussian_pair(0.7, 3000, 5);
    const auto e = uniform_column(3000, 6);
    write_table(dir / "in.csv", {"g1", "g2", "noise"}, {g.x, g.y, e});
    REQUIRE(run_cli("target --target gaussian --param 0.7 --m 10 --out " + (dir / "t").string()) == 0);
    REQUIRE(run_cli("query --input " + (dir / "in.csv").string() + " --m 10 --targets " +
                    (dir / "t" / "target.cop").string() + " --out " + (dir / "out").string()) == 0);
    const auto rows = read_rows(dir / "out" / "query.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[1][0] == "1");
    CHECK(rows[1][1] == "g1");
    CHECK(rows[1][2] == "g2");
    CHECK(std::stod(rows[1][3]) <= std::stod(rows[2][3]));
    fs::remove_all(dir);
}

TEST_CASE("tfdc matrix scores a variable against its copy") {
    const fs::path dir = scratch("tfdc");
    const auto z = uniform_column(2000, 7), e = uniform_column(2000, 8);
    write_table(dir / "in.csv", {"x", "x2", "e"}, {z, z, e});
    for (const char* t : {"M", "W", "Pi"})
        REQUIRE(run_cli(std::string("target --target ") + t + " --m 10 --out " + (dir / t).string()) == 0);
    REQUIRE(run_cli("tfdc --input " + (dir / "in.csv").string() + " --m 10 --targets " +
                    (dir / "M" / "target.cop").string() + " " + (dir / "W" / "target.cop").string() + " --forgets " +
                    (dir / "Pi" / "target.cop").string() + " --out " + (dir / "out").string()) == 0);
    const auto rows = read_rows(dir / "out" / "tfdc-matrix.csv");
    REQUIRE(rows.size() == 4);
    CHECK(rows[0] == std::vector<std::string>{"variable", "x", "x2", "e"});
    CHECK(std::stod(rows[1][2]) >= 0.9);
    CHECK(rows[1][2] == rows[2][1]);
    CHECK(std::stod(rows[1][3]) <= 0.3);
    fs::remove_all(dir);
}

TEST_CASE("stochastic commands are byte-identical across runs and thread counts") {
    const fs::path dir = scratch("det");
    const auto z = uniform_column(300, 9);
    write_table(dir / "in.csv", {"a", "b", "c"}, {z, uniform_column(300, 10), negated(z)});
    const std::string in = " --input " + (dir / "in.csv").string();
    const std::vector<std::pair<std::string, std::string>> runs{
        {"synth --generator sine16 --param 0.5 --samples 200 --seed 3", "synth.csv"},
        {"cluster" + in + " --m 6 --k 2 --seed 3", "assignment.csv"},
        {"power --patterns linear circle --noise 0.5 --coefficients pearson dcor --n-sims 12 --sample-size 30 --seed 3",
         "power.csv"},
    };
    for (const auto& [args, file] : runs) {
        REQUIRE(run_cli(args + " --out " + (dir / "one").string(), "DEPCOP_THREADS=1") == 0);
        REQUIRE(run_cli(args + " --out " + (dir / "again").string(), "DEPCOP_THREADS=1") == 0);
        REQUIRE(run_cli(args + " --out " + (dir / "three").string(), "DEPCOP_THREADS=3") == 0);
        const std::string a = slurp(dir / "one" / file);
        CHECK(!a.empty());
        CHECK(a == slurp(dir / "again" / file));
        CHECK(a == slurp(dir / "three" / file));
    }
    fs::remove_all(dir);
}
