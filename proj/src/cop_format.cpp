#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

#include "depcop/copula.hpp"
#include "depcop/error.hpp"

namespace depcop {

namespace {

constexpr double kFileMassTolerance = 1e-6;

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& what) {
    fail(ErrorKind::ParseError, source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::string format_cop(const CopulaHistogram& c) {
    std::string out = std::to_string(c.m()) + "\n";
    char buf[64];
    for (std::size_t p = 0; p < c.m(); ++p) {
        for (std::size_t q = 0; q < c.m(); ++q) {
            if (q > 0) out += ' ';
            const auto res = std::to_chars(buf, buf + sizeof buf, c(p, q));
            out.append(buf, res.ptr);
        }
        out += '\n';
    }
    return out;
}

CopulaHistogram parse_cop(std::istream& in, const std::string& source) {
    std::string line;
    std::size_t line_no = 0;

    auto next_content_line = [&]() -> bool {
        while (std::getline(in, line)) {
            ++line_no;
            if (!split_fields(line).empty()) return true;
        }
        return false;
    };

    if (!next_content_line()) parse_error(source, line_no, "missing resolution line");
    const auto header = split_fields(line);
    std::size_t m = 0;
    {
        const auto [ptr, ec] = std::from_chars(header[0].data(), header[0].data() + header[0].size(), m);
        if (header.size() != 1 || ec != std::errc() || ptr != header[0].data() + header[0].size() || m == 0) {
            parse_error(source, line_no, "first line must be a positive resolution m");
        }
    }

    std::vector<double> mass;
    mass.reserve(m * m);
    for (std::size_t p = 0; p < m; ++p) {
        if (!next_content_line()) parse_error(source, line_no, "expected " + std::to_string(m) + " rows");
        const auto fields = split_fields(line);
        if (fields.size() != m) {
            parse_error(source, line_no, "expected " + std::to_string(m) + " values, got " +
                                             std::to_string(fields.size()));
        }
        for (std::string_view f : fields) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
                parse_error(source, line_no, "not a finite number: '" + std::string(f) + "'");
            }
            if (v < 0.0) parse_error(source, line_no, "negative mass " + std::string(f));
            mass.push_back(v);
        }
    }
    if (next_content_line()) parse_error(source, line_no, "trailing content after " + std::to_string(m) + " rows");

    double total = 0.0;
    for (double v : mass) total += v;
    if (std::abs(total - 1.0) > kFileMassTolerance) {
        parse_error(source, line_no, "total mass " + std::to_string(total) + " is not 1");
    }
    // Files within the histogram tolerance are kept bit-exact.
    if (std::abs(total - 1.0) > 1e-9) return CopulaHistogram::normalized(m, std::move(mass));
    return CopulaHistogram(m, std::move(mass));
}

CopulaHistogram read_cop(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
    return parse_cop(in, path.string());
}

void write_cop(const CopulaHistogram& c, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
    out << format_cop(c);
    if (!out) fail(ErrorKind::IoError, "failed writing " + path.string());
}

}  // namespace depcop
