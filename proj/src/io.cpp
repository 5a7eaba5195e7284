#include "depcop/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <system_error>
#include <vector>

#include "depcop/error.hpp"

namespace depcop {

namespace {

[[noreturn]] void parse_error(const std::string& source, std::size_t line, const std::string& what) {
    fail(ErrorKind::ParseError, source + ":" + std::to_string(line) + ": " + what);
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma == std::string_view::npos ? comma : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

ObservationTable parse_csv(std::istream& in, const std::string& source) {
    ObservationTable table;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view = line;
        if (line_no == 1 && view.substr(0, 3) == "\xEF\xBB\xBF") view.remove_prefix(3);
        if (trim(view).empty()) continue;
        const auto fields = split_commas(view);

        if (!have_header) {
            for (std::string_view f : fields) {
                if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
                if (f.empty()) parse_error(source, line_no, "empty variable name");
                table.names.emplace_back(f);
            }
            table.columns.resize(table.names.size());
            have_header = true;
            continue;
        }

        if (fields.size() != table.names.size()) {
            parse_error(source, line_no, "expected " + std::to_string(table.names.size()) + " fields, got " +
                                             std::to_string(fields.size()));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const std::string_view f = fields[i];
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
                parse_error(source, line_no, "column '" + table.names[i] + "': not a finite number: '" +
                                                 std::string(f) + "'");
            }
            table.columns[i].push_back(v);
        }
    }
    if (!have_header) parse_error(source, line_no, "missing header row");
    if (table.sample_count() < 2) {
        parse_error(source, line_no, "need at least 2 data rows, got " + std::to_string(table.sample_count()));
    }
    return table;
}

ObservationTable load_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::ParseError, path.string() + ":0: cannot open file");
    return parse_csv(in, path.string());
}

std::string format_heatmap(const CopulaHistogram& c) {
    const std::size_t m = c.m();
    const auto mass = c.mass();
    const double top = mass.empty() ? 0.0 : *std::max_element(mass.begin(), mass.end());
    std::string out = "P2\n" + std::to_string(m) + " " + std::to_string(m) + "\n255\n";
    for (std::size_t row = 0; row < m; ++row) {
        const std::size_t q = m - 1 - row;
        for (std::size_t p = 0; p < m; ++p) {
            const double level = top > 0.0 ? c(p, q) / top : 0.0;
            const long pixel = std::lround(255.0 * (1.0 - level));
            if (p > 0) out += ' ';
            out += std::to_string(std::clamp(pixel, 0L, 255L));
        }
        out += '\n';
    }
    return out;
}

void write_heatmap(const CopulaHistogram& c, const std::filesystem::path& path) {
    write_file_atomic(path, format_heatmap(c));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path partial = path;
    partial += ".partial";
    {
        std::ofstream out(partial, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::IoError, "cannot write " + partial.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) fail(ErrorKind::IoError, "failed writing " + partial.string());
    }
    std::error_code ec;
    std::filesystem::rename(partial, path, ec);
    if (ec) fail(ErrorKind::IoError, "cannot rename " + partial.string() + ": " + ec.message());
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace depcop
