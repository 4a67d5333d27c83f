#include "odeflow/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace odeflow {

const char* const kToolVersion = "odeflow 0.1.0";
const char* const kFormatVersion = "1";

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
    if (header.empty()) throw std::invalid_argument("CsvWriter: empty header");
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (i > 0) text_ += ',';
        text_ += header[i];
    }
    text_ += '\n';
}

void CsvWriter::add_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) throw std::invalid_argument("CsvWriter: column count mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) text_ += ',';
        text_ += cells[i];
    }
    text_ += '\n';
}

void CsvWriter::add_row(const Vec& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_double(v));
    add_row(cells);
}

void CsvWriter::write(const std::string& path) const { write_file_atomic(path, text_); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp);
        out << content;
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

bool file_exists(const std::string& path) {
    std::ifstream in(path);
    return static_cast<bool>(in);
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = nlohmann::json::parse(config_json.empty() ? "{}" : config_json);
    j["seed"] = seed;
    j["versions"] = {{"tool", tool_version}, {"format", format_version}};
    j["outputs"] = outputs;
    j["wall_time_s"] = wall_time_s;
    return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_json = j.at("config").dump();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.tool_version = j.at("versions").at("tool").get<std::string>();
    m.format_version = j.at("versions").at("format").get<std::string>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.wall_time_s = j.at("wall_time_s").get<double>();
    return m;
}

namespace {

struct Extent {
    double lo = 0.0, hi = 1.0;
    void fit(const std::vector<double>& v) {
        for (double x : v) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
    }
    double map(double x, double a, double b) const {
        if (hi == lo) return 0.5 * (a + b);
        return a + (x - lo) / (hi - lo) * (b - a);
    }
};

const char* kSeriesColors[] = {"#2b6cb0", "#c05621", "#2f855a", "#805ad5", "#c53030"};

}  // namespace

std::string svg_line_chart(const std::vector<double>& xs,
                           const std::vector<std::vector<double>>& series,
                           const std::vector<std::string>& labels, const std::string& title) {
    const int w = 640, hgt = 400, m = 48;
    Extent ex, ey;
    ex.lo = ex.hi = xs.empty() ? 0.0 : xs.front();
    ex.fit(xs);
    bool first = true;
    for (const auto& s : series)
        for (double v : s) {
            if (first) {
                ey.lo = ey.hi = v;
                first = false;
            }
            ey.lo = std::min(ey.lo, v);
            ey.hi = std::max(ey.hi, v);
        }

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << hgt
        << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
        << "</text>\n";
    svg << "<line x1=\"" << m << "\" y1=\"" << hgt - m << "\" x2=\"" << w - m << "\" y2=\""
        << hgt - m << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << m << "\" y1=\"" << m << "\" x2=\"" << m << "\" y2=\"" << hgt - m
        << "\" stroke=\"black\"/>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        svg << "<polyline fill=\"none\" stroke=\"" << kSeriesColors[s % 5]
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < series[s].size() && i < xs.size(); ++i) {
            const double px = ex.map(xs[i], m, w - m);
            const double py = ey.map(series[s][i], hgt - m, m);
            svg << px << ',' << py << ' ';
        }
        svg << "\"/>\n";
        if (s < labels.size())
            svg << "<text x=\"" << w - m + 4 << "\" y=\"" << m + 16 * static_cast<int>(s)
                << "\" font-size=\"11\" fill=\"" << kSeriesColors[s % 5] << "\">" << labels[s]
                << "</text>\n";
    }
    svg << "<text x=\"" << m << "\" y=\"" << hgt - m + 16 << "\" font-size=\"10\">"
        << format_double(ex.lo) << "</text>\n";
    svg << "<text x=\"" << w - m << "\" y=\"" << hgt - m + 16
        << "\" text-anchor=\"end\" font-size=\"10\">" << format_double(ex.hi) << "</text>\n";
    svg << "<text x=\"" << m - 4 << "\" y=\"" << hgt - m << "\" text-anchor=\"end\" font-size=\"10\">"
        << format_double(ey.lo) << "</text>\n";
    svg << "<text x=\"" << m - 4 << "\" y=\"" << m << "\" text-anchor=\"end\" font-size=\"10\">"
        << format_double(ey.hi) << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::string svg_scatter(const std::vector<double>& xs, const std::vector<double>& ys,
                        const std::string& title) {
    const int w = 480, hgt = 480, m = 40;
    Extent ex, ey;
    ex.lo = ex.hi = xs.empty() ? 0.0 : xs.front();
    ey.lo = ey.hi = ys.empty() ? 0.0 : ys.front();
    ex.fit(xs);
    ey.fit(ys);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << hgt
        << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
        << "</text>\n";
    for (std::size_t i = 0; i < xs.size() && i < ys.size(); ++i)
        svg << "<circle cx=\"" << ex.map(xs[i], m, w - m) << "\" cy=\"" << ey.map(ys[i], hgt - m, m)
            << "\" r=\"2\" fill=\"#2b6cb0\" fill-opacity=\"0.6\"/>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace odeflow
