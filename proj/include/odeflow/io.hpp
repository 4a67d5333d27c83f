#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "odeflow/vec.hpp"

namespace odeflow {

// shortest round-trip decimal representation
std::string format_double(double v);

// Simple CSV emitter: declared header, one row per call.
class CsvWriter {
  public:
    explicit CsvWriter(std::vector<std::string> header);
    void add_row(const std::vector<std::string>& cells);
    void add_row(const Vec& values);
    const std::string& text() const { return text_; }
    void write(const std::string& path) const;

  private:
    std::size_t columns_;
    std::string text_;
};

std::string read_file(const std::string& path);
// write to <path>.tmp then rename, so partial files never appear
void write_file_atomic(const std::string& path, const std::string& content);
bool file_exists(const std::string& path);

// Per-run provenance record; re-running a command with the manifest's
// config reproduces all numeric outputs bitwise.
struct RunManifest {
    std::string command;
    std::string config_json;  // effective config snapshot (JSON object)
    std::uint64_t seed = 0;
    std::string tool_version;
    std::string format_version;
    std::vector<std::string> outputs;
    double wall_time_s = 0.0;

    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
};

extern const char* const kToolVersion;
extern const char* const kFormatVersion;

// Minimal SVG emitters; no plotting dependency.
std::string svg_line_chart(const std::vector<double>& xs,
                           const std::vector<std::vector<double>>& series,
                           const std::vector<std::string>& labels, const std::string& title);
std::string svg_scatter(const std::vector<double>& xs, const std::vector<double>& ys,
                        const std::string& title);

}  // namespace odeflow
