#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cogmap::report {

// shortest decimal form that round-trips through double
std::string format_double(double v);

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ArtifactError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path);  // throws ArtifactError if unreadable
void write_file(const std::string& path, const std::string& content);
bool files_identical(const std::string& path_a, const std::string& path_b);

/*
 * Line-delimited key-value config: one `key = value` per line, '#' starts a
 * comment, blank lines ignored. Keys are bare words with dots allowed.
 */
using KvMap = std::map<std::string, std::string>;

KvMap parse_kv(const std::string& text);
KvMap read_kv(const std::string& path);
std::string kv_to_string(const KvMap& kv);
void write_kv(const std::string& path, const KvMap& kv);

std::string kv_get(const KvMap& kv, const std::string& key, const std::string& fallback);
std::string kv_require(const KvMap& kv, const std::string& key);
long kv_long(const KvMap& kv, const std::string& key, long fallback);
double kv_double(const KvMap& kv, const std::string& key, double fallback);
bool kv_bool(const KvMap& kv, const std::string& key, bool fallback);

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add_row(std::vector<std::string> cells);
    std::string to_string() const;
    void write(const std::string& path) const;
};

std::string csv_cell(double v);
std::string csv_cell(long v);

// parses our own CSV dialect back (quoted cells, doubled quotes); the first
// line becomes the header
Csv read_csv(const std::string& path);

// column index by name; throws ConfigError if absent
int csv_column(const Csv& csv, const std::string& name);

/*
 * Run manifest: enough context to re-run a command and compare its outputs
 * byte for byte. Stored in the same key-value format as configs.
 */
struct Manifest {
    std::string command;
    std::string tool_version;
    KvMap config;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
};

std::string manifest_to_string(const Manifest& m);
Manifest parse_manifest(const std::string& text);
void write_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);

struct CheckRecord {
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool pass = false;
    std::string note;
};

struct CheckReport {
    std::vector<CheckRecord> checks;

    void add(const std::string& name, double statistic, double threshold, bool pass,
             const std::string& note = "");
    bool all_pass() const;
    Csv to_csv() const;
    void print(std::ostream& os) const;
};

/*
 * Self-contained SVG plotting: no scripts, no external references. Output is
 * deterministic for identical inputs.
 */
struct Series {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> yerr;  // optional symmetric error bars
};

struct PlotOptions {
    std::string title;
    std::string xlabel;
    std::string ylabel;
    bool log_x = false;
    bool log_y = false;
    bool lines = true;
    bool markers = true;
    int width = 640;
    int height = 420;
};

std::string svg_line_plot(const std::vector<Series>& series, const PlotOptions& opts);
std::string svg_bar_plot(const std::vector<std::string>& labels,
                         const std::vector<double>& values, const PlotOptions& opts);

} // namespace cogmap::report
