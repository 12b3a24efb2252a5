#include "cogmap/report_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cogmap::report {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ArtifactError("cannot open for writing: " + path);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ArtifactError("short write: " + path);
}

bool files_identical(const std::string& path_a, const std::string& path_b) {
    return read_file(path_a) == read_file(path_b);
}

namespace {

std::string strip(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

KvMap parse_kv(const std::string& text) {
    KvMap kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = strip(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
        std::string key = strip(t.substr(0, eq));
        std::string value = strip(t.substr(eq + 1));
        if (key.empty())
            throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (kv.count(key))
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
        kv[key] = value;
    }
    return kv;
}

KvMap read_kv(const std::string& path) { return parse_kv(read_file(path)); }

std::string kv_to_string(const KvMap& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    }
    return out;
}

void write_kv(const std::string& path, const KvMap& kv) {
    write_file(path, kv_to_string(kv));
}

std::string kv_get(const KvMap& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

std::string kv_require(const KvMap& kv, const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError("missing required key: " + key);
    return it->second;
}

long kv_long(const KvMap& kv, const std::string& key, long fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    long value = 0;
    const std::string& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError("key " + key + ": not an integer: " + s);
    return value;
}

double kv_double(const KvMap& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string& s = it->second;
    try {
        size_t consumed = 0;
        double value = std::stod(s, &consumed);
        if (consumed != s.size()) throw std::invalid_argument(s);
        return value;
    } catch (const std::exception&) {
        throw ConfigError("key " + key + ": not a number: " + s);
    }
}

bool kv_bool(const KvMap& kv, const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("key " + key + ": not a boolean: " + it->second);
}

namespace {

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

} // namespace

void Csv::add_row(std::vector<std::string> cells) {
    if (!header.empty() && cells.size() != header.size())
        throw std::invalid_argument("Csv::add_row: cell count does not match header");
    rows.push_back(std::move(cells));
}

std::string Csv::to_string() const {
    std::string out;
    auto emit = [&out](const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += csv_escape(cells[i]);
        }
        out += '\n';
    };
    if (!header.empty()) emit(header);
    for (const auto& row : rows) emit(row);
    return out;
}

void Csv::write(const std::string& path) const { write_file(path, to_string()); }

std::string csv_cell(double v) { return format_double(v); }
std::string csv_cell(long v) { return std::to_string(v); }

Csv read_csv(const std::string& path) {
    const std::string text = read_file(path);
    Csv csv;
    std::vector<std::string> row;
    std::string cell;
    bool in_quotes = false;
    bool header_done = false;
    auto end_cell = [&] {
        row.push_back(cell);
        cell.clear();
    };
    auto end_row = [&] {
        end_cell();
        if (!header_done) {
            csv.header = row;
            header_done = true;
        } else {
            csv.rows.push_back(row);
        }
        row.clear();
    };
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            end_cell();
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            cell += c;
        }
    }
    if (!cell.empty() || !row.empty()) end_row();
    return csv;
}

int csv_column(const Csv& csv, const std::string& name) {
    for (size_t i = 0; i < csv.header.size(); ++i)
        if (csv.header[i] == name) return static_cast<int>(i);
    throw ConfigError("csv column not found: " + name);
}

std::string manifest_to_string(const Manifest& m) {
    KvMap kv;
    kv["command"] = m.command;
    kv["version"] = m.tool_version;
    for (const auto& [k, v] : m.config) kv["config." + k] = v;
    for (size_t i = 0; i < m.inputs.size(); ++i)
        kv["input." + std::to_string(i)] = m.inputs[i];
    for (size_t i = 0; i < m.outputs.size(); ++i)
        kv["output." + std::to_string(i)] = m.outputs[i];
    return kv_to_string(kv);
}

Manifest parse_manifest(const std::string& text) {
    KvMap kv = parse_kv(text);
    Manifest m;
    m.command = kv_require(kv, "command");
    m.tool_version = kv_get(kv, "version", "");
    for (const auto& [k, v] : kv) {
        if (k.rfind("config.", 0) == 0) m.config[k.substr(7)] = v;
    }
    for (size_t i = 0;; ++i) {
        auto it = kv.find("input." + std::to_string(i));
        if (it == kv.end()) break;
        m.inputs.push_back(it->second);
    }
    for (size_t i = 0;; ++i) {
        auto it = kv.find("output." + std::to_string(i));
        if (it == kv.end()) break;
        m.outputs.push_back(it->second);
    }
    return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
    write_file(path, manifest_to_string(m));
}

Manifest read_manifest(const std::string& path) { return parse_manifest(read_file(path)); }

void CheckReport::add(const std::string& name, double statistic, double threshold,
                      bool pass, const std::string& note) {
    checks.push_back({name, statistic, threshold, pass, note});
}

bool CheckReport::all_pass() const {
    return std::all_of(checks.begin(), checks.end(),
                       [](const CheckRecord& c) { return c.pass; });
}

Csv CheckReport::to_csv() const {
    Csv csv;
    csv.header = {"check", "statistic", "threshold", "pass", "note"};
    for (const auto& c : checks)
        csv.add_row({c.name, format_double(c.statistic), format_double(c.threshold),
                     c.pass ? "1" : "0", c.note});
    return csv;
}

void CheckReport::print(std::ostream& os) const {
    for (const auto& c : checks) {
        os << (c.pass ? "[PASS] " : "[FAIL] ") << c.name
           << "  statistic=" << format_double(c.statistic)
           << "  threshold=" << format_double(c.threshold);
        if (!c.note.empty()) os << "  (" << c.note << ")";
        os << '\n';
    }
}

namespace {

std::string fmt2(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[48];
    double av = std::abs(v);
    if (v == 0.0)
        std::snprintf(buf, sizeof(buf), "0");
    else if (av >= 1e5 || av < 1e-3)
        std::snprintf(buf, sizeof(buf), "%.1e", v);
    else if (av >= 100.0)
        std::snprintf(buf, sizeof(buf), "%.0f", v);
    else
        std::snprintf(buf, sizeof(buf), "%.3g", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

const char* kPalette[] = {"#1f6fb2", "#d1495b", "#2e8b57", "#b8860b",
                          "#6a4fa3", "#c2601f", "#3b8ea5", "#7a7a7a"};

struct AxisScale {
    double lo = 0.0, hi = 1.0;
    bool log = false;
    double map(double v, double px_lo, double px_hi) const {
        double t;
        if (log) {
            t = (std::log10(v) - std::log10(lo)) / (std::log10(hi) - std::log10(lo));
        } else {
            t = (v - lo) / (hi - lo);
        }
        return px_lo + t * (px_hi - px_lo);
    }
};

std::vector<double> linear_ticks(double lo, double hi, int target = 6) {
    std::vector<double> ticks;
    double range = hi - lo;
    if (range <= 0.0) return {lo};
    double raw = range / target;
    double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double mult : {1.0, 2.0, 5.0, 10.0}) {
        if (mag * mult >= raw) {
            step = mag * mult;
            break;
        }
    }
    double first = std::ceil(lo / step) * step;
    for (double v = first; v <= hi + 0.5 * step; v += step)
        ticks.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
    return ticks;
}

std::vector<double> log_ticks(double lo, double hi) {
    std::vector<double> ticks;
    int e_lo = static_cast<int>(std::floor(std::log10(lo)));
    int e_hi = static_cast<int>(std::ceil(std::log10(hi)));
    for (int e = e_lo; e <= e_hi; ++e) {
        double v = std::pow(10.0, e);
        if (v >= lo * (1 - 1e-9) && v <= hi * (1 + 1e-9)) ticks.push_back(v);
    }
    if (ticks.empty()) ticks = {lo, hi};
    return ticks;
}

AxisScale fit_axis(std::vector<double> values, bool log) {
    AxisScale ax;
    ax.log = log;
    if (log) {
        values.erase(std::remove_if(values.begin(), values.end(),
                                    [](double v) { return !(v > 0.0) || !std::isfinite(v); }),
                     values.end());
    } else {
        values.erase(std::remove_if(values.begin(), values.end(),
                                    [](double v) { return !std::isfinite(v); }),
                     values.end());
    }
    if (values.empty()) {
        ax.lo = log ? 0.1 : 0.0;
        ax.hi = 1.0;
        return ax;
    }
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    double lo = *mn, hi = *mx;
    if (log) {
        ax.lo = lo / 1.5;
        ax.hi = hi * 1.5;
    } else {
        double pad = (hi - lo) * 0.08;
        if (pad == 0.0) pad = std::abs(hi) * 0.1 + 0.1;
        ax.lo = lo - pad;
        ax.hi = hi + pad;
    }
    return ax;
}

struct SvgCanvas {
    std::string body;
    int width, height;
    double px0, px1, py0, py1;  // plot rectangle, py0 is the TOP edge

    void open_frame(const PlotOptions& opts) {
        width = opts.width;
        height = opts.height;
        px0 = 62;
        px1 = width - 16;
        py0 = opts.title.empty() ? 18 : 34;
        py1 = height - 46;
        body += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) + "\" height=\"" +
                std::to_string(height) + "\" fill=\"#ffffff\"/>\n";
        body += "<rect x=\"" + fmt2(px0) + "\" y=\"" + fmt2(py0) + "\" width=\"" +
                fmt2(px1 - px0) + "\" height=\"" + fmt2(py1 - py0) +
                "\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
        if (!opts.title.empty())
            body += "<text x=\"" + fmt2((px0 + px1) / 2) +
                    "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                    "font-size=\"14\" fill=\"#111111\">" +
                    xml_escape(opts.title) + "</text>\n";
        if (!opts.xlabel.empty())
            body += "<text x=\"" + fmt2((px0 + px1) / 2) + "\" y=\"" +
                    fmt2(height - 10.0) +
                    "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
                    "fill=\"#111111\">" +
                    xml_escape(opts.xlabel) + "</text>\n";
        if (!opts.ylabel.empty())
            body += "<text x=\"14\" y=\"" + fmt2((py0 + py1) / 2) +
                    "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
                    "fill=\"#111111\" transform=\"rotate(-90 14 " +
                    fmt2((py0 + py1) / 2) + ")\">" + xml_escape(opts.ylabel) + "</text>\n";
    }

    void x_ticks(const AxisScale& ax) {
        auto ticks = ax.log ? log_ticks(ax.lo, ax.hi) : linear_ticks(ax.lo, ax.hi);
        for (double t : ticks) {
            double px = ax.map(t, px0, px1);
            body += "<line x1=\"" + fmt2(px) + "\" y1=\"" + fmt2(py1) + "\" x2=\"" + fmt2(px) +
                    "\" y2=\"" + fmt2(py1 + 5) + "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
            body += "<text x=\"" + fmt2(px) + "\" y=\"" + fmt2(py1 + 18) +
                    "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
                    "fill=\"#333333\">" +
                    tick_label(t) + "</text>\n";
        }
    }

    void y_ticks(const AxisScale& ax) {
        auto ticks = ax.log ? log_ticks(ax.lo, ax.hi) : linear_ticks(ax.lo, ax.hi);
        for (double t : ticks) {
            double py = py1 - (ax.map(t, 0.0, py1 - py0));
            if (ax.log) py = py0 + py1 - ax.map(t, py0, py1);
            body += "<line x1=\"" + fmt2(px0 - 5) + "\" y1=\"" + fmt2(py) + "\" x2=\"" +
                    fmt2(px0) + "\" y2=\"" + fmt2(py) +
                    "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
            body += "<line x1=\"" + fmt2(px0) + "\" y1=\"" + fmt2(py) + "\" x2=\"" + fmt2(px1) +
                    "\" y2=\"" + fmt2(py) +
                    "\" stroke=\"#e3e3e3\" stroke-width=\"0.5\"/>\n";
            body += "<text x=\"" + fmt2(px0 - 8) + "\" y=\"" + fmt2(py + 4) +
                    "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
                    "fill=\"#333333\">" +
                    tick_label(t) + "</text>\n";
        }
    }

    std::string finish() const {
        std::string out =
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width) +
            "\" height=\"" + std::to_string(height) + "\" viewBox=\"0 0 " +
            std::to_string(width) + " " + std::to_string(height) + "\">\n";
        out += body;
        out += "</svg>\n";
        return out;
    }
};

} // namespace

std::string svg_line_plot(const std::vector<Series>& series, const PlotOptions& opts) {
    std::vector<double> all_x, all_y;
    for (const auto& s : series) {
        all_x.insert(all_x.end(), s.x.begin(), s.x.end());
        for (size_t i = 0; i < s.y.size(); ++i) {
            double e = i < s.yerr.size() ? s.yerr[i] : 0.0;
            all_y.push_back(s.y[i] - e);
            all_y.push_back(s.y[i] + e);
        }
    }
    AxisScale ax = fit_axis(all_x, opts.log_x);
    AxisScale ay = fit_axis(all_y, opts.log_y);

    SvgCanvas canvas;
    canvas.open_frame(opts);
    canvas.x_ticks(ax);
    canvas.y_ticks(ay);

    auto map_y = [&](double v) {
        return canvas.py0 + canvas.py1 - ay.map(v, canvas.py0, canvas.py1);
    };

    for (size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
        std::string pts;
        for (size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
            if (opts.log_x && !(s.x[i] > 0.0)) continue;
            if (opts.log_y && !(s.y[i] > 0.0)) continue;
            if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
            double px = ax.map(s.x[i], canvas.px0, canvas.px1);
            double py = map_y(s.y[i]);
            if (!pts.empty()) pts += ' ';
            pts += fmt2(px) + "," + fmt2(py);
            if (i < s.yerr.size() && s.yerr[i] > 0.0) {
                double y_hi = map_y(s.y[i] + s.yerr[i]);
                double y_lo = map_y(s.y[i] - s.yerr[i]);
                canvas.body += "<line x1=\"" + fmt2(px) + "\" y1=\"" + fmt2(y_lo) +
                               "\" x2=\"" + fmt2(px) + "\" y2=\"" + fmt2(y_hi) +
                               "\" stroke=\"" + color + "\" stroke-width=\"1\"/>\n";
            }
            if (opts.markers)
                canvas.body += "<circle cx=\"" + fmt2(px) + "\" cy=\"" + fmt2(py) +
                               "\" r=\"3\" fill=\"" + color + "\"/>\n";
        }
        if (opts.lines && !pts.empty())
            canvas.body += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
                           "\" stroke-width=\"1.5\"/>\n";
        if (!s.label.empty()) {
            double ly = canvas.py0 + 16 + 16 * static_cast<double>(si);
            double lx = canvas.px1 - 150;
            canvas.body += "<line x1=\"" + fmt2(lx) + "\" y1=\"" + fmt2(ly - 4) + "\" x2=\"" +
                           fmt2(lx + 18) + "\" y2=\"" + fmt2(ly - 4) + "\" stroke=\"" + color +
                           "\" stroke-width=\"2\"/>\n";
            canvas.body += "<text x=\"" + fmt2(lx + 24) + "\" y=\"" + fmt2(ly) +
                           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">" +
                           xml_escape(s.label) + "</text>\n";
        }
    }
    return canvas.finish();
}

std::string svg_bar_plot(const std::vector<std::string>& labels,
                         const std::vector<double>& values, const PlotOptions& opts) {
    if (labels.size() != values.size())
        throw std::invalid_argument("svg_bar_plot: labels and values differ in length");
    std::vector<double> all_y = values;
    all_y.push_back(0.0);
    AxisScale ay = fit_axis(all_y, false);

    SvgCanvas canvas;
    canvas.open_frame(opts);
    canvas.y_ticks(ay);

    auto map_y = [&](double v) {
        return canvas.py0 + canvas.py1 - ay.map(v, canvas.py0, canvas.py1);
    };

    const size_t n = values.size();
    const double span = canvas.px1 - canvas.px0;
    const double slot = n > 0 ? span / static_cast<double>(n) : span;
    const double bar_w = slot * 0.6;
    const double y_zero = map_y(0.0);
    for (size_t i = 0; i < n; ++i) {
        const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
        double cx = canvas.px0 + slot * (static_cast<double>(i) + 0.5);
        double y_val = map_y(values[i]);
        double top = std::min(y_val, y_zero);
        double h = std::abs(y_val - y_zero);
        canvas.body += "<rect x=\"" + fmt2(cx - bar_w / 2) + "\" y=\"" + fmt2(top) +
                       "\" width=\"" + fmt2(bar_w) + "\" height=\"" + fmt2(h) + "\" fill=\"" +
                       color + "\"/>\n";
        canvas.body += "<text x=\"" + fmt2(cx) + "\" y=\"" + fmt2(canvas.py1 + 18) +
                       "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\" "
                       "fill=\"#333333\">" +
                       xml_escape(labels[i]) + "</text>\n";
    }
    return canvas.finish();
}

} // namespace cogmap::report
