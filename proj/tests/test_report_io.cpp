#include <charconv>
#include <cstdio>
#include <filesystem>
#include <string>

#include "cogmap/report_io.hpp"
#include "doctest.h"

namespace report = cogmap::report;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "cogmap_report_io_test";
    fs::create_directories(dir);
    return dir;
}
} // namespace

TEST_CASE("format_double round-trips through parse") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 3.0, 0.0, 1e300, -4.9406564584124654e-324}) {
        std::string text = report::format_double(v);
        double back = 0.0;
        auto res = std::from_chars(text.data(), text.data() + text.size(), back);
        REQUIRE(res.ec == std::errc{});
        CHECK(back == v);
    }
    CHECK(report::format_double(3.0) == "3");
    CHECK(report::format_double(0.5) == "0.5");
}

TEST_CASE("kv: parse, defaults, comments") {
    auto kv = report::parse_kv("# header\nalpha = 1.5\n\nname = run_a\nnested.key = yes\n");
    CHECK(report::kv_require(kv, "name") == "run_a");
    CHECK(report::kv_double(kv, "alpha", 0.0) == doctest::Approx(1.5));
    CHECK(report::kv_get(kv, "missing", "fb") == "fb");
    CHECK(report::kv_long(kv, "missing", 7) == 7);
    CHECK(kv.count("nested.key") == 1);
    CHECK_THROWS_AS((void)report::kv_require(kv, "absent"), report::ConfigError);
}

TEST_CASE("kv: bool parsing") {
    auto kv = report::parse_kv("a = true\nb = false\nc = 1\nd = 0\n");
    CHECK(report::kv_bool(kv, "a", false));
    CHECK(!report::kv_bool(kv, "b", true));
    CHECK(report::kv_bool(kv, "c", false));
    CHECK(!report::kv_bool(kv, "d", true));
    CHECK(report::kv_bool(kv, "missing", true));
}

TEST_CASE("kv: file round trip") {
    auto path = (temp_dir() / "roundtrip.kv").string();
    report::KvMap kv{{"x", "1.25"}, {"label", "abc def"}, {"k.sub", "-3"}};
    report::write_kv(path, kv);
    CHECK(report::read_kv(path) == kv);
}

TEST_CASE("csv: quoting round trip") {
    report::Csv csv;
    csv.header = {"name", "value"};
    csv.add_row({"plain", "1"});
    csv.add_row({"with,comma", "2"});
    csv.add_row({"with \"quotes\"", "3"});
    csv.add_row({"with\nnewline", "4"});
    auto path = (temp_dir() / "cells.csv").string();
    csv.write(path);
    auto back = report::read_csv(path);
    REQUIRE(back.header == csv.header);
    REQUIRE(back.rows.size() == csv.rows.size());
    for (size_t i = 0; i < csv.rows.size(); ++i) CHECK(back.rows[i] == csv.rows[i]);
}

TEST_CASE("csv: column lookup") {
    report::Csv csv;
    csv.header = {"a", "b"};
    CHECK(report::csv_column(csv, "b") == 1);
    CHECK_THROWS_AS(report::csv_column(csv, "z"), report::ConfigError);
}

TEST_CASE("manifest round trip") {
    report::Manifest m;
    m.command = "emulate";
    m.tool_version = "0.1.0";
    m.config = {{"dim", "64"}, {"seed", "3"}};
    m.inputs = {"data/run1"};
    m.outputs = {"activations.jsonl", "shares.csv"};
    auto path = (temp_dir() / "run_manifest.kv").string();
    report::write_manifest(path, m);
    auto back = report::read_manifest(path);
    CHECK(back.command == m.command);
    CHECK(back.tool_version == m.tool_version);
    CHECK(back.config == m.config);
    CHECK(back.inputs == m.inputs);
    CHECK(back.outputs == m.outputs);
}

TEST_CASE("check report: pass bookkeeping and csv") {
    report::CheckReport checks;
    checks.add("alpha", 0.5, 1.0, true, "below bound");
    checks.add("beta", 2.0, 1.0, false);
    CHECK(!checks.all_pass());
    auto csv = checks.to_csv();
    REQUIRE(csv.rows.size() == 2);
    CHECK(csv.rows[0][0] == "alpha");

    report::CheckReport ok;
    ok.add("gamma", 0.0, 0.0, true);
    CHECK(ok.all_pass());
}

TEST_CASE("files_identical and read_file errors") {
    auto dir = temp_dir();
    auto a = (dir / "a.txt").string(), b = (dir / "b.txt").string();
    report::write_file(a, "same bytes");
    report::write_file(b, "same bytes");
    CHECK(report::files_identical(a, b));
    report::write_file(b, "same byteS");
    CHECK(!report::files_identical(a, b));
    CHECK_THROWS_AS((void)report::read_file((dir / "missing.txt").string()),
                    report::ArtifactError);
}

TEST_CASE("svg plots are deterministic and well formed") {
    report::Series s;
    s.label = "acc";
    s.x = {1, 2, 3};
    s.y = {0.5, 0.8, 0.7};
    s.yerr = {0.1, 0.05, 0.02};
    report::PlotOptions opts;
    opts.title = "t";
    auto one = report::svg_line_plot({s}, opts);
    auto two = report::svg_line_plot({s}, opts);
    CHECK(one == two);
    CHECK(one.find("<svg") != std::string::npos);
    CHECK(one.find("</svg>") != std::string::npos);
    CHECK(one.find("script") == std::string::npos);
    CHECK(one.find("href") == std::string::npos);

    auto bars = report::svg_bar_plot({"raw", "resid"}, {0.9, 0.4}, opts);
    CHECK(bars.find("<svg") != std::string::npos);
    CHECK(bars.find("raw") != std::string::npos);
}

TEST_CASE("svg log axes accept positive data") {
    report::Series s;
    s.label = "err";
    s.x = {10, 100, 1000};
    s.y = {0.1, 0.01, 0.001};
    report::PlotOptions opts;
    opts.log_x = true;
    opts.log_y = true;
    auto svg = report::svg_line_plot({s}, opts);
    CHECK(svg.find("<svg") != std::string::npos);
}
