/// @file test_qsf_io.cpp
/// @brief Round-trip and corruption tests for the binary field/profile
///        formats, the CSV writer, and the atomic text write.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "qsphere/errors.hpp"
#include "qsphere/qsf_io.hpp"
#include "qsphere/sphere.hpp"

using namespace qsphere;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory per test run.
fs::path scratch() {
    fs::path dir = fs::temp_directory_path() / "qsphere-io-tests";
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("field snapshots round-trip bit exactly") {
    fs::path dir = scratch();
    GridPtr g = build_grid(16, 32);
    Field f(g);
    for (int i = 0; i < g->nlat(); ++i)
        for (int j = 0; j < g->nlon(); ++j)
            f.at(i, j) = std::sin(3.0 * g->theta(i)) * std::cos(2.0 * g->phi(j)) + 1e-17;
    std::string path = (dir / "f.qsf").string();
    save_field(path, f);

    Field back = load_field(path, g);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(back[k] == f[k]);

    FieldFile raw = read_field_file(path);
    CHECK(raw.nlat == 16);
    CHECK(raw.nlon == 32);
    CHECK(raw.values == f.values());
}

TEST_CASE("field loader rejects wrong grids and corrupt files") {
    fs::path dir = scratch();
    GridPtr g = build_grid(16, 32);
    std::string path = (dir / "f.qsf").string();
    save_field(path, Field(g, 1.0));

    GridPtr other = build_grid(32, 64);
    CHECK_THROWS_AS(load_field(path, other), ConfigError);

    // Corrupt magic.
    std::string bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(dir / "bad_magic.qsf", std::ios::binary) << bytes;
    CHECK_THROWS_AS(read_field_file((dir / "bad_magic.qsf").string()), ConfigError);

    // Truncated payload.
    std::ofstream(dir / "trunc.qsf", std::ios::binary)
        << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(read_field_file((dir / "trunc.qsf").string()), ConfigError);

    CHECK_THROWS_AS(read_field_file((dir / "missing.qsf").string()), ConfigError);
}

TEST_CASE("latitude profiles round-trip and validate") {
    fs::path dir = scratch();
    std::vector<double> prof{1.0, -2.5, 3.25, 1e-300, 0.0, 7.0, 8.0, 9.0};
    std::string path = (dir / "p.qsp").string();
    save_profile(path, prof);
    CHECK(load_profile(path) == prof);

    std::string bytes = slurp(path);
    bytes[1] = '?';
    std::ofstream(dir / "bad.qsp", std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_profile((dir / "bad.qsp").string()), ConfigError);
}

TEST_CASE("format_double round-trips doubles through text") {
    for (double v : {0.1, -0.0, 1.0 / 3.0, 6.02e23, 1e-300, -2.5e-7,
                     3.141592653589793, 0.0}) {
        std::string s = format_double(v);
        double back = std::strtod(s.c_str(), nullptr);
        CHECK(back == v);
    }
    // Identical values produce identical text (byte determinism).
    CHECK(format_double(0.1) == format_double(0.1));
}

TEST_CASE("csv writer emits a stable, parseable table") {
    fs::path dir = scratch();
    std::string path = (dir / "t.csv").string();
    write_csv(path, {"t", "value"}, {{1.0, 0.5}, {2.0, -0.25}});
    std::string content = slurp(path);
    CHECK(content == "t,value\n1,0.5\n2,-0.25\n");
    // Rewriting the same table yields the same bytes.
    write_csv(path, {"t", "value"}, {{1.0, 0.5}, {2.0, -0.25}});
    CHECK(slurp(path) == content);
}

TEST_CASE("atomic text writes leave no temporaries and replace content whole") {
    fs::path dir = scratch();
    std::string path = (dir / "note.txt").string();
    write_text_atomic(path, "first\n");
    write_text_atomic(path, "second\n");
    CHECK(slurp(path) == "second\n");
    // Only the target file remains in the directory.
    int files = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        ++files;
        CHECK(e.path().filename() == "note.txt");
    }
    CHECK(files == 1);
}
