/// @file qsf_io.cpp
/// @brief Implementation of the QSF1/QSP1 binary formats and text writers.

#include "qsphere/qsf_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "qsphere/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "qsphere binary formats are little-endian; a byte-swapping "
              "reader/writer is required on this platform");

namespace qsphere {

namespace {

namespace fs = std::filesystem;

std::string temp_path_for(const std::string& path) {
    return path + ".tmp";
}

void atomic_commit(const std::string& tmp, const std::string& path) {
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw ConfigError("could not move temporary file onto " + path + ": " +
                          ec.message());
    }
}

void write_binary_atomic(const std::string& path, const void* data, std::size_t bytes) {
    const std::string tmp = temp_path_for(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot open " + tmp + " for writing");
        out.write(static_cast<const char*>(data), std::streamsize(bytes));
        if (!out) throw ConfigError("short write to " + tmp);
    }
    atomic_commit(tmp, path);
}

std::vector<char> read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw ConfigError("cannot open " + path + " for reading");
    const std::streamsize n = in.tellg();
    in.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(n));
    in.read(buf.data(), n);
    if (!in) throw ConfigError("short read from " + path);
    return buf;
}

void put_u32(std::vector<char>& buf, std::uint32_t v) {
    char b[4];
    std::memcpy(b, &v, 4);
    buf.insert(buf.end(), b, b + 4);
}

std::uint32_t get_u32(const std::vector<char>& buf, std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v;
}

} // namespace

// ---------------------------------------------------------------------------
// QSF1
// ---------------------------------------------------------------------------

void save_field(const std::string& path, const Field& f) {
    std::vector<char> buf;
    buf.reserve(12 + sizeof(double) * f.size());
    buf.insert(buf.end(), {'Q', 'S', 'F', '1'});
    put_u32(buf, std::uint32_t(f.nlat()));
    put_u32(buf, std::uint32_t(f.nlon()));
    const char* p = reinterpret_cast<const char*>(f.values().data());
    buf.insert(buf.end(), p, p + sizeof(double) * f.size());
    write_binary_atomic(path, buf.data(), buf.size());
}

FieldFile read_field_file(const std::string& path) {
    const std::vector<char> buf = read_all(path);
    if (buf.size() < 12 || std::memcmp(buf.data(), "QSF1", 4) != 0)
        throw ConfigError(path + ": not a QSF1 field file");
    FieldFile ff;
    ff.nlat = int(get_u32(buf, 4));
    ff.nlon = int(get_u32(buf, 8));
    const std::size_t expect = 12 + sizeof(double) * std::size_t(ff.nlat) * ff.nlon;
    if (ff.nlat <= 0 || ff.nlon <= 0 || buf.size() != expect)
        throw ConfigError(path + ": QSF1 payload size does not match header");
    ff.values.resize(std::size_t(ff.nlat) * ff.nlon);
    std::memcpy(ff.values.data(), buf.data() + 12, sizeof(double) * ff.values.size());
    return ff;
}

Field load_field(const std::string& path, GridPtr grid) {
    FieldFile ff = read_field_file(path);
    if (ff.nlat != grid->nlat() || ff.nlon != grid->nlon())
        throw ConfigError(path + ": grid is " + std::to_string(grid->nlat()) + "x" +
                          std::to_string(grid->nlon()) + " but file holds " +
                          std::to_string(ff.nlat) + "x" + std::to_string(ff.nlon));
    return Field(std::move(grid), std::move(ff.values));
}

// ---------------------------------------------------------------------------
// QSP1
// ---------------------------------------------------------------------------

void save_profile(const std::string& path, const std::vector<double>& values) {
    std::vector<char> buf;
    buf.reserve(8 + sizeof(double) * values.size());
    buf.insert(buf.end(), {'Q', 'S', 'P', '1'});
    put_u32(buf, std::uint32_t(values.size()));
    const char* p = reinterpret_cast<const char*>(values.data());
    buf.insert(buf.end(), p, p + sizeof(double) * values.size());
    write_binary_atomic(path, buf.data(), buf.size());
}

std::vector<double> load_profile(const std::string& path) {
    const std::vector<char> buf = read_all(path);
    if (buf.size() < 8 || std::memcmp(buf.data(), "QSP1", 4) != 0)
        throw ConfigError(path + ": not a QSP1 profile file");
    const std::uint32_t n = get_u32(buf, 4);
    if (buf.size() != 8 + sizeof(double) * n)
        throw ConfigError(path + ": QSP1 payload size does not match header");
    std::vector<double> v(n);
    std::memcpy(v.data(), buf.data() + 8, sizeof(double) * n);
    return v;
}

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

std::string format_double(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.17g", v);
    return b;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t k = 0; k < header.size(); ++k) {
        if (k) out += ',';
        out += header[k];
    }
    out += '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw ConfigError("write_csv: row width does not match header");
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k) out += ',';
            out += format_double(row[k]);
        }
        out += '\n';
    }
    write_text_atomic(path, out);
}

void write_text_atomic(const std::string& path, const std::string& content) {
    write_binary_atomic(path, content.data(), content.size());
}

} // namespace qsphere
