#include "kan/dataset.hpp"

#include "kan/errors.hpp"
#include "kan/model_io.hpp"
#include "kan/rng.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <sstream>

namespace kan {

const char* const kDatasetHeader = "timestamp,shunt_voltage_V,bus_voltage_V,current_A,power_W,label";

std::size_t TelemetryDataset::count_label(int label) const {
    std::size_t n = 0;
    for (const auto& s : samples) n += (s.label == label);
    return n;
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string dataset_to_csv(const TelemetryDataset& ds) {
    std::string out;
    out.reserve(ds.samples.size() * 48 + 64);
    out += kDatasetHeader;
    out += '\n';
    for (const auto& s : ds.samples) {
        out += std::to_string(s.timestamp);
        out += ',';
        out += format_double(s.shunt_voltage);
        out += ',';
        out += format_double(s.bus_voltage);
        out += ',';
        out += format_double(s.current);
        out += ',';
        out += format_double(s.power);
        out += ',';
        out += std::to_string(s.label);
        out += '\n';
    }
    return out;
}

void write_dataset_csv(const TelemetryDataset& ds, const std::string& path) {
    write_file_atomic(path, dataset_to_csv(ds));
}

namespace {

bool parse_field_double(const std::string& s, double& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last && std::isfinite(out);
}

bool parse_field_int(const std::string& s, std::int64_t& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

} // namespace

bool parse_csv_row(const std::string& raw, LabeledSample& out, std::string& error) {
    std::string line = strip_cr(raw);
    if (line.empty()) return false;
    std::vector<std::string> f = split_csv(line);
    if (f.size() != 6) {
        error = "expected 6 fields, got " + std::to_string(f.size());
        return false;
    }
    LabeledSample s;
    std::int64_t label = 0;
    if (!parse_field_int(f[0], s.timestamp)) { error = "bad timestamp '" + f[0] + "'"; return false; }
    if (!parse_field_double(f[1], s.shunt_voltage)) { error = "bad shunt_voltage_V '" + f[1] + "'"; return false; }
    if (!parse_field_double(f[2], s.bus_voltage)) { error = "bad bus_voltage_V '" + f[2] + "'"; return false; }
    if (!parse_field_double(f[3], s.current)) { error = "bad current_A '" + f[3] + "'"; return false; }
    if (!parse_field_double(f[4], s.power)) { error = "bad power_W '" + f[4] + "'"; return false; }
    if (!parse_field_int(f[5], label) || (label != 0 && label != 1)) {
        error = "bad label '" + f[5] + "' (must be 0 or 1)";
        return false;
    }
    s.label = static_cast<int>(label);
    out = s;
    error.clear();
    return true;
}

TelemetryDataset parse_dataset_csv(std::istream& in, const std::string& origin) {
    std::string line;
    if (!std::getline(in, line))
        throw DataError(origin + ": empty file");
    line = strip_cr(line);
    if (line != kDatasetHeader)
        throw DataError(origin + ":1: bad header '" + line + "' (expected '" +
                        kDatasetHeader + "')");

    TelemetryDataset ds;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (strip_cr(line).empty()) continue;
        LabeledSample s;
        std::string error;
        if (!parse_csv_row(line, s, error))
            throw DataError(origin + ":" + std::to_string(line_no) + ": " + error);
        ds.samples.push_back(s);
    }
    ds.provenance = origin;
    return ds;
}

TelemetryDataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open dataset: " + path);
    return parse_dataset_csv(in, path);
}

std::uint64_t dataset_fingerprint(const TelemetryDataset& ds) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& s : ds.samples) {
        struct {
            std::int64_t t;
            double f[4];
            std::int32_t label;
        } packed{s.timestamp, {s.shunt_voltage, s.bus_voltage, s.current, s.power},
                 static_cast<std::int32_t>(s.label)};
        h = fnv1a(&packed.t, sizeof packed.t, h);
        h = fnv1a(packed.f, sizeof packed.f, h);
        h = fnv1a(&packed.label, sizeof packed.label, h);
    }
    return h;
}

} // namespace kan
