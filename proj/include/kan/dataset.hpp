#ifndef KAN_DATASET_HPP
#define KAN_DATASET_HPP

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace kan {

// One 1 Hz charger measurement row. Feature order is fixed: shunt voltage,
// bus voltage, current, power.
struct LabeledSample {
    std::int64_t timestamp = 0;
    double shunt_voltage = 0.0; // V
    double bus_voltage = 0.0;   // V
    double current = 0.0;       // A
    double power = 0.0;         // W
    int label = 0;              // 0 normal, 1 malicious

    std::array<double, 4> features() const {
        return {shunt_voltage, bus_voltage, current, power};
    }
};

constexpr int kFeatureCount = 4;
extern const char* const kDatasetHeader; // "timestamp,shunt_voltage_V,..."

struct TelemetryDataset {
    std::vector<LabeledSample> samples;
    std::string provenance;

    std::size_t size() const { return samples.size(); }
    std::size_t count_label(int label) const;
};

// Shortest round-trip decimal text for a double (and exact for integers).
std::string format_double(double v);

std::string dataset_to_csv(const TelemetryDataset& ds);
void write_dataset_csv(const TelemetryDataset& ds, const std::string& path);

// Throws DataError with 1-based line numbers for malformed headers or rows.
TelemetryDataset parse_dataset_csv(std::istream& in, const std::string& origin);
TelemetryDataset read_dataset_csv(const std::string& path);

// Parses one data row (no header). Returns false on blank lines.
bool parse_csv_row(const std::string& line, LabeledSample& out, std::string& error);

// Order-sensitive hash of every sample field; identifies the exact dataset a
// model was trained on.
std::uint64_t dataset_fingerprint(const TelemetryDataset& ds);

} // namespace kan

#endif
