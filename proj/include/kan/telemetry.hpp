#ifndef KAN_TELEMETRY_HPP
#define KAN_TELEMETRY_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kan/dataset.hpp"

namespace kan {

// Electrical model of the monitored charger at USB-wattmeter scale (bus is
// nominally ~5 V). Bus voltage follows V = v_oc - I * (r_internal + k_temp)
// and the shunt reading is I * r_shunt; power is always bus voltage times
// current, so the emitted rows stay physically consistent even under noise.
struct ChargerProfile {
    double v_oc = 5.2;        // open-circuit voltage, V
    double r_internal = 0.12; // internal resistance, ohm
    double k_temp = 0.03;     // temperature-dependent resistance term, ohm
    double r_shunt = 0.1;     // measurement shunt, ohm
    double i_idle = 0.35;     // draw while no vehicle session is active, A
    double i_session = 0.75;  // draw during an active charging session, A

    // Per-feature Gaussian measurement noise. Power has no noise knob of its
    // own; its spread derives from the noisy voltage and current.
    double noise_shunt_v = 0.002;
    double noise_bus_v = 0.02;
    double noise_current_a = 0.01;

    double effective_resistance() const { return r_internal + k_temp; }
    double bus_voltage_for(double current) const {
        return v_oc - current * effective_resistance();
    }

    // Throws std::invalid_argument on non-positive resistances, out-of-order
    // currents, or negative noise scales.
    void validate() const;
};

enum class AttackKind {
    backdoor,
    cryptojacking,
    syn_flood,
    syn_stealth,
    tcp_flood,
    dos,
    stealthy_mimic,
};

constexpr int kAttackKindCount = 7;

const char* attack_kind_name(AttackKind kind);
AttackKind parse_attack_kind(const std::string& name); // throws std::invalid_argument
const std::vector<AttackKind>& all_attack_kinds();

// One attack window over an existing telemetry stream. The magnitude scales
// the whole additive signature linearly, so 0 means "present but inert".
struct AttackSpec {
    AttackKind kind = AttackKind::cryptojacking;
    double magnitude = 1.0;
    std::size_t start = 0;    // offset into the stream, seconds
    std::size_t duration = 0; // window length, seconds
};

// Session state machine timing for normal traffic.
inline constexpr double kIdleMeanSeconds = 120.0;
inline constexpr double kChargingMeanSeconds = 600.0;

// Generator segmentation. Normal traffic is produced in long session-scale
// chunks, attacks in shorter bursts, then the segment order is shuffled.
inline constexpr std::size_t kNormalSegmentSeconds = 120;
inline constexpr std::size_t kAttackSegmentSeconds = 60;

// Jitter scale of the dos signature's high-frequency component, A.
inline constexpr double kDosJitterStd = 0.08;

struct SimConfig {
    std::uint64_t seed = 42;
    std::size_t n_normal_seconds = 1436;
    std::size_t n_attack_seconds = 10094;
    std::map<AttackKind, double> attack_mix; // empty means default_attack_mix()
    ChargerProfile profile;

    // Throws std::invalid_argument unless totals are >= 100 s each and the
    // mix fractions are non-negative and sum to 1.
    void validate() const;
};

std::map<AttackKind, double> default_attack_mix();

// Parses "kind=frac,kind=frac,..." (e.g. "cryptojacking=0.7,dos=0.3").
// Throws std::invalid_argument on unknown kinds, bad numbers, or duplicates.
std::map<AttackKind, double> parse_attack_mix(const std::string& text);

// Normal charging telemetry at 1 Hz: idle/charging epochs with geometric
// lengths, every row label 0, deterministic per (profile, seconds, seed).
std::vector<LabeledSample> gen_normal(const ChargerProfile& profile,
                                      std::size_t seconds, std::uint64_t seed);

// Returns a copy of the stream with the attack signature added inside
// [start, start+duration): the kind-specific current delta is applied and the
// bus voltage, shunt voltage and power are re-derived from the same battery
// model, so attacked rows stay physically consistent. Every in-window row is
// labeled 1 regardless of magnitude (ground truth is presence, not
// detectability). Throws WindowOutOfRangeError if the window does not fit.
std::vector<LabeledSample> inject_attack(const std::vector<LabeledSample>& samples,
                                         const AttackSpec& spec,
                                         const ChargerProfile& profile,
                                         std::uint64_t seed);

struct SegmentInfo {
    bool is_attack = false;
    AttackKind kind = AttackKind::cryptojacking; // meaningful when is_attack
    std::size_t start = 0;  // index of the segment's first row in the stream
    std::size_t length = 0; // rows
};

struct GenResult {
    TelemetryDataset dataset;
    std::vector<SegmentInfo> segments;            // in emitted order
    std::map<AttackKind, std::size_t> kind_counts; // attack rows per kind
    std::uint64_t config_hash = 0;
};

// Full dataset build: plans normal/attack segments hitting the configured
// totals exactly, generates each segment from a position-derived seed,
// shuffles the segment order, re-stamps timestamps sequentially and attaches
// a JSON provenance record (config echo, hash, per-kind counts, segment map).
GenResult gen_dataset_detailed(const SimConfig& cfg);
TelemetryDataset gen_dataset(const SimConfig& cfg);

// JSON helpers for the CLI --profile-file flag. Missing keys keep their
// defaults; unknown keys raise DataError naming the offending key.
ChargerProfile profile_from_json_text(const std::string& text,
                                      const std::string& origin);
std::string profile_to_json_text(const ChargerProfile& profile);

} // namespace kan

#endif
