#include "kan/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "kan/errors.hpp"
#include "kan/rng.hpp"

namespace kan {

namespace {

using nlohmann::json;

// Seed-stream tags. Each consumer of the base seed hashes through a distinct
// tag so adding a new consumer never shifts an existing stream.
constexpr std::uint64_t kSegmentSeedTag = 0x7e1e;
constexpr std::uint64_t kShuffleSeedTag = 0x5e6f;
constexpr std::uint64_t kInjectSeedTag = 1;

} // namespace

void ChargerProfile::validate() const {
    if (!(r_internal > 0.0) || !(k_temp > 0.0) || !(r_shunt > 0.0)) {
        throw std::invalid_argument("charger profile: all resistances must be > 0");
    }
    if (!(i_idle < i_session)) {
        throw std::invalid_argument("charger profile: i_idle must be < i_session");
    }
    if (!(i_idle > 0.0)) {
        throw std::invalid_argument("charger profile: i_idle must be > 0");
    }
    if (noise_shunt_v < 0.0 || noise_bus_v < 0.0 || noise_current_a < 0.0) {
        throw std::invalid_argument("charger profile: noise scales must be >= 0");
    }
    if (!(v_oc > 0.0)) {
        throw std::invalid_argument("charger profile: v_oc must be > 0");
    }
}

const char* attack_kind_name(AttackKind kind) {
    switch (kind) {
    case AttackKind::backdoor: return "backdoor";
    case AttackKind::cryptojacking: return "cryptojacking";
    case AttackKind::syn_flood: return "syn-flood";
    case AttackKind::syn_stealth: return "syn-stealth";
    case AttackKind::tcp_flood: return "tcp-flood";
    case AttackKind::dos: return "dos";
    case AttackKind::stealthy_mimic: return "stealthy-mimic";
    }
    throw std::invalid_argument("unknown attack kind value");
}

const std::vector<AttackKind>& all_attack_kinds() {
    static const std::vector<AttackKind> kinds = {
        AttackKind::backdoor,    AttackKind::cryptojacking,
        AttackKind::syn_flood,   AttackKind::syn_stealth,
        AttackKind::tcp_flood,   AttackKind::dos,
        AttackKind::stealthy_mimic,
    };
    return kinds;
}

AttackKind parse_attack_kind(const std::string& name) {
    for (AttackKind k : all_attack_kinds()) {
        if (name == attack_kind_name(k)) return k;
    }
    throw std::invalid_argument("unknown attack kind: '" + name + "'");
}

std::map<AttackKind, double> default_attack_mix() {
    return {
        {AttackKind::backdoor, 0.08},  {AttackKind::cryptojacking, 0.22},
        {AttackKind::syn_flood, 0.18}, {AttackKind::syn_stealth, 0.12},
        {AttackKind::tcp_flood, 0.18}, {AttackKind::dos, 0.12},
        {AttackKind::stealthy_mimic, 0.10},
    };
}

std::map<AttackKind, double> parse_attack_mix(const std::string& text) {
    std::map<AttackKind, double> mix;
    std::stringstream ss(text);
    std::string entry;
    while (std::getline(ss, entry, ',')) {
        if (entry.empty()) continue;
        auto eq = entry.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("attack mix entry '" + entry +
                                        "' is not of the form kind=fraction");
        }
        AttackKind kind = parse_attack_kind(entry.substr(0, eq));
        std::size_t used = 0;
        double frac;
        try {
            frac = std::stod(entry.substr(eq + 1), &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("attack mix entry '" + entry +
                                        "' has a malformed fraction");
        }
        if (used != entry.size() - eq - 1 || !std::isfinite(frac)) {
            throw std::invalid_argument("attack mix entry '" + entry +
                                        "' has a malformed fraction");
        }
        if (!mix.emplace(kind, frac).second) {
            throw std::invalid_argument("attack mix lists '" +
                                        std::string(attack_kind_name(kind)) +
                                        "' twice");
        }
    }
    if (mix.empty()) {
        throw std::invalid_argument("attack mix is empty");
    }
    return mix;
}

void SimConfig::validate() const {
    profile.validate();
    if (n_normal_seconds < 100 || n_attack_seconds < 100) {
        throw std::invalid_argument("sim config: both class totals must be >= 100 seconds");
    }
    const auto& mix = attack_mix.empty() ? default_attack_mix() : attack_mix;
    double sum = 0.0;
    for (const auto& [kind, frac] : mix) {
        (void)kind;
        if (!(frac >= 0.0) || !std::isfinite(frac)) {
            throw std::invalid_argument("sim config: mix fractions must be finite and >= 0");
        }
        sum += frac;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("sim config: mix fractions must sum to 1");
    }
}

std::vector<LabeledSample> gen_normal(const ChargerProfile& profile,
                                      std::size_t seconds, std::uint64_t seed) {
    profile.validate();
    if (seconds < 1) {
        throw std::invalid_argument("gen_normal: seconds must be >= 1");
    }
    Rng rng(seed);

    // The initial state is drawn from the stationary occupancy of the
    // idle/charging alternation so short segments are not biased toward one
    // regime: charging holds for 600 of every 720 expected seconds.
    const double p_charging =
        kChargingMeanSeconds / (kChargingMeanSeconds + kIdleMeanSeconds);
    bool charging = rng.uniform01() < p_charging;
    std::int64_t remaining =
        rng.geometric(charging ? kChargingMeanSeconds : kIdleMeanSeconds);

    std::vector<LabeledSample> out;
    out.reserve(seconds);
    for (std::size_t t = 0; t < seconds; ++t) {
        if (remaining <= 0) {
            charging = !charging;
            remaining = rng.geometric(charging ? kChargingMeanSeconds : kIdleMeanSeconds);
        }
        --remaining;

        // Fixed draw order (current, bus, shunt) keeps streams reproducible.
        const double i = (charging ? profile.i_session : profile.i_idle) +
                         rng.normal(0.0, profile.noise_current_a);
        const double v = profile.bus_voltage_for(i) + rng.normal(0.0, profile.noise_bus_v);
        const double shunt = i * profile.r_shunt + rng.normal(0.0, profile.noise_shunt_v);

        LabeledSample s;
        s.timestamp = static_cast<std::int64_t>(t);
        s.shunt_voltage = shunt;
        s.bus_voltage = v;
        s.current = i;
        s.power = v * i;
        s.label = 0;
        out.push_back(s);
    }
    return out;
}

std::vector<LabeledSample> inject_attack(const std::vector<LabeledSample>& samples,
                                         const AttackSpec& spec,
                                         const ChargerProfile& profile,
                                         std::uint64_t seed) {
    profile.validate();
    if (!(spec.magnitude >= 0.0)) {
        throw std::invalid_argument("inject_attack: magnitude must be >= 0");
    }
    if (spec.duration < 1) {
        throw WindowOutOfRangeError("inject_attack: duration must be >= 1 second");
    }
    if (spec.start >= samples.size() ||
        spec.duration > samples.size() - spec.start) {
        throw WindowOutOfRangeError(
            "inject_attack: window [" + std::to_string(spec.start) + ", " +
            std::to_string(spec.start + spec.duration) + ") exceeds stream of " +
            std::to_string(samples.size()) + " samples");
    }

    std::vector<LabeledSample> out = samples;
    Rng rng(seed); // consumed only by the dos jitter
    const double r_eff = profile.effective_resistance();
    for (std::size_t off = 0; off < spec.duration; ++off) {
        LabeledSample& s = out[spec.start + off];

        // Unit current delta; the magnitude scales it linearly so the whole
        // additive signature is proportional to the spec's magnitude.
        double unit = 0.0;
        switch (spec.kind) {
        case AttackKind::cryptojacking:
            unit = 0.30; // sustained mining load
            break;
        case AttackKind::syn_flood:
        case AttackKind::tcp_flood:
            // Bursty oscillation: square wave, period 4 s, amplitude 0.15 A.
            unit = (off % 4 < 2) ? 0.15 : -0.15;
            break;
        case AttackKind::backdoor:
            // Short beacon spike: 1 s of +0.5 A every 17 s.
            unit = (off % 17 == 0) ? 0.5 : 0.0;
            break;
        case AttackKind::syn_stealth:
        case AttackKind::stealthy_mimic:
            unit = 0.05; // sits near the sensor noise floor
            break;
        case AttackKind::dos:
            // Collapse toward the idle draw plus high-frequency jitter.
            unit = (profile.i_idle - s.current) + rng.normal(0.0, kDosJitterStd);
            break;
        }

        const double delta = spec.magnitude * unit;
        s.current += delta;
        s.bus_voltage -= r_eff * delta;
        s.shunt_voltage += profile.r_shunt * delta;
        s.power = s.bus_voltage * s.current;
        s.label = 1;
    }
    return out;
}

namespace {

struct SegmentPlan {
    bool is_attack = false;
    AttackKind kind = AttackKind::cryptojacking;
    std::size_t length = 0;
};

void append_chunks(std::vector<SegmentPlan>& plan, bool is_attack,
                   AttackKind kind, std::size_t total, std::size_t chunk) {
    while (total > 0) {
        std::size_t len = std::min(total, chunk);
        plan.push_back({is_attack, kind, len});
        total -= len;
    }
}

json profile_to_json(const ChargerProfile& p) {
    return json{
        {"v_oc", p.v_oc},
        {"r_internal", p.r_internal},
        {"k_temp", p.k_temp},
        {"r_shunt", p.r_shunt},
        {"i_idle", p.i_idle},
        {"i_session", p.i_session},
        {"noise_shunt_v", p.noise_shunt_v},
        {"noise_bus_v", p.noise_bus_v},
        {"noise_current_a", p.noise_current_a},
    };
}

} // namespace

GenResult gen_dataset_detailed(const SimConfig& cfg) {
    cfg.validate();
    const auto mix = cfg.attack_mix.empty() ? default_attack_mix() : cfg.attack_mix;

    // Per-kind second budgets via cumulative rounding, so the budgets sum to
    // the configured attack total exactly.
    std::vector<std::pair<AttackKind, std::size_t>> kind_seconds;
    double acc = 0.0;
    std::size_t assigned = 0;
    for (const auto& [kind, frac] : mix) {
        acc += frac;
        auto target = static_cast<std::size_t>(
            std::llround(acc * static_cast<double>(cfg.n_attack_seconds)));
        target = std::min(target, cfg.n_attack_seconds);
        kind_seconds.emplace_back(kind, target - assigned);
        assigned = target;
    }
    kind_seconds.back().second += cfg.n_attack_seconds - assigned;

    std::vector<SegmentPlan> plan;
    append_chunks(plan, false, AttackKind::cryptojacking, cfg.n_normal_seconds,
                  kNormalSegmentSeconds);
    for (const auto& [kind, seconds] : kind_seconds) {
        append_chunks(plan, true, kind, seconds, kAttackSegmentSeconds);
    }

    // Each segment's seed is derived from its plan position, never from
    // anything time- or order-dependent, so segments could be generated in
    // parallel and still reproduce this exact stream.
    const std::uint64_t segment_base = derive_seed(cfg.seed, kSegmentSeedTag);
    std::vector<std::vector<LabeledSample>> pieces(plan.size());
    for (std::size_t p = 0; p < plan.size(); ++p) {
        const std::uint64_t seg_seed = derive_seed(segment_base, p);
        pieces[p] = gen_normal(cfg.profile, plan[p].length, seg_seed);
        if (plan[p].is_attack) {
            AttackSpec spec;
            spec.kind = plan[p].kind;
            spec.magnitude = 1.0;
            spec.start = 0;
            spec.duration = plan[p].length;
            pieces[p] = inject_attack(pieces[p], spec, cfg.profile,
                                      derive_seed(seg_seed, kInjectSeedTag));
        }
    }

    std::vector<std::size_t> order(plan.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleSeedTag));
    shuffle_rng.shuffle(order);

    GenResult result;
    result.dataset.samples.reserve(cfg.n_normal_seconds + cfg.n_attack_seconds);
    for (std::size_t p : order) {
        SegmentInfo info;
        info.is_attack = plan[p].is_attack;
        info.kind = plan[p].kind;
        info.start = result.dataset.samples.size();
        info.length = pieces[p].size();
        result.segments.push_back(info);
        if (info.is_attack) {
            result.kind_counts[info.kind] += info.length;
        }
        for (const LabeledSample& s : pieces[p]) {
            LabeledSample copy = s;
            copy.timestamp = static_cast<std::int64_t>(result.dataset.samples.size());
            result.dataset.samples.push_back(copy);
        }
    }

    json mix_json = json::object();
    for (const auto& [kind, frac] : mix) {
        mix_json[attack_kind_name(kind)] = frac;
    }
    json config_echo = {
        {"seed", cfg.seed},
        {"normal_seconds", cfg.n_normal_seconds},
        {"attack_seconds", cfg.n_attack_seconds},
        {"attack_mix", mix_json},
        {"profile", profile_to_json(cfg.profile)},
    };
    const std::string canonical = config_echo.dump();
    result.config_hash = fnv1a(canonical.data(), canonical.size());

    json counts_by_kind = json::object();
    for (const auto& [kind, n] : result.kind_counts) {
        counts_by_kind[attack_kind_name(kind)] = n;
    }
    json segments_json = json::array();
    for (const SegmentInfo& seg : result.segments) {
        segments_json.push_back(json{
            {"kind", seg.is_attack ? attack_kind_name(seg.kind) : "normal"},
            {"start", seg.start},
            {"length", seg.length},
        });
    }

    char hash_text[19];
    std::snprintf(hash_text, sizeof hash_text, "0x%016llx",
                  static_cast<unsigned long long>(result.config_hash));
    json provenance = {
        {"format_version", 1},
        {"config", config_echo},
        {"config_hash", hash_text},
        {"sample_counts",
         json{{"normal", result.dataset.count_label(0)},
              {"attack", result.dataset.count_label(1)},
              {"attack_by_kind", counts_by_kind}}},
        {"segments", segments_json},
    };
    result.dataset.provenance = provenance.dump(2);
    return result;
}

TelemetryDataset gen_dataset(const SimConfig& cfg) {
    return gen_dataset_detailed(cfg).dataset;
}

ChargerProfile profile_from_json_text(const std::string& text,
                                      const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(origin + ": invalid profile JSON: " + e.what());
    }
    if (!j.is_object()) {
        throw DataError(origin + ": profile JSON must be an object");
    }
    ChargerProfile p;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) {
            throw DataError(origin + ": profile key '" + key + "' must be a number");
        }
        const double v = value.get<double>();
        if (key == "v_oc") p.v_oc = v;
        else if (key == "r_internal") p.r_internal = v;
        else if (key == "k_temp") p.k_temp = v;
        else if (key == "r_shunt") p.r_shunt = v;
        else if (key == "i_idle") p.i_idle = v;
        else if (key == "i_session") p.i_session = v;
        else if (key == "noise_shunt_v") p.noise_shunt_v = v;
        else if (key == "noise_bus_v") p.noise_bus_v = v;
        else if (key == "noise_current_a") p.noise_current_a = v;
        else throw DataError(origin + ": unknown profile key '" + key + "'");
    }
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw DataError(origin + ": " + e.what());
    }
    return p;
}

std::string profile_to_json_text(const ChargerProfile& profile) {
    return profile_to_json(profile).dump(2);
}

} // namespace kan
