#pragma once

// Traffic ledger, per-frame timing, balance ratio, speedups and the
// canonical report / CSV encodings.

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrsim/errors.hpp"
#include "rrsim/machine.hpp"

namespace rrsim {

enum class TrafficCategory : std::uint8_t { texture_remote, composition, preallocation_copy, command, ztest, vertex };

inline constexpr std::size_t kTrafficCategories = 6;

inline constexpr std::string_view category_name(TrafficCategory c) {
    constexpr std::array<std::string_view, kTrafficCategories> names{
        "texture_remote", "composition", "preallocation_copy", "command", "ztest", "vertex"};
    return names[static_cast<std::size_t>(c)];
}

inline constexpr std::array<TrafficCategory, kTrafficCategories> kAllCategories{
    TrafficCategory::texture_remote, TrafficCategory::composition, TrafficCategory::preallocation_copy,
    TrafficCategory::command,        TrafficCategory::ztest,       TrafficCategory::vertex};

/// Bytes sent over each directed GPM link, by category. Local traffic never
/// enters the ledger.
class TrafficLedger {
public:
    explicit TrafficLedger(std::uint32_t gpm_count = 1)
        : gpms_(gpm_count), bytes_(static_cast<std::size_t>(gpm_count) * gpm_count * kTrafficCategories, 0) {}

    void record(GpmId src, GpmId dst, TrafficCategory cat, std::uint64_t bytes) {
        if (src == dst) throw AccountingError("ledger record with src == dst");
        if (src >= gpms_ || dst >= gpms_) throw AccountingError("ledger record for unknown GPM");
        bytes_[slot(src, dst, cat)] += bytes;
        recorded_ += bytes;
    }

    std::uint32_t gpm_count() const { return gpms_; }
    std::uint64_t bytes(GpmId src, GpmId dst, TrafficCategory cat) const { return bytes_.at(slot(src, dst, cat)); }

    std::uint64_t pair_total(GpmId src, GpmId dst) const {
        std::uint64_t t = 0;
        for (auto c : kAllCategories) t += bytes(src, dst, c);
        return t;
    }

    std::uint64_t total(TrafficCategory cat) const {
        std::uint64_t t = 0;
        for (GpmId s = 0; s < gpms_; ++s)
            for (GpmId d = 0; d < gpms_; ++d)
                if (s != d) t += bytes(s, d, cat);
        return t;
    }

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (auto c : kAllCategories) t += total(c);
        return t;
    }

    /// Running sum of every record() call.
    std::uint64_t recorded() const { return recorded_; }

    friend bool operator==(const TrafficLedger&, const TrafficLedger&) = default;

private:
    std::size_t slot(GpmId src, GpmId dst, TrafficCategory cat) const {
        return (static_cast<std::size_t>(src) * gpms_ + dst) * kTrafficCategories + static_cast<std::size_t>(cat);
    }

    std::uint32_t gpms_;
    std::vector<std::uint64_t> bytes_;
    std::uint64_t recorded_ = 0;
};

struct BalanceResult {
    double ratio = 1.0;
    bool single_gpm = false;  // at most one GPM did work; ratio forced to 1
};

/// Worst over best completion among GPMs that did work.
inline BalanceResult balance_ratio(std::span<const Cycle> completions) {
    Cycle best = 0;
    Cycle worst = 0;
    std::size_t working = 0;
    for (Cycle c : completions) {
        if (c == 0) continue;
        best = working == 0 ? c : std::min(best, c);
        worst = std::max(worst, c);
        ++working;
    }
    if (working <= 1) return {1.0, true};
    return {static_cast<double>(worst) / static_cast<double>(best), false};
}

struct FrameMetrics {
    std::int64_t frame_id = 0;
    Cycle start_cycle = 0;
    Cycle latency_cycles = 0;
    std::vector<Cycle> completion_cycles;  // per GPM, relative to frame start; 0 = idle
    std::vector<Cycle> busy_cycles;        // per GPM shader-core busy time
    BalanceResult balance;
    std::uint64_t rendered_pixels = 0;  // both views
    std::uint64_t composed_pixels = 0;
    std::uint64_t batches = 0;
};

struct ScheduleEntry {
    std::int64_t frame_id = 0;
    std::uint32_t batch_id = 0;
    GpmId gpm = 0;
    Cycle dispatch_cycle = 0;
    Cycle start_cycle = 0;
    Cycle end_cycle = 0;
    Cycle predicted_cycles = 0;         // c0 * triangles; 0 before calibration
    Cycle predicted_linear_cycles = 0;  // c1 * tv + c2 * pixels; 0 before calibration
    Cycle measured_cycles = 0;          // shader-core cycles spent on the batch
    std::vector<GpmId> slices;          // participants of a straggler split
};

struct PredictorSummary {
    double c0 = 0.0;
    double c1 = 0.0;
    double c2 = 0.0;
    bool calibrated = false;
    bool fallback = false;
};

struct MetricsReport {
    std::string scheme;
    MachineConfig config;
    std::vector<FrameMetrics> frames;
    TrafficLedger ledger{1};
    std::vector<ScheduleEntry> schedule;
    std::optional<PredictorSummary> predictor;
    Cycle makespan_cycles = 0;
    std::uint64_t expected_pixels = 0;  // sum over objects of 2 * pixels_per_view

    double single_frame_latency() const {
        if (frames.empty()) return 0.0;
        double sum = 0.0;
        for (const auto& f : frames) sum += static_cast<double>(f.latency_cycles);
        return sum / static_cast<double>(frames.size());
    }
    Cycle max_frame_latency() const {
        Cycle m = 0;
        for (const auto& f : frames) m = std::max(m, f.latency_cycles);
        return m;
    }
    double frames_per_megacycle() const {
        if (makespan_cycles == 0) return 0.0;
        return static_cast<double>(frames.size()) * 1e6 / static_cast<double>(makespan_cycles);
    }
    double balance_ratio() const {
        if (frames.empty()) return 1.0;
        double sum = 0.0;
        for (const auto& f : frames) sum += f.balance.ratio;
        return sum / static_cast<double>(frames.size());
    }
    std::uint64_t rendered_pixels() const {
        std::uint64_t t = 0;
        for (const auto& f : frames) t += f.rendered_pixels;
        return t;
    }
    std::uint64_t composed_pixels() const {
        std::uint64_t t = 0;
        for (const auto& f : frames) t += f.composed_pixels;
        return t;
    }
};

enum class SpeedupMetric { single_frame_latency, throughput };

/// Speedup of `a` over `b`: b/a for latency, a/b for throughput.
inline double speedup(const MetricsReport& a, const MetricsReport& b, SpeedupMetric metric) {
    if (metric == SpeedupMetric::single_frame_latency) {
        const double la = a.single_frame_latency();
        if (la == 0.0) throw DomainError("speedup: zero latency in numerator report");
        return b.single_frame_latency() / la;
    }
    const double tb = b.frames_per_megacycle();
    if (tb == 0.0) throw DomainError("speedup: zero throughput in reference report");
    return a.frames_per_megacycle() / tb;
}

// ---------------------------------------------------------------------------
// Encodings

inline nlohmann::json config_to_json(const MachineConfig& cfg) {
    nlohmann::json j = nlohmann::json::object();
    visit_fields(cfg, [&](const char* name, const auto& v) { j[name] = v; });
    return j;
}

inline nlohmann::json report_to_json(const MetricsReport& r) {
    using nlohmann::json;
    json j;
    j["scheme"] = r.scheme;
    j["config"] = config_to_json(r.config);

    json frames = json::array();
    for (const auto& f : r.frames) {
        json jf;
        jf["frame_id"] = f.frame_id;
        jf["start_cycle"] = f.start_cycle;
        jf["single_frame_latency_cycles"] = f.latency_cycles;
        jf["completion_cycles"] = f.completion_cycles;
        jf["busy_cycles"] = f.busy_cycles;
        jf["balance_ratio"] = f.balance.ratio;
        jf["balance_single_gpm"] = f.balance.single_gpm;
        jf["rendered_pixels"] = f.rendered_pixels;
        jf["composed_pixels"] = f.composed_pixels;
        jf["batches"] = f.batches;
        frames.push_back(std::move(jf));
    }
    j["frames"] = std::move(frames);

    json traffic;
    traffic["total_link_bytes"] = r.ledger.total();
    for (auto c : kAllCategories) traffic["by_category"][std::string(category_name(c))] = r.ledger.total(c);
    json pairs = json::array();
    for (GpmId s = 0; s < r.ledger.gpm_count(); ++s)
        for (GpmId d = 0; d < r.ledger.gpm_count(); ++d)
            if (s != d && r.ledger.pair_total(s, d) > 0) pairs.push_back({{"src", s}, {"dst", d}, {"bytes", r.ledger.pair_total(s, d)}});
    traffic["pairs"] = std::move(pairs);
    j["traffic"] = std::move(traffic);

    json agg;
    agg["single_frame_latency_cycles"] = r.single_frame_latency();
    agg["max_frame_latency_cycles"] = r.max_frame_latency();
    agg["makespan_cycles"] = r.makespan_cycles;
    agg["frames_per_megacycle"] = r.frames_per_megacycle();
    agg["balance_ratio"] = r.balance_ratio();
    agg["rendered_pixels"] = r.rendered_pixels();
    agg["composed_pixels"] = r.composed_pixels();
    agg["expected_pixels"] = r.expected_pixels;
    j["aggregate"] = std::move(agg);

    if (r.predictor) {
        j["predictor"] = {{"c0", r.predictor->c0},
                          {"c1", r.predictor->c1},
                          {"c2", r.predictor->c2},
                          {"calibrated", r.predictor->calibrated},
                          {"fallback", r.predictor->fallback}};
    }

    json sched = json::array();
    for (const auto& e : r.schedule) {
        sched.push_back({{"frame", e.frame_id},
                         {"batch", e.batch_id},
                         {"gpm", e.gpm},
                         {"dispatch", e.dispatch_cycle},
                         {"start", e.start_cycle},
                         {"end", e.end_cycle},
                         {"predicted", e.predicted_cycles},
                         {"predicted_linear", e.predicted_linear_cycles},
                         {"measured", e.measured_cycles},
                         {"slices", e.slices}});
    }
    j["schedule"] = std::move(sched);
    return j;
}

/// Canonical report text: key-sorted JSON, two-space indent, trailing LF.
inline std::string serialize_report(const MetricsReport& r) { return report_to_json(r).dump(2) + "\n"; }

inline std::string csv_header() {
    std::string h = "scheme,row,frame_id,latency_cycles,balance_ratio,rendered_pixels,total_link_bytes";
    for (auto c : kAllCategories) h += "," + std::string(category_name(c));
    return h + ",frames_per_megacycle\n";
}

/// One row per frame plus one aggregate row. Per-frame rows leave the
/// traffic and throughput columns empty (both are run-wide).
inline std::string report_to_csv(const MetricsReport& r) {
    std::ostringstream out;
    out << csv_header();
    const auto num = [](double v) { return nlohmann::json(v).dump(); };
    for (const auto& f : r.frames) {
        out << r.scheme << ",frame," << f.frame_id << ',' << f.latency_cycles << ',' << num(f.balance.ratio) << ','
            << f.rendered_pixels << ",";
        for (std::size_t i = 0; i <= kTrafficCategories; ++i) out << ',';
        out << '\n';
    }
    out << r.scheme << ",aggregate,," << num(r.single_frame_latency()) << ',' << num(r.balance_ratio()) << ','
        << r.rendered_pixels() << ',' << r.ledger.total();
    for (auto c : kAllCategories) out << ',' << r.ledger.total(c);
    out << ',' << num(r.frames_per_megacycle()) << '\n';
    return out.str();
}

}  // namespace rrsim
