#pragma once

// NUMA multi-GPM topology: rates, bandwidths, first-touch page placement
// with duplication, per-GPM LRU remote-page caches and link timelines.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rrsim/errors.hpp"

namespace rrsim {

using Cycle = std::uint64_t;
using GpmId = std::uint32_t;

inline constexpr std::uint32_t kMaxGpms = 64;

/// Machine description plus the runtime knobs of the pipeline, batching
/// and distribution models. Defaults reproduce the 4-GPM baseline.
struct MachineConfig {
    std::uint32_t gpm_count = 4;
    std::uint32_t sm_per_gpm = 8;
    std::uint32_t rop_per_gpm = 8;
    double clock_ghz = 1.0;
    double local_dram_gbps = 1024.0;  // 1 TB/s
    double link_gbps = 64.0;          // per directed GPM pair
    double vertex_rate = 8.0;         // vertices / cycle / GPM
    double fragment_rate = 64.0;      // fragments / cycle / GPM
    double raster_rate = 256.0;       // pixels / cycle / GPM (16x16 tile per cycle)
    double rop_pixels_per_cycle = 4.0;
    std::uint64_t page_bytes = 4096;
    std::uint64_t remote_cache_bytes = 2ull << 20;

    double smp_reproject_cost = 0.25;  // second-view projection, relative to one vertex transform
    std::uint64_t vertex_bytes = 32;
    std::uint64_t command_bytes = 256;         // per object per GPM assignment
    std::uint64_t ztest_bytes_per_pixel = 4;
    std::uint64_t fb_bytes_per_pixel = 4;
    std::uint64_t baseline_chunk_triangles = 256;

    std::uint64_t batch_triangle_limit = 4096;
    double tsl_threshold = 0.5;
    std::uint32_t batch_lookahead = 64;
    std::uint32_t batch_queue_depth = 4;
    std::uint32_t calibration_batches = 8;

    friend bool operator==(const MachineConfig&, const MachineConfig&) = default;
};

/// Visits every field as (name, reference). Drives config files, CLI
/// overrides and report echoes from one list.
template <typename Config, typename Visitor>
void visit_fields(Config& c, Visitor&& v) {
    v("gpm_count", c.gpm_count);
    v("sm_per_gpm", c.sm_per_gpm);
    v("rop_per_gpm", c.rop_per_gpm);
    v("clock_ghz", c.clock_ghz);
    v("local_dram_gbps", c.local_dram_gbps);
    v("link_gbps", c.link_gbps);
    v("vertex_rate", c.vertex_rate);
    v("fragment_rate", c.fragment_rate);
    v("raster_rate", c.raster_rate);
    v("rop_pixels_per_cycle", c.rop_pixels_per_cycle);
    v("page_bytes", c.page_bytes);
    v("remote_cache_bytes", c.remote_cache_bytes);
    v("smp_reproject_cost", c.smp_reproject_cost);
    v("vertex_bytes", c.vertex_bytes);
    v("command_bytes", c.command_bytes);
    v("ztest_bytes_per_pixel", c.ztest_bytes_per_pixel);
    v("fb_bytes_per_pixel", c.fb_bytes_per_pixel);
    v("baseline_chunk_triangles", c.baseline_chunk_triangles);
    v("batch_triangle_limit", c.batch_triangle_limit);
    v("tsl_threshold", c.tsl_threshold);
    v("batch_lookahead", c.batch_lookahead);
    v("batch_queue_depth", c.batch_queue_depth);
    v("calibration_batches", c.calibration_batches);
}

inline void validate_config(const MachineConfig& c) {
    auto positive = [](const char* name, double v) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(name) + " must be positive");
    };
    if (c.gpm_count == 0 || c.gpm_count > kMaxGpms)
        throw ConfigError("gpm_count must lie in [1, " + std::to_string(kMaxGpms) + "]");
    positive("sm_per_gpm", c.sm_per_gpm);
    positive("rop_per_gpm", c.rop_per_gpm);
    positive("clock_ghz", c.clock_ghz);
    positive("local_dram_gbps", c.local_dram_gbps);
    positive("link_gbps", c.link_gbps);
    positive("vertex_rate", c.vertex_rate);
    positive("fragment_rate", c.fragment_rate);
    positive("raster_rate", c.raster_rate);
    positive("rop_pixels_per_cycle", c.rop_pixels_per_cycle);
    positive("page_bytes", static_cast<double>(c.page_bytes));
    positive("vertex_bytes", static_cast<double>(c.vertex_bytes));
    positive("fb_bytes_per_pixel", static_cast<double>(c.fb_bytes_per_pixel));
    positive("baseline_chunk_triangles", static_cast<double>(c.baseline_chunk_triangles));
    positive("batch_triangle_limit", static_cast<double>(c.batch_triangle_limit));
    positive("batch_lookahead", c.batch_lookahead);
    positive("batch_queue_depth", c.batch_queue_depth);
    positive("calibration_batches", c.calibration_batches);
    if (!(c.smp_reproject_cost >= 0.0)) throw ConfigError("smp_reproject_cost must be non-negative");
    if (!(c.tsl_threshold >= 0.0 && c.tsl_threshold <= 1.0)) throw ConfigError("tsl_threshold must lie in [0, 1]");
    if (c.link_gbps > c.local_dram_gbps)
        throw ConfigError("link_gbps must not exceed local_dram_gbps (inverted NUMA configuration)");
}

enum class BandwidthKind { local, link };

/// GB/s at `clock_ghz` expressed as bytes per cycle.
inline double bandwidth_bytes_per_cycle(const MachineConfig& cfg, BandwidthKind kind) {
    const double gbps = kind == BandwidthKind::local ? cfg.local_dram_gbps : cfg.link_gbps;
    return gbps / cfg.clock_ghz;
}

/// Cycles to move `bytes` at `bytes_per_cycle`, rounded up.
inline Cycle transfer_cycles(std::uint64_t bytes, double bytes_per_cycle) {
    if (bytes == 0) return 0;
    return static_cast<Cycle>(std::ceil(static_cast<double>(bytes) / bytes_per_cycle - 1e-9));
}

/// One page of a texture.
struct PageId {
    std::uint64_t texture = 0;
    std::uint64_t index = 0;  // byte offset / page_bytes
    friend bool operator==(const PageId&, const PageId&) = default;
    friend auto operator<=>(const PageId&, const PageId&) = default;
};

struct PageIdHash {
    std::size_t operator()(const PageId& p) const noexcept {
        std::uint64_t h = p.texture * 0x9E3779B97F4A7C15ull ^ p.index * 0xC2B2AE3D27D4EB4Full;
        h ^= h >> 29;
        h *= 0xBF58476D1CE4E5B9ull;
        return static_cast<std::size_t>(h ^ (h >> 32));
    }
};

/// Pages covering bytes [first_byte, end_byte) of one texture.
inline void append_page_range(std::vector<PageId>& out, std::uint64_t texture, std::uint64_t first_byte,
                              std::uint64_t end_byte, std::uint64_t page_bytes) {
    if (end_byte <= first_byte) return;
    const std::uint64_t first = first_byte / page_bytes;
    const std::uint64_t last = (end_byte - 1) / page_bytes;
    for (std::uint64_t i = first; i <= last; ++i) out.push_back({texture, i});
}

struct AccessSummary {
    std::uint64_t local_bytes = 0;
    std::uint64_t remote_bytes = 0;
    std::uint64_t allocations = 0;
    std::uint64_t cache_hits = 0;
    std::map<GpmId, std::uint64_t> remote_by_source;  // home GPM -> bytes fetched over its link
};

struct CopySummary {
    std::uint64_t copied_bytes = 0;
    std::map<GpmId, std::uint64_t> source_map;  // source GPM -> bytes copied
};

/// Page-granular LRU set of remote pages.
class RemoteCache {
public:
    explicit RemoteCache(std::size_t capacity_pages = 0) : capacity_(capacity_pages) {}

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return index_.size(); }

    /// Refreshes `page` if present.
    bool hit(const PageId& page) {
        auto it = index_.find(page);
        if (it == index_.end()) return false;
        order_.splice(order_.begin(), order_, it->second);
        return true;
    }

    void insert(const PageId& page) {
        if (capacity_ == 0 || hit(page)) return;
        if (index_.size() == capacity_) {
            index_.erase(order_.back());
            order_.pop_back();
        }
        order_.push_front(page);
        index_.emplace(page, order_.begin());
    }

    bool contains(const PageId& page) const { return index_.contains(page); }

private:
    std::size_t capacity_;
    std::list<PageId> order_;  // most recent first
    std::unordered_map<PageId, std::list<PageId>::iterator, PageIdHash> index_;
};

struct GpmState {
    GpmId gpm_id = 0;
    Cycle timeline_cycles = 0;  // next free cycle of the shader core
    Cycle rop_cycles = 0;       // next free cycle of the ROPs
    Cycle busy_cycles = 0;
    RemoteCache remote_cache;
};

enum class PlacementPolicy {
    first_touch,
    // Every GPM owns a private segment: all touches are local (AFR).
    segmented,
};

class Machine {
public:
    struct PageEntry {
        GpmId home = 0;
        std::uint64_t holders = 0;  // bit per GPM; more than one bit = duplicated
        bool duplicated() const { return std::popcount(holders) > 1; }
    };

    explicit Machine(MachineConfig cfg, PlacementPolicy policy = PlacementPolicy::first_touch)
        : cfg_(std::move(cfg)), policy_(policy) {
        validate_config(cfg_);
        const auto cache_pages = static_cast<std::size_t>(cfg_.remote_cache_bytes / cfg_.page_bytes);
        for (GpmId g = 0; g < cfg_.gpm_count; ++g) {
            GpmState s;
            s.gpm_id = g;
            s.remote_cache = RemoteCache(cache_pages);
            gpms_.push_back(std::move(s));
        }
        link_free_.assign(static_cast<std::size_t>(cfg_.gpm_count) * cfg_.gpm_count, 0);
    }

    const MachineConfig& config() const { return cfg_; }
    std::uint32_t gpm_count() const { return cfg_.gpm_count; }
    PlacementPolicy policy() const { return policy_; }
    GpmState& gpm(GpmId g) { return gpms_.at(g); }
    const GpmState& gpm(GpmId g) const { return gpms_.at(g); }
    const std::unordered_map<PageId, PageEntry, PageIdHash>& pages() const { return pages_; }

    /// First-touch access of a set of distinct pages by `g`.
    AccessSummary touch_pages(GpmId g, std::span<const PageId> pages) {
        AccessSummary s;
        const std::uint64_t bit = 1ull << g;
        auto& cache = gpms_.at(g).remote_cache;
        for (const PageId& page : pages) {
            auto [it, fresh] = pages_.try_emplace(page, PageEntry{g, bit});
            if (fresh) {
                ++s.allocations;
                s.local_bytes += cfg_.page_bytes;
                continue;
            }
            PageEntry& e = it->second;
            if (e.holders & bit) {
                s.local_bytes += cfg_.page_bytes;
            } else if (policy_ == PlacementPolicy::segmented) {
                e.holders |= bit;
                ++s.allocations;
                s.local_bytes += cfg_.page_bytes;
            } else if (cache.hit(page)) {
                ++s.cache_hits;
                s.local_bytes += cfg_.page_bytes;
            } else {
                s.remote_bytes += cfg_.page_bytes;
                s.remote_by_source[e.home] += cfg_.page_bytes;
                cache.insert(page);
            }
        }
        return s;
    }

    /// Makes `pages` resident in `g`. Unallocated pages are placed for free;
    /// pages resident elsewhere are duplicated and their bytes reported as
    /// copies. Each copy is sourced from the holder whose link into `g`
    /// drains first, counting copies already planned by this call.
    CopySummary preallocate_pages(GpmId g, std::span<const PageId> pages) {
        CopySummary s;
        const std::uint64_t bit = 1ull << g;
        const double bpc = link_bytes_per_cycle();
        for (const PageId& page : pages) {
            auto [it, fresh] = pages_.try_emplace(page, PageEntry{g, bit});
            if (fresh || (it->second.holders & bit)) continue;
            GpmId src = it->second.home;
            double best = -1.0;
            for (GpmId h = 0; h < cfg_.gpm_count; ++h) {
                if (!(it->second.holders & (1ull << h))) continue;
                auto planned = s.source_map.find(h);
                const double drain = static_cast<double>(link_free(h, g)) +
                                     (planned == s.source_map.end() ? 0.0 : static_cast<double>(planned->second) / bpc);
                if (best < 0.0 || drain < best) {
                    best = drain;
                    src = h;
                }
            }
            it->second.holders |= bit;
            s.copied_bytes += cfg_.page_bytes;
            s.source_map[src] += cfg_.page_bytes;
        }
        return s;
    }

    bool is_local(GpmId g, const PageId& page) const {
        auto it = pages_.find(page);
        return it != pages_.end() && (it->second.holders & (1ull << g));
    }

    std::vector<PageId> resident_pages(GpmId g) const {
        std::vector<PageId> out;
        for (const auto& [page, e] : pages_)
            if (e.holders & (1ull << g)) out.push_back(page);
        std::sort(out.begin(), out.end());
        return out;
    }

    double link_bytes_per_cycle() const { return bandwidth_bytes_per_cycle(cfg_, BandwidthKind::link); }
    double local_bytes_per_cycle() const { return bandwidth_bytes_per_cycle(cfg_, BandwidthKind::local); }

    /// Queues `bytes` on the dedicated src->dst link no earlier than
    /// `issue`; returns the arrival cycle.
    Cycle post_transfer(GpmId src, GpmId dst, std::uint64_t bytes, Cycle issue) {
        if (src == dst) throw AccountingError("link transfer from a GPM to itself");
        if (bytes == 0) return issue;
        Cycle& free = link_free_.at(static_cast<std::size_t>(src) * cfg_.gpm_count + dst);
        const Cycle start = std::max(issue, free);
        free = start + transfer_cycles(bytes, link_bytes_per_cycle());
        return free;
    }

    Cycle link_free(GpmId src, GpmId dst) const {
        return link_free_.at(static_cast<std::size_t>(src) * cfg_.gpm_count + dst);
    }

    /// Latest cycle at which any core, ROP or link is still busy.
    Cycle horizon() const {
        Cycle h = 0;
        for (const auto& g : gpms_) h = std::max({h, g.timeline_cycles, g.rop_cycles});
        for (Cycle c : link_free_) h = std::max(h, c);
        return h;
    }

    void occupy_core(GpmId g, Cycle start, Cycle duration) {
        auto& s = gpms_.at(g);
        if (start < s.timeline_cycles) throw AccountingError("core timeline would move backwards");
        s.timeline_cycles = start + duration;
        s.busy_cycles += duration;
    }

    /// Runs `cycles` of ROP work on `g` once the data has arrived.
    Cycle occupy_rop(GpmId g, Cycle arrival, Cycle cycles) {
        auto& s = gpms_.at(g);
        const Cycle start = std::max(arrival, s.rop_cycles);
        s.rop_cycles = start + cycles;
        return s.rop_cycles;
    }

    /// Moves every idle timeline forward to `t` (frame barriers).
    void align_to(Cycle t) {
        for (auto& g : gpms_) {
            g.timeline_cycles = std::max(g.timeline_cycles, t);
            g.rop_cycles = std::max(g.rop_cycles, t);
        }
        for (Cycle& c : link_free_) c = std::max(c, t);
    }

private:
    MachineConfig cfg_;
    PlacementPolicy policy_;
    std::vector<GpmState> gpms_;
    std::unordered_map<PageId, PageEntry, PageIdHash> pages_;
    std::vector<Cycle> link_free_;
};

}  // namespace rrsim
