#pragma once

// Per-object stage costs of the stereo pipeline (geometry, multi-projection,
// rasterization, fragment, color output) and the roofline stage timer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <vector>

#include "rrsim/errors.hpp"
#include "rrsim/machine.hpp"
#include "rrsim/trace.hpp"

namespace rrsim {

enum class Stage : std::uint8_t { geometry, smp, raster, fragment, color };

inline constexpr std::string_view stage_name(Stage s) {
    constexpr std::array<std::string_view, 5> names{"geometry", "smp", "raster", "fragment", "color"};
    return names[static_cast<std::size_t>(s)];
}

enum class Views : std::uint8_t { left, right, both };

inline constexpr std::uint64_t view_count(Views v) { return v == Views::both ? 2 : 1; }

/// A portion of one object's work. Counts are absolute units of the
/// object's totals, so splitting conserves work exactly; fractions are
/// derived on demand.
struct WorkSlice {
    ObjectId object_id = 0;
    Views views = Views::both;
    std::uint64_t vertex_offset = 0;
    std::uint64_t vertex_units = 0;
    std::uint64_t triangle_units = 0;
    std::uint64_t pixel_units = 0;  // per view

    friend bool operator==(const WorkSlice&, const WorkSlice&) = default;
};

inline WorkSlice whole_object(const DrawObject& obj, Views views = Views::both) {
    return {obj.object_id, views, 0, obj.vertex_count, obj.triangle_count, obj.pixels_per_view};
}

inline double triangle_fraction(const WorkSlice& s, const DrawObject& obj) {
    return static_cast<double>(s.triangle_units) / static_cast<double>(obj.triangle_count);
}

inline double pixel_fraction(const WorkSlice& s, const DrawObject& obj) {
    return obj.pixels_per_view == 0 ? 0.0
                                     : static_cast<double>(s.pixel_units) / static_cast<double>(obj.pixels_per_view);
}

inline void validate_slice(const WorkSlice& s, const DrawObject& obj) {
    if (s.object_id != obj.object_id) throw DomainError("slice does not belong to object");
    if (s.vertex_offset + s.vertex_units > obj.vertex_count || s.triangle_units > obj.triangle_count ||
        s.pixel_units > obj.pixels_per_view)
        throw DomainError("slice exceeds object " + std::to_string(obj.object_id));
}

/// Splits `total` into `parts` shares differing by at most one; earlier
/// shares receive the extra units.
inline std::vector<std::uint64_t> split_even(std::uint64_t total, std::size_t parts) {
    if (parts == 0) throw DomainError("split into zero parts");
    std::vector<std::uint64_t> out(parts, total / parts);
    for (std::size_t i = 0; i < total % parts; ++i) ++out[i];
    return out;
}

/// Largest-remainder apportionment of `total` by non-negative weights; ties
/// go to the lower index. All-zero weights put everything in the first slot.
inline std::vector<std::uint64_t> apportion(std::uint64_t total, const std::vector<double>& weights) {
    std::vector<std::uint64_t> out(weights.size(), 0);
    if (weights.empty()) return out;
    const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (!(sum > 0.0)) {
        out[0] = total;
        return out;
    }
    std::vector<double> rem(weights.size());
    std::uint64_t given = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double exact = static_cast<double>(total) * weights[i] / sum;
        out[i] = static_cast<std::uint64_t>(std::floor(exact));
        rem[i] = exact - static_cast<double>(out[i]);
        given += out[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
    for (std::size_t k = 0; given < total; ++k, ++given) ++out[order[k % order.size()]];
    return out;
}

struct StageCost {
    Stage stage = Stage::geometry;
    Cycle compute_cycles = 0;
    std::uint64_t local_bytes = 0;
    std::uint64_t remote_bytes = 0;
    std::uint64_t output_pixels = 0;
    std::vector<PageId> footprint;  // distinct pages the stage reads; bytes are resolved by placement
};

/// Linear-model signals of a slice: triangles, transformed vertices, pixels.
struct Signals {
    std::uint64_t triangles = 0;
    std::uint64_t tv = 0;
    std::uint64_t pixels = 0;

    Signals& operator+=(const Signals& o) {
        triangles += o.triangles;
        tv += o.tv;
        pixels += o.pixels;
        return *this;
    }
    friend bool operator==(const Signals&, const Signals&) = default;
};

inline Signals slice_signals(const WorkSlice& s) {
    return {s.triangle_units, s.vertex_units * view_count(s.views), s.pixel_units * view_count(s.views)};
}

inline Cycle ceil_div(double amount, double rate) {
    if (amount <= 0.0) return 0;
    return static_cast<Cycle>(std::ceil(amount / rate - 1e-9));
}

/// Texture pages read by the fragment stage of a slice. The footprint is
/// pixel_units * bytes_per_fragment spread over the object's textures by
/// byte share, each capped at the referenced size and at least one page.
/// Both views of a slice share one footprint.
inline std::vector<PageId> texture_footprint(const DrawObject& obj, std::uint64_t pixel_units,
                                             std::uint64_t bytes_per_fragment, std::uint64_t page_bytes) {
    std::vector<PageId> pages;
    if (pixel_units == 0 || obj.textures.empty()) return pages;
    const double want = static_cast<double>(pixel_units) * static_cast<double>(bytes_per_fragment);
    const double total = static_cast<double>(obj.texture_bytes());
    for (const auto& t : obj.textures) {
        const double share = std::ceil(want * static_cast<double>(t.bytes) / total);
        std::uint64_t bytes = std::min<std::uint64_t>(t.bytes, static_cast<std::uint64_t>(share));
        bytes = std::max(bytes, std::min(page_bytes, t.bytes));
        append_page_range(pages, t.texture_id, 0, bytes, page_bytes);
    }
    return pages;
}

/// Stage costs of running `slice` of `obj` on one GPM. Memory byte fields
/// are zero; callers resolve `footprint` against page placement.
inline std::vector<StageCost> stage_costs(const DrawObject& obj, const WorkSlice& slice,
                                          std::uint64_t bytes_per_fragment, const MachineConfig& cfg,
                                          bool smp_enabled) {
    if (!(cfg.vertex_rate > 0.0) || !(cfg.fragment_rate > 0.0) || !(cfg.raster_rate > 0.0) ||
        cfg.rop_per_gpm == 0 || !(cfg.rop_pixels_per_cycle > 0.0))
        throw ConfigError("pipeline rates must be positive");
    validate_slice(slice, obj);

    const bool both = slice.views == Views::both;
    const bool smp = both && smp_enabled;
    const std::uint64_t passes = both && !smp ? 2 : 1;
    const auto verts = static_cast<double>(slice.vertex_units);
    const std::uint64_t pixels = slice.pixel_units * view_count(slice.views);

    std::vector<StageCost> costs(5);
    auto& geo = costs[0];
    geo.stage = Stage::geometry;
    geo.compute_cycles = passes * ceil_div(verts, cfg.vertex_rate);

    costs[1].stage = Stage::smp;
    costs[1].compute_cycles = smp ? ceil_div(verts * cfg.smp_reproject_cost, cfg.vertex_rate) : 0;

    costs[2].stage = Stage::raster;
    costs[2].compute_cycles = ceil_div(static_cast<double>(pixels), cfg.raster_rate);

    auto& frag = costs[3];
    frag.stage = Stage::fragment;
    frag.compute_cycles = ceil_div(static_cast<double>(pixels), cfg.fragment_rate);
    frag.footprint = texture_footprint(obj, slice.pixel_units, bytes_per_fragment, cfg.page_bytes);

    auto& color = costs[4];
    color.stage = Stage::color;
    color.output_pixels = pixels;
    color.compute_cycles = ceil_div(static_cast<double>(pixels), cfg.rop_per_gpm * cfg.rop_pixels_per_cycle);
    return costs;
}

/// Roofline: a stage takes as long as its slowest resource.
inline Cycle stage_time(const StageCost& cost, const MachineConfig& cfg) {
    return std::max({cost.compute_cycles,
                     transfer_cycles(cost.local_bytes, bandwidth_bytes_per_cycle(cfg, BandwidthKind::local)),
                     transfer_cycles(cost.remote_bytes, bandwidth_bytes_per_cycle(cfg, BandwidthKind::link))});
}

/// ROP cycles to write `pixels` on one GPM.
inline Cycle rop_cycles(std::uint64_t pixels, const MachineConfig& cfg) {
    return ceil_div(static_cast<double>(pixels), cfg.rop_per_gpm * cfg.rop_pixels_per_cycle);
}

}  // namespace rrsim
