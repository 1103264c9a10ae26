#pragma once

// Screen-space framebuffer partitions and the two composition models:
// root-only (one GPM's ROPs write the whole frame) and distributed (every
// GPM composes its own column partition).

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "rrsim/errors.hpp"
#include "rrsim/machine.hpp"
#include "rrsim/pipeline.hpp"
#include "rrsim/trace.hpp"

namespace rrsim {

/// Columns [x0, x1) of the stereo frame owned by one GPM.
struct FbPartition {
    GpmId gpm_id = 0;
    std::int64_t x0 = 0;
    std::int64_t x1 = 0;
    friend bool operator==(const FbPartition&, const FbPartition&) = default;
};

/// `count` equal (+-1) spans of [0, extent), in GPM order.
inline std::vector<FbPartition> equal_spans(std::int64_t extent, std::uint32_t count) {
    if (count == 0 || extent < static_cast<std::int64_t>(count)) throw DomainError("cannot split extent into spans");
    std::vector<FbPartition> out;
    for (std::uint32_t g = 0; g < count; ++g)
        out.push_back({g, extent * g / count, extent * (g + 1) / count});
    return out;
}

/// Column partitions of a stereo frame whose eyes are `eye_width` wide.
inline std::vector<FbPartition> column_partitions(std::uint32_t eye_width, std::uint32_t gpm_count) {
    return equal_spans(2 * static_cast<std::int64_t>(eye_width), gpm_count);
}

inline void validate_partitions(std::span<const FbPartition> parts, std::int64_t extent) {
    std::int64_t cursor = 0;
    for (const auto& p : parts) {
        if (p.x0 != cursor || p.x1 <= p.x0) throw DomainError("partitions do not tile the frame");
        cursor = p.x1;
    }
    if (cursor != extent) throw DomainError("partitions do not cover the frame");
}

/// Overlap length of [lo, hi) with each span; a degenerate interval counts
/// fully towards the span containing `lo`.
inline std::vector<double> span_weights(std::int64_t lo, std::int64_t hi, std::span<const FbPartition> spans) {
    std::vector<double> w(spans.size(), 0.0);
    if (hi <= lo) {
        for (std::size_t i = 0; i < spans.size(); ++i)
            if (lo >= spans[i].x0 && lo < spans[i].x1) w[i] = 1.0;
        if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) w.back() = 1.0;
        return w;
    }
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto a = std::max(lo, spans[i].x0);
        const auto b = std::min(hi, spans[i].x1);
        if (b > a) w[i] = static_cast<double>(b - a);
    }
    return w;
}

/// Splits the pixels of one view of a slice across column owners in
/// proportion to the view's bbox overlap.
inline std::vector<std::uint64_t> pixels_by_column_owner(const Rect& bbox, std::uint64_t pixels,
                                                         std::span<const FbPartition> parts) {
    return apportion(pixels, span_weights(bbox.x0, bbox.x1, parts));
}

struct ColumnPixels {
    GpmId renderer = 0;
    std::int64_t x = 0;  // stereo-frame column
    std::uint64_t pixels = 0;
};

struct CompositionResult {
    std::vector<Cycle> per_gpm_cycles;
    Cycle composition_cycles = 0;  // max over GPMs
    std::uint64_t composition_link_bytes = 0;
    std::vector<std::uint64_t> owned_pixels;
};

/// Distributed composition: each pixel is written by the ROPs of its
/// column's owner; pixels rendered elsewhere cross a link.
inline CompositionResult compose_distributed(std::span<const ColumnPixels> rendered,
                                             std::span<const FbPartition> parts, std::int64_t frame_width,
                                             const MachineConfig& cfg) {
    validate_partitions(parts, frame_width);
    CompositionResult r;
    r.per_gpm_cycles.assign(cfg.gpm_count, 0);
    r.owned_pixels.assign(cfg.gpm_count, 0);
    for (const auto& c : rendered) {
        if (c.x < 0 || c.x >= frame_width) throw AccountingError("composed pixel outside the frame");
        if (c.renderer >= cfg.gpm_count) throw AccountingError("pixel from unknown GPM");
        auto it = std::upper_bound(parts.begin(), parts.end(), c.x,
                                   [](std::int64_t x, const FbPartition& p) { return x < p.x1; });
        const GpmId owner = it->gpm_id;
        if (owner >= cfg.gpm_count) throw AccountingError("partition owner outside the machine");
        r.owned_pixels[owner] += c.pixels;
        if (owner != c.renderer) r.composition_link_bytes += c.pixels * cfg.fb_bytes_per_pixel;
    }
    for (GpmId g = 0; g < cfg.gpm_count; ++g) {
        r.per_gpm_cycles[g] = rop_cycles(r.owned_pixels[g], cfg);
        r.composition_cycles = std::max(r.composition_cycles, r.per_gpm_cycles[g]);
    }
    return r;
}

/// Root-only composition: the root's ROPs write every pixel.
inline CompositionResult compose_root(std::span<const ColumnPixels> rendered, std::int64_t frame_width,
                                      const MachineConfig& cfg, GpmId root = 0) {
    CompositionResult r;
    r.per_gpm_cycles.assign(cfg.gpm_count, 0);
    r.owned_pixels.assign(cfg.gpm_count, 0);
    for (const auto& c : rendered) {
        if (c.x < 0 || c.x >= frame_width) throw AccountingError("composed pixel outside the frame");
        r.owned_pixels[root] += c.pixels;
        if (c.renderer != root) r.composition_link_bytes += c.pixels * cfg.fb_bytes_per_pixel;
    }
    r.per_gpm_cycles[root] = rop_cycles(r.owned_pixels[root], cfg);
    r.composition_cycles = r.per_gpm_cycles[root];
    return r;
}

}  // namespace rrsim
