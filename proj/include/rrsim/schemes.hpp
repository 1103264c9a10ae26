#pragma once

// Multi-GPM stereo distribution schemes. Each scheme turns a frame into
// per-GPM work items and picks a composition model; run_scheme executes a
// whole trace on a fresh machine.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rrsim/batching.hpp"
#include "rrsim/composition.hpp"
#include "rrsim/engine.hpp"
#include "rrsim/errors.hpp"
#include "rrsim/executor.hpp"
#include "rrsim/machine.hpp"
#include "rrsim/metrics.hpp"
#include "rrsim/pipeline.hpp"
#include "rrsim/trace.hpp"

namespace rrsim {

enum class SchemeId { baseline, afr, tile_v, tile_h, object_sfr, oo_app, oo_vr };

inline constexpr std::array<SchemeId, 7> kAllSchemes{SchemeId::baseline, SchemeId::afr,    SchemeId::tile_v,
                                                     SchemeId::tile_h,   SchemeId::object_sfr, SchemeId::oo_app,
                                                     SchemeId::oo_vr};

inline constexpr std::string_view scheme_name(SchemeId s) {
    switch (s) {
        case SchemeId::baseline: return "baseline";
        case SchemeId::afr: return "afr";
        case SchemeId::tile_v: return "tile_v";
        case SchemeId::tile_h: return "tile_h";
        case SchemeId::object_sfr: return "object_sfr";
        case SchemeId::oo_app: return "oo_app";
        case SchemeId::oo_vr: return "oo_vr";
    }
    return "?";
}

inline SchemeId parse_scheme(std::string_view name) {
    for (auto s : kAllSchemes)
        if (scheme_name(s) == name) return s;
    if (name == "tile-v") return SchemeId::tile_v;
    if (name == "tile-h") return SchemeId::tile_h;
    if (name == "object-sfr") return SchemeId::object_sfr;
    if (name == "oo-app") return SchemeId::oo_app;
    if (name == "oo-vr") return SchemeId::oo_vr;
    throw ConfigError("unknown scheme '" + std::string(name) + "'");
}

/// One unit of work bound to a GPM.
struct Assignment {
    GpmId gpm = 0;
    std::size_t object_index = 0;
    WorkSlice slice;
    bool smp = true;
};

/// Fixed-size triangle chunks dealt round-robin; `counter` carries the deal
/// position across objects.
inline std::vector<Assignment> assign_baseline(const Frame& frame, const MachineConfig& cfg) {
    std::vector<Assignment> out;
    std::uint64_t counter = 0;
    const std::uint64_t chunk = cfg.baseline_chunk_triangles;
    for (std::size_t i = 0; i < frame.objects.size(); ++i) {
        const DrawObject& obj = frame.objects[i];
        const std::uint64_t n = std::max<std::uint64_t>(1, (obj.triangle_count + chunk - 1) / chunk);
        std::vector<double> w;
        for (std::uint64_t k = 0; k < n; ++k)
            w.push_back(static_cast<double>(std::min(chunk, obj.triangle_count - k * chunk)));
        const auto verts = apportion(obj.vertex_count, w);
        const auto px = apportion(obj.pixels_per_view, w);
        std::uint64_t offset = 0;
        for (std::uint64_t k = 0; k < n; ++k) {
            WorkSlice s{obj.object_id, Views::both, offset, verts[k], static_cast<std::uint64_t>(w[k]), px[k]};
            offset += verts[k];
            out.push_back({static_cast<GpmId>(counter++ % cfg.gpm_count), i, s, true});
        }
    }
    return out;
}

inline std::vector<Assignment> assign_object_sfr(const Frame& frame, const MachineConfig& cfg) {
    std::vector<Assignment> out;
    for (std::size_t i = 0; i < frame.objects.size(); ++i)
        out.push_back({static_cast<GpmId>(i % cfg.gpm_count), i, whole_object(frame.objects[i]), true});
    return out;
}

/// Batches dealt round-robin, members in submission order.
inline std::vector<Assignment> assign_oo_app(const Frame& frame, const MachineConfig& cfg) {
    std::vector<Assignment> out;
    const auto batches = build_batches(frame, BatchingOptions::from(cfg));
    for (std::size_t b = 0; b < batches.size(); ++b)
        for (std::size_t idx : batches[b].member_indices)
            out.push_back({static_cast<GpmId>(b % cfg.gpm_count), idx, whole_object(frame.objects[idx]), true});
    return out;
}

enum class TileOrientation { vertical, horizontal };

/// Appends the pieces of `slice_units` apportioned by `weights`, one per
/// non-empty piece.
inline void append_weighted(std::vector<Assignment>& out, const DrawObject& obj, std::size_t index, Views views,
                            bool smp, const std::vector<double>& weights) {
    const auto v = apportion(obj.vertex_count, weights);
    const auto t = apportion(obj.triangle_count, weights);
    const auto p = apportion(obj.pixels_per_view, weights);
    std::uint64_t offset = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (v[k] == 0 && t[k] == 0 && p[k] == 0) continue;
        out.push_back({static_cast<GpmId>(k), index, {obj.object_id, views, offset, v[k], t[k], p[k]}, smp});
        offset += v[k];
    }
}

/// Screen tiles. Vertical: column stripes across the stereo frame, views
/// rendered separately. Horizontal: row bands spanning both eyes, SMP on.
inline std::vector<Assignment> assign_tile(const Frame& frame, const MachineConfig& cfg, TileOrientation o) {
    std::vector<Assignment> out;
    if (o == TileOrientation::vertical) {
        const auto stripes = column_partitions(frame.width, cfg.gpm_count);
        for (std::size_t i = 0; i < frame.objects.size(); ++i) {
            const DrawObject& obj = frame.objects[i];
            for (int eye = 0; eye < 2; ++eye) {
                const Rect& r = obj.bbox_per_view[eye];
                append_weighted(out, obj, i, eye == 0 ? Views::left : Views::right, false,
                                span_weights(r.x0, r.x1, stripes));
            }
        }
    } else {
        const auto bands = equal_spans(frame.height, cfg.gpm_count);
        for (std::size_t i = 0; i < frame.objects.size(); ++i) {
            const DrawObject& obj = frame.objects[i];
            const Rect& r = obj.bbox_per_view[0];
            append_weighted(out, obj, i, Views::both, true, span_weights(r.y0, r.y1, bands));
        }
    }
    return out;
}

namespace detail {

/// Queues every assignment at the frame start and runs the frame to the end.
inline FrameMetrics run_static_frame(Machine& m, TrafficLedger& ledger, const Trace& trace, const Frame& frame,
                                     const std::vector<Assignment>& work, CompositionMode mode, Cycle start,
                                     bool commands = true) {
    FrameExecutor ex(m, ledger, trace, frame, mode, start, commands);
    for (const auto& a : work) ex.enqueue(a.gpm, WorkItem{a.object_index, a.slice, a.smp, start, -1}, start);
    ex.drain();
    return ex.finish(frame.frame_id);
}

inline std::uint64_t expected_pixels(const Trace& trace) {
    std::uint64_t px = 0;
    for (const auto& f : trace.frames)
        for (const auto& o : f.objects) px += 2 * o.pixels_per_view;
    return px;
}

}  // namespace detail

/// Runs every frame of `trace` under `scheme` on a fresh machine.
inline MetricsReport run_scheme(SchemeId scheme, const Trace& trace, const MachineConfig& cfg) {
    validate_config(cfg);
    MetricsReport report;
    report.scheme = std::string(scheme_name(scheme));
    report.config = cfg;
    report.ledger = TrafficLedger(cfg.gpm_count);
    report.expected_pixels = detail::expected_pixels(trace);

    if (scheme == SchemeId::afr) {
        // Whole frames dealt to GPMs; every GPM renders from its own segment.
        Machine m(cfg, PlacementPolicy::segmented);
        for (std::size_t f = 0; f < trace.frames.size(); ++f) {
            const Frame& frame = trace.frames[f];
            const auto g = static_cast<GpmId>(f % cfg.gpm_count);
            const Cycle start = std::max(m.gpm(g).timeline_cycles, m.gpm(g).rop_cycles);
            std::vector<Assignment> work;
            for (std::size_t i = 0; i < frame.objects.size(); ++i)
                work.push_back({g, i, whole_object(frame.objects[i]), true});
            report.frames.push_back(
                detail::run_static_frame(m, report.ledger, trace, frame, work, CompositionMode::local, start, false));
            report.makespan_cycles = std::max(report.makespan_cycles, start + report.frames.back().latency_cycles);
        }
        return report;
    }

    Machine m(cfg, PlacementPolicy::first_touch);
    std::optional<DistributionEngine> engine;
    if (scheme == SchemeId::oo_vr) engine.emplace(cfg);

    Cycle t = 0;
    for (const Frame& frame : trace.frames) {
        m.align_to(t);
        FrameMetrics fm;
        switch (scheme) {
            case SchemeId::baseline:
                fm = detail::run_static_frame(m, report.ledger, trace, frame, assign_baseline(frame, cfg),
                                              CompositionMode::root, t);
                break;
            case SchemeId::object_sfr:
                fm = detail::run_static_frame(m, report.ledger, trace, frame, assign_object_sfr(frame, cfg),
                                              CompositionMode::root, t);
                break;
            case SchemeId::oo_app:
                fm = detail::run_static_frame(m, report.ledger, trace, frame, assign_oo_app(frame, cfg),
                                              CompositionMode::root, t);
                break;
            case SchemeId::tile_v:
                fm = detail::run_static_frame(m, report.ledger, trace, frame,
                                              assign_tile(frame, cfg, TileOrientation::vertical),
                                              CompositionMode::local, t);
                break;
            case SchemeId::tile_h:
                fm = detail::run_static_frame(m, report.ledger, trace, frame,
                                              assign_tile(frame, cfg, TileOrientation::horizontal),
                                              CompositionMode::local, t);
                break;
            case SchemeId::oo_vr:
                fm = engine->run_frame(m, report.ledger, trace, frame, t, report.schedule);
                break;
            case SchemeId::afr: break;
        }
        t += fm.latency_cycles;
        report.frames.push_back(std::move(fm));
    }
    report.makespan_cycles = t;
    if (engine) {
        const auto& ps = engine->predictor();
        report.predictor = PredictorSummary{ps.c0, ps.c1, ps.c2, ps.calibrated, ps.fallback};
    }
    return report;
}

}  // namespace rrsim
