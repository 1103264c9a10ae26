#pragma once

// Runtime distribution engine: a linear rendering-time predictor calibrated
// on the first batches, per-GPM total/elapsed counters, earliest-available
// GPM selection under bounded batch queues, page pre-allocation and the
// fine-grained split of a straggling batch across idle GPMs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "rrsim/batching.hpp"
#include "rrsim/errors.hpp"
#include "rrsim/executor.hpp"
#include "rrsim/machine.hpp"
#include "rrsim/metrics.hpp"
#include "rrsim/pipeline.hpp"
#include "rrsim/trace.hpp"

namespace rrsim {

struct CalibrationSample {
    std::uint64_t triangles = 0;
    std::uint64_t tv = 0;
    std::uint64_t pixels = 0;
    Cycle measured_cycles = 0;
};

struct PredictorState {
    double c0 = 0.0;  // cycles per triangle
    double c1 = 0.0;  // cycles per transformed vertex
    double c2 = 0.0;  // cycles per pixel
    bool calibrated = false;
    bool fallback = false;  // the (c1, c2) fit was singular
    std::vector<CalibrationSample> samples;
};

/// c0 from the ratio of sums; (c1, c2) by least squares without intercept,
/// clamped to be non-negative. A rank-deficient system splits the measured
/// time evenly between the two terms.
inline PredictorState calibrate(std::span<const CalibrationSample> samples, std::size_t required = 8) {
    if (samples.size() != required)
        throw CalibrationError("calibration needs exactly " + std::to_string(required) + " samples, got " +
                               std::to_string(samples.size()));
    long double sm = 0, st = 0, stv = 0, spx = 0;
    long double a11 = 0, a12 = 0, a22 = 0, b1 = 0, b2 = 0;
    for (const auto& s : samples) {
        if (s.measured_cycles == 0) throw CalibrationError("calibration sample with zero measured cycles");
        const long double m = s.measured_cycles, tv = s.tv, px = s.pixels;
        sm += m;
        st += s.triangles;
        stv += tv;
        spx += px;
        a11 += tv * tv;
        a12 += tv * px;
        a22 += px * px;
        b1 += tv * m;
        b2 += px * m;
    }
    if (st == 0) throw CalibrationError("calibration samples carry no triangles");

    PredictorState ps;
    ps.samples.assign(samples.begin(), samples.end());
    ps.c0 = static_cast<double>(sm / st);

    const long double det = a11 * a22 - a12 * a12;
    if (a11 > 0 && a22 > 0 && det > 1e-12L * a11 * a22) {
        long double c1 = (b1 * a22 - b2 * a12) / det;
        long double c2 = (a11 * b2 - a12 * b1) / det;
        if (c1 < 0) {
            c1 = 0;
            c2 = b2 / a22;
        } else if (c2 < 0) {
            c2 = 0;
            c1 = b1 / a11;
        }
        ps.c1 = static_cast<double>(c1);
        ps.c2 = static_cast<double>(c2);
    } else {
        ps.fallback = true;
        if (stv > 0 && spx > 0) {
            ps.c1 = static_cast<double>(0.5L * sm / stv);
            ps.c2 = static_cast<double>(0.5L * sm / spx);
        } else if (stv > 0) {
            ps.c1 = static_cast<double>(sm / stv);
        } else if (spx > 0) {
            ps.c2 = static_cast<double>(sm / spx);
        }
    }
    ps.calibrated = true;
    return ps;
}

inline Cycle predict_total(const PredictorState& ps, const Signals& s) {
    if (!ps.calibrated) throw StateError("predictor used before calibration");
    return static_cast<Cycle>(std::llround(ps.c0 * static_cast<double>(s.triangles)));
}

inline Cycle predict_linear(const PredictorState& ps, const Signals& s) {
    if (!ps.calibrated) throw StateError("predictor used before calibration");
    return static_cast<Cycle>(
        std::llround(ps.c1 * static_cast<double>(s.tv) + ps.c2 * static_cast<double>(s.pixels)));
}

struct GpmCounters {
    std::int64_t total_predicted_cycles = 0;
    std::int64_t elapsed_cycles = 0;
    std::int64_t remaining() const { return total_predicted_cycles - elapsed_cycles; }
    friend bool operator==(const GpmCounters&, const GpmCounters&) = default;
};

inline GpmCounters advance_elapsed(GpmCounters c, const PredictorState& ps, std::uint64_t delta_tv,
                                   std::uint64_t delta_pixels) {
    c.elapsed_cycles += std::llround(ps.c1 * static_cast<double>(delta_tv) + ps.c2 * static_cast<double>(delta_pixels));
    return c;
}

/// Pending batches per GPM (including the one running).
using BatchQueueState = std::vector<std::size_t>;

/// GPM expected to free up first among those with queue room; nullopt when
/// every queue is full.
inline std::optional<GpmId> select_gpm(std::span<const GpmCounters> counters, std::span<const std::size_t> queues,
                                       std::size_t depth = 4) {
    if (counters.size() != queues.size()) throw DomainError("counter and queue vectors differ in length");
    std::optional<GpmId> best;
    for (GpmId g = 0; g < counters.size(); ++g) {
        if (queues[g] >= depth) continue;
        if (!best || counters[g].remaining() < counters[*best].remaining()) best = g;
    }
    return best;
}

struct AssignedSlice {
    GpmId gpm = 0;
    std::size_t source = 0;  // index of the remaining slice it came from
    WorkSlice slice;
};

/// Splits each remaining slice of a straggling batch evenly (+-1 unit)
/// across the owner and the idle GPMs, ordered by id. Empty pieces are
/// dropped. No idle GPM means no split.
inline std::vector<AssignedSlice> redistribute_straggler(std::span<const WorkSlice> remaining, GpmId owner,
                                                         std::span<const GpmId> idle_gpms) {
    std::vector<AssignedSlice> out;
    if (idle_gpms.empty()) return out;
    std::vector<GpmId> parts(idle_gpms.begin(), idle_gpms.end());
    parts.push_back(owner);
    std::sort(parts.begin(), parts.end());
    parts.erase(std::unique(parts.begin(), parts.end()), parts.end());

    for (std::size_t i = 0; i < remaining.size(); ++i) {
        const WorkSlice& s = remaining[i];
        const auto v = split_even(s.vertex_units, parts.size());
        const auto t = split_even(s.triangle_units, parts.size());
        const auto p = split_even(s.pixel_units, parts.size());
        std::uint64_t offset = s.vertex_offset;
        for (std::size_t k = 0; k < parts.size(); ++k) {
            WorkSlice piece{s.object_id, s.views, offset, v[k], t[k], p[k]};
            offset += v[k];
            if (v[k] == 0 && t[k] == 0 && p[k] == 0) continue;
            out.push_back({parts[k], i, piece});
        }
    }
    return out;
}

/// Texture pages a slice will read.
inline std::vector<PageId> slice_pages(const DrawObject& obj, const WorkSlice& s, std::uint64_t bytes_per_fragment,
                                       const MachineConfig& cfg) {
    return texture_footprint(obj, s.pixel_units, bytes_per_fragment, cfg.page_bytes);
}

inline void sort_unique(std::vector<PageId>& pages) {
    std::sort(pages.begin(), pages.end());
    pages.erase(std::unique(pages.begin(), pages.end()), pages.end());
}

struct EngineOptions {
    bool preallocate = true;
    bool split_stragglers = true;
    CompositionMode composition = CompositionMode::distributed;
};

/// Drives the batches of successive frames through one machine. The
/// predictor is calibrated once, on the first frame with enough batches,
/// and reused afterwards; counters restart every frame.
class DistributionEngine {
public:
    DistributionEngine(const MachineConfig& cfg, EngineOptions opt = {}) : cfg_(cfg), opt_(opt) {}

    const PredictorState& predictor() const { return ps_; }

    FrameMetrics run_frame(Machine& m, TrafficLedger& ledger, const Trace& trace, const Frame& frame,
                           Cycle frame_start, std::vector<ScheduleEntry>& log) {
        const auto batches = build_batches(frame, BatchingOptions::from(cfg_));
        FrameState st(m, ledger, trace, frame, batches, frame_start, opt_.composition, log);
        const std::size_t n = batches.size();
        const std::size_t calib = cfg_.calibration_batches;
        const GpmId G = m.gpm_count();
        std::size_t next = 0;

        if (!ps_.calibrated) {
            if (n < calib) {
                for (; next < n; ++next) dispatch(st, next, static_cast<GpmId>(next % G), frame_start, false);
                while (st.ex.has_events())
                    if (auto c = st.ex.step()) on_completion(st, *c);
                return finish(st);
            }
            for (; next < calib; ++next) dispatch(st, next, static_cast<GpmId>(next % G), frame_start, false);
            while (std::any_of(st.tracks.begin(), st.tracks.begin() + static_cast<std::ptrdiff_t>(calib),
                               [](const Track& t) { return !t.done; })) {
                if (auto c = st.ex.step()) on_completion(st, *c);
            }
            std::vector<CalibrationSample> samples;
            for (std::size_t b = 0; b < calib; ++b)
                samples.push_back({st.tracks[b].signals.triangles, st.tracks[b].signals.tv,
                                   st.tracks[b].signals.pixels, st.tracks[b].measured});
            ps_ = calibrate(samples, calib);
        }

        while (next < n) {
            const auto g = select_gpm(st.counters, st.queued, cfg_.batch_queue_depth);
            if (!g) {
                wait_for_batch(st);
                continue;
            }
            dispatch(st, next, *g, st.ex.now(), opt_.preallocate);
            ++next;
        }
        while (st.ex.has_events()) {
            if (auto c = st.ex.step()) {
                on_completion(st, *c);
                if (opt_.split_stragglers) maybe_split(st);
            }
        }
        return finish(st);
    }

private:
    struct Track {
        GpmId gpm = 0;
        std::size_t log_index = 0;
        std::size_t outstanding = 0;
        Signals signals;
        Cycle start = 0;
        Cycle end = 0;
        Cycle measured = 0;
        bool started = false;
        bool done = false;
        bool split = false;
    };

    struct FrameState {
        FrameState(Machine& m, TrafficLedger& ledger, const Trace& trace, const Frame& frame,
                   const std::vector<Batch>& batches, Cycle start, CompositionMode mode,
                   std::vector<ScheduleEntry>& log)
            : machine(m),
              trace(trace),
              frame(frame),
              batches(batches),
              ex(m, ledger, trace, frame, mode, start),
              counters(m.gpm_count()),
              queued(m.gpm_count(), 0),
              tracks(batches.size()),
              log(log) {}
        Machine& machine;
        const Trace& trace;
        const Frame& frame;
        const std::vector<Batch>& batches;
        FrameExecutor ex;
        std::vector<GpmCounters> counters;
        BatchQueueState queued;
        std::vector<Track> tracks;
        std::vector<ScheduleEntry>& log;
    };

    void dispatch(FrameState& st, std::size_t b, GpmId g, Cycle t, bool preallocate) {
        const Batch& batch = st.batches[b];
        if (st.queued[g] >= cfg_.batch_queue_depth && ps_.calibrated)
            throw StateError("batch queue overflow on GPM " + std::to_string(g));
        Track& tr = st.tracks[b];
        tr.gpm = g;
        tr.signals = batch_signals(batch, st.frame, true);
        tr.outstanding = batch.member_indices.size();

        Cycle ready = t;
        if (preallocate) {
            std::vector<PageId> pages;
            for (std::size_t idx : batch.member_indices) {
                const auto& obj = st.frame.objects[idx];
                auto p = slice_pages(obj, whole_object(obj), st.trace.bytes_per_fragment, cfg_);
                pages.insert(pages.end(), p.begin(), p.end());
            }
            sort_unique(pages);
            ready = st.ex.preallocate(g, pages, t);
        }
        for (std::size_t idx : batch.member_indices)
            st.ex.enqueue(g, WorkItem{idx, whole_object(st.frame.objects[idx]), true, ready, static_cast<std::int64_t>(b)}, t);
        ++st.queued[g];

        ScheduleEntry e;
        e.frame_id = st.frame.frame_id;
        e.batch_id = batch.batch_id;
        e.gpm = g;
        e.dispatch_cycle = t;
        if (ps_.calibrated) {
            e.predicted_cycles = predict_total(ps_, tr.signals);
            e.predicted_linear_cycles = predict_linear(ps_, tr.signals);
            st.counters[g].total_predicted_cycles += static_cast<std::int64_t>(e.predicted_cycles);
        }
        tr.log_index = st.log.size();
        st.log.push_back(std::move(e));
    }

    /// Books a completion; returns true when it finished its batch.
    bool on_completion(FrameState& st, const Completion& c) {
        if (c.item.batch < 0) throw StateError("engine completion without a batch");
        Track& tr = st.tracks[static_cast<std::size_t>(c.item.batch)];
        tr.measured += c.end - c.start;
        tr.start = tr.started ? std::min(tr.start, c.start) : c.start;
        tr.end = std::max(tr.end, c.end);
        tr.started = true;
        if (ps_.calibrated) {
            const Signals d = slice_signals(c.done);
            st.counters[c.gpm] = advance_elapsed(st.counters[c.gpm], ps_, d.tv, d.pixels);
        }
        if (--tr.outstanding > 0) return false;
        tr.done = true;
        --st.queued[tr.gpm];
        auto& e = st.log[tr.log_index];
        e.start_cycle = tr.start;
        e.end_cycle = tr.end;
        e.measured_cycles = tr.measured;
        return true;
    }

    void absorb_all(FrameState& st) {
        for (auto& tr : st.tracks)
            if (!tr.done) throw StateError("batch left unfinished");
    }

    void wait_for_batch(FrameState& st) {
        while (true) {
            if (!st.ex.has_events()) throw StateError("engine stalled with full queues and no work");
            if (auto c = st.ex.step(); c && on_completion(st, *c)) return;
        }
    }

    /// Splits the last running batch once every other GPM has gone idle.
    void maybe_split(FrameState& st) {
        const GpmId G = st.machine.gpm_count();
        std::vector<GpmId> busy, idle;
        for (GpmId g = 0; g < G; ++g) (st.ex.idle(g) ? idle : busy).push_back(g);
        if (busy.size() != 1 || idle.empty()) return;
        const GpmId owner = busy.front();
        const Cycle t = st.ex.now();

        std::optional<std::int64_t> batch;
        auto same_batch = [&](std::int64_t b) {
            if (!batch) batch = b;
            return *batch == b;
        };
        const auto& run = st.ex.running(owner);
        if (run && !same_batch(run->item.batch)) return;
        for (const auto& q : st.ex.queue(owner))
            if (!same_batch(q.batch)) return;
        if (!batch || *batch < 0) return;
        Track& tr = st.tracks[static_cast<std::size_t>(*batch)];
        if (tr.split) return;

        std::vector<WorkSlice> rest;
        std::vector<std::size_t> rest_index;
        auto keep = [&](std::size_t idx, const WorkSlice& s) {
            if (s.vertex_units == 0 && s.triangle_units == 0 && s.pixel_units == 0) return;
            rest.push_back(s);
            rest_index.push_back(idx);
        };
        if (run && run->end > t) {
            const std::size_t idx = run->item.object_index;
            keep(idx, st.ex.truncate(owner, t));
        }
        const auto queued = st.ex.take_queue(owner);
        for (const auto& q : queued) keep(q.object_index, q.slice);
        tr.outstanding -= queued.size();
        if (rest.empty()) return;

        const auto pieces = redistribute_straggler(rest, owner, idle);
        std::vector<GpmId> participants;
        for (const auto& a : pieces) participants.push_back(a.gpm);
        std::sort(participants.begin(), participants.end());
        participants.erase(std::unique(participants.begin(), participants.end()), participants.end());

        for (GpmId p : participants) {
            std::vector<PageId> pages;
            for (const auto& a : pieces) {
                if (a.gpm != p) continue;
                auto pp = slice_pages(st.frame.objects[rest_index[a.source]], a.slice, st.trace.bytes_per_fragment, cfg_);
                pages.insert(pages.end(), pp.begin(), pp.end());
            }
            sort_unique(pages);
            const Cycle ready = opt_.preallocate ? st.ex.preallocate(p, pages, t) : t;
            for (const auto& a : pieces) {
                if (a.gpm != p) continue;
                const Cycle arrival = st.ex.ship_vertices(owner, p, a.slice.vertex_units, t);
                st.ex.enqueue(p, WorkItem{rest_index[a.source], a.slice, true, std::max(ready, arrival), *batch}, t);
                ++tr.outstanding;
            }
        }
        tr.split = true;
        st.log[tr.log_index].slices = participants;
    }

    FrameMetrics finish(FrameState& st) {
        absorb_all(st);
        return st.ex.finish(st.frame.frame_id, st.batches.size());
    }

    MachineConfig cfg_;
    EngineOptions opt_;
    PredictorState ps_;
};

}  // namespace rrsim
