#pragma once

// Event-driven execution of one frame's work items on the GPMs of a
// machine. Each GPM runs its FIFO of items back to back on the shader core;
// colour output is routed to the owner of the pixels' framebuffer region,
// crossing a link (z-test + colour bytes) when the owner is another GPM.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "rrsim/composition.hpp"
#include "rrsim/errors.hpp"
#include "rrsim/machine.hpp"
#include "rrsim/metrics.hpp"
#include "rrsim/pipeline.hpp"
#include "rrsim/trace.hpp"

namespace rrsim {

enum class CompositionMode {
    local,        // the renderer owns its pixels
    root,         // GPM0 composes everything
    distributed,  // column partitions, one per GPM
};

struct WorkItem {
    std::size_t object_index = 0;
    WorkSlice slice;
    bool smp = true;
    Cycle ready = 0;           // earliest start
    std::int64_t batch = -1;   // owning batch index, -1 when unbatched
};

struct Completion {
    GpmId gpm = 0;
    WorkItem item;
    WorkSlice done;  // the executed part (smaller than item.slice when truncated)
    Cycle start = 0;
    Cycle end = 0;
    std::uint64_t remote_texture_bytes = 0;
    bool truncated = false;
};

class FrameExecutor {
public:
    struct Running {
        WorkItem item;
        WorkSlice done;
        Cycle start = 0;
        Cycle end = 0;
        std::uint64_t remote_texture_bytes = 0;
        bool truncated = false;
    };

    FrameExecutor(Machine& machine, TrafficLedger& ledger, const Trace& trace, const Frame& frame,
                  CompositionMode mode, Cycle frame_start, bool send_commands = true)
        : m_(machine),
          ledger_(ledger),
          trace_(trace),
          frame_(frame),
          mode_(mode),
          commands_(send_commands),
          start_(frame_start),
          now_(frame_start),
          end_(frame_start),
          queues_(machine.gpm_count()),
          running_(machine.gpm_count()),
          last_end_(machine.gpm_count(), 0),
          busy_(machine.gpm_count(), 0),
          worked_(machine.gpm_count(), false) {
        if (mode_ == CompositionMode::distributed) parts_ = column_partitions(trace.width, machine.gpm_count());
    }

    Cycle frame_start() const { return start_; }
    Cycle now() const { return now_; }
    const Frame& frame() const { return frame_; }

    /// Queues `item` on `g`. The command stream is sent from GPM0 at `issue`
    /// and the item cannot start before it arrives.
    void enqueue(GpmId g, WorkItem item, Cycle issue) {
        if (g >= m_.gpm_count()) throw AccountingError("enqueue on unknown GPM");
        validate_slice(item.slice, frame_.objects.at(item.object_index));
        item.ready = std::max(item.ready, issue);
        if (commands_ && g != 0 && m_.config().command_bytes > 0) {
            ledger_.record(0, g, TrafficCategory::command, m_.config().command_bytes);
            const Cycle arrival = m_.post_transfer(0, g, m_.config().command_bytes, issue);
            item.ready = std::max(item.ready, arrival);
            note(arrival);
        }
        queues_[g].push_back(std::move(item));
    }

    /// Pre-allocates `pages` in `g`'s DRAM, issuing the copies at `issue`.
    /// Returns the cycle by which every copy has landed.
    Cycle preallocate(GpmId g, std::span<const PageId> pages, Cycle issue) {
        const CopySummary copies = m_.preallocate_pages(g, pages);
        Cycle ready = issue;
        for (const auto& [src, bytes] : copies.source_map) {
            ledger_.record(src, g, TrafficCategory::preallocation_copy, bytes);
            ready = std::max(ready, m_.post_transfer(src, g, bytes, issue));
        }
        note(ready);
        copied_bytes_ += copies.copied_bytes;
        return ready;
    }

    /// Sends the vertex data of a redistributed slice from `src` to `dst`.
    Cycle ship_vertices(GpmId src, GpmId dst, std::uint64_t vertices, Cycle issue) {
        if (src == dst || vertices == 0) return issue;
        const std::uint64_t bytes = vertices * m_.config().vertex_bytes;
        ledger_.record(src, dst, TrafficCategory::vertex, bytes);
        const Cycle arrival = m_.post_transfer(src, dst, bytes, issue);
        note(arrival);
        return arrival;
    }

    bool idle(GpmId g) const { return !running_[g] && queues_[g].empty(); }
    bool all_idle() const {
        for (GpmId g = 0; g < m_.gpm_count(); ++g)
            if (!idle(g)) return false;
        return true;
    }
    const std::optional<Running>& running(GpmId g) const { return running_.at(g); }
    const std::deque<WorkItem>& queue(GpmId g) const { return queues_.at(g); }

    /// Removes and returns everything queued (not running) on `g`.
    std::vector<WorkItem> take_queue(GpmId g) {
        std::vector<WorkItem> out(queues_[g].begin(), queues_[g].end());
        queues_[g].clear();
        return out;
    }

    /// Stops `g`'s running item at `t`; the executed share is proportional
    /// to the elapsed time (floored per unit). Returns the unexecuted rest.
    WorkSlice truncate(GpmId g, Cycle t) {
        auto& r = running_.at(g);
        if (!r || t < r->start || t > r->end) throw StateError("truncate outside the running item");
        const WorkSlice& s = r->item.slice;
        const double f = r->end == r->start ? 1.0
                                            : static_cast<double>(t - r->start) / static_cast<double>(r->end - r->start);
        auto part = [f](std::uint64_t units) {
            return std::min(units, static_cast<std::uint64_t>(std::floor(f * static_cast<double>(units))));
        };
        WorkSlice done = s;
        done.vertex_units = part(s.vertex_units);
        done.triangle_units = part(s.triangle_units);
        done.pixel_units = part(s.pixel_units);
        WorkSlice rest = s;
        rest.vertex_offset = s.vertex_offset + done.vertex_units;
        rest.vertex_units = s.vertex_units - done.vertex_units;
        rest.triangle_units = s.triangle_units - done.triangle_units;
        rest.pixel_units = s.pixel_units - done.pixel_units;
        r->done = done;
        r->end = t;
        r->truncated = true;
        return rest;
    }

    bool has_events() const {
        for (GpmId g = 0; g < m_.gpm_count(); ++g)
            if (!idle(g)) return true;
        return false;
    }

    /// Time of the next event, if any.
    std::optional<Cycle> next_event_time() const {
        std::optional<Cycle> best;
        for (GpmId g = 0; g < m_.gpm_count(); ++g) {
            std::optional<Cycle> t;
            if (running_[g]) t = running_[g]->end;
            else if (!queues_[g].empty()) t = start_time(g);
            if (t && (!best || *t < *best)) best = t;
        }
        return best;
    }

    /// Processes the earliest event (completions before starts at equal
    /// times, lower GPM first). Returns the completion when the event was one.
    std::optional<Completion> step() {
        std::optional<GpmId> pick;
        Cycle when = 0;
        bool completion = false;
        for (GpmId g = 0; g < m_.gpm_count(); ++g) {
            if (running_[g]) {
                const Cycle t = running_[g]->end;
                if (!pick || t < when || (t == when && !completion)) {
                    pick = g;
                    when = t;
                    completion = true;
                }
            } else if (!queues_[g].empty()) {
                const Cycle t = start_time(g);
                if (!pick || t < when) {
                    pick = g;
                    when = t;
                    completion = false;
                }
            }
        }
        if (!pick) return std::nullopt;
        now_ = std::max(now_, when);
        if (completion) return complete(*pick);
        begin(*pick, when);
        return std::nullopt;
    }

    /// Runs every remaining event.
    void drain() {
        while (has_events()) step();
    }

    std::uint64_t rendered_pixels() const { return rendered_; }
    std::uint64_t composed_pixels() const { return composed_; }
    std::uint64_t copied_bytes() const { return copied_bytes_; }

    FrameMetrics finish(std::int64_t frame_id, std::uint64_t batches = 0) const {
        if (has_events()) throw StateError("frame finished with pending work");
        FrameMetrics fm;
        fm.frame_id = frame_id;
        fm.start_cycle = start_;
        fm.latency_cycles = end_ - start_;
        fm.completion_cycles.assign(m_.gpm_count(), 0);
        fm.busy_cycles = busy_;
        for (GpmId g = 0; g < m_.gpm_count(); ++g)
            if (worked_[g]) fm.completion_cycles[g] = std::max<Cycle>(last_end_[g] - start_, 1);
        fm.balance = balance_ratio(fm.completion_cycles);
        fm.rendered_pixels = rendered_;
        fm.composed_pixels = composed_;
        fm.batches = batches;
        return fm;
    }

    /// Latest cycle any resource touched by this frame stays busy.
    Cycle frame_end() const { return end_; }

private:
    Cycle start_time(GpmId g) const {
        return std::max({m_.gpm(g).timeline_cycles, queues_[g].front().ready, now_});
    }

    void note(Cycle t) { end_ = std::max(end_, t); }

    void begin(GpmId g, Cycle t) {
        WorkItem item = std::move(queues_[g].front());
        queues_[g].pop_front();
        const DrawObject& obj = frame_.objects.at(item.object_index);
        const MachineConfig& cfg = m_.config();
        auto costs = stage_costs(obj, item.slice, trace_.bytes_per_fragment, cfg, item.smp);

        StageCost& frag = costs[3];
        const AccessSummary a = m_.touch_pages(g, frag.footprint);
        frag.local_bytes = a.local_bytes;
        frag.remote_bytes = a.remote_bytes;
        for (const auto& [src, bytes] : a.remote_by_source)
            ledger_.record(src, g, TrafficCategory::texture_remote, bytes);
        const std::uint64_t remote_tex = a.remote_bytes;

        Cycle duration = 0;
        for (std::size_t i = 0; i < 4; ++i) duration += stage_time(costs[i], cfg);
        running_[g] = Running{item, item.slice, t, t + duration, remote_tex, false};
    }

    Completion complete(GpmId g) {
        Running r = std::move(*running_[g]);
        running_[g].reset();
        m_.occupy_core(g, r.start, r.end - r.start);
        busy_[g] += r.end - r.start;
        worked_[g] = true;
        last_end_[g] = std::max(last_end_[g], r.end);
        note(r.end);

        const DrawObject& obj = frame_.objects.at(r.item.object_index);
        const auto route = [&](const Rect& bbox, std::uint64_t px) {
            if (px == 0) return;
            rendered_ += px;
            std::vector<std::uint64_t> owned(m_.gpm_count(), 0);
            switch (mode_) {
                case CompositionMode::local: owned[g] = px; break;
                case CompositionMode::root: owned[0] = px; break;
                case CompositionMode::distributed: {
                    const auto split = pixels_by_column_owner(bbox, px, parts_);
                    for (std::size_t i = 0; i < split.size(); ++i) owned[parts_[i].gpm_id] += split[i];
                    break;
                }
            }
            for (GpmId o = 0; o < m_.gpm_count(); ++o) write_pixels(g, o, owned[o], r.end);
        };
        const auto px = r.done.pixel_units;
        if (r.done.views != Views::right) route(obj.bbox_per_view[0], px);
        if (r.done.views != Views::left) route(obj.bbox_per_view[1], px);

        return Completion{g, std::move(r.item), r.done, r.start, r.end, r.remote_texture_bytes, r.truncated};
    }

    void write_pixels(GpmId renderer, GpmId owner, std::uint64_t px, Cycle ready) {
        if (px == 0) return;
        const MachineConfig& cfg = m_.config();
        composed_ += px;
        Cycle arrival = ready;
        if (owner != renderer) {
            const std::uint64_t z = px * cfg.ztest_bytes_per_pixel;
            const std::uint64_t c = px * cfg.fb_bytes_per_pixel;
            if (z > 0) ledger_.record(renderer, owner, TrafficCategory::ztest, z);
            ledger_.record(renderer, owner, TrafficCategory::composition, c);
            arrival = m_.post_transfer(renderer, owner, z + c, ready);
        }
        const Cycle done = m_.occupy_rop(owner, arrival, rop_cycles(px, cfg));
        worked_[owner] = true;
        last_end_[owner] = std::max(last_end_[owner], done);
        note(done);
    }

    Machine& m_;
    TrafficLedger& ledger_;
    const Trace& trace_;
    const Frame& frame_;
    CompositionMode mode_;
    bool commands_;
    Cycle start_;
    Cycle now_;
    Cycle end_;
    std::vector<FbPartition> parts_;
    std::vector<std::deque<WorkItem>> queues_;
    std::vector<std::optional<Running>> running_;
    std::vector<Cycle> last_end_;
    std::vector<Cycle> busy_;
    std::vector<bool> worked_;
    std::uint64_t rendered_ = 0;
    std::uint64_t composed_ = 0;
    std::uint64_t copied_bytes_ = 0;
};

}  // namespace rrsim
