#pragma once

// Object-oriented middleware: texture sharing level (TSL) and the greedy
// grouping of a frame's objects into texture-sharing batches.

#include <algorithm>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "rrsim/errors.hpp"
#include "rrsim/machine.hpp"
#include "rrsim/pipeline.hpp"
#include "rrsim/trace.hpp"

namespace rrsim {

using TextureFootprint = std::map<TextureId, std::uint64_t>;

inline TextureFootprint footprint_of(const DrawObject& obj) {
    TextureFootprint fp;
    for (const auto& t : obj.textures) fp[t.texture_id] = std::max(fp[t.texture_id], t.bytes);
    return fp;
}

/// Texture sharing level of `target` against `root`: over the shared
/// texture ids T, sum(P_r(t) * P_n(t)) / sum(P_r(t)). P_r(t) is t's byte
/// share of the root footprint; P_n(t) is the part of the root's bytes of t
/// that the target also samples, min(1, target(t) / root(t)). Zero when
/// nothing is shared; one for identical footprints.
inline double tsl(const TextureFootprint& root, const TextureFootprint& target) {
    if (root.empty() || target.empty()) throw DomainError("tsl of an empty texture footprint");
    // P_r(t) * P_n(t) = min(root(t), target(t)) / R and P_r(t) = root(t) / R,
    // so R cancels; integer sums keep the threshold comparison exact.
    unsigned __int128 covered = 0;
    unsigned __int128 shared = 0;
    for (const auto& [id, b] : root) {
        auto it = target.find(id);
        if (it == target.end()) continue;
        covered += std::min(b, it->second);
        shared += b;
    }
    return shared > 0 ? static_cast<double>(static_cast<long double>(covered) / static_cast<long double>(shared)) : 0.0;
}

struct BatchingOptions {
    std::uint64_t triangle_limit = 4096;
    double tsl_threshold = 0.5;
    std::uint32_t lookahead = 64;

    static BatchingOptions from(const MachineConfig& cfg) {
        return {cfg.batch_triangle_limit, cfg.tsl_threshold, cfg.batch_lookahead};
    }
};

struct MergeRecord {
    ObjectId object_id = 0;
    double tsl = 0.0;  // against the union footprint at merge time; unused when forced
    bool dependency = false;
};

struct Batch {
    std::uint32_t batch_id = 0;
    std::vector<ObjectId> members;            // submission order
    std::vector<std::size_t> member_indices;  // positions in the frame
    TextureFootprint union_textures;
    std::uint64_t total_triangles = 0;
    std::uint64_t total_vertices = 0;
    std::uint64_t total_pixels_both_views = 0;
    bool dependency_merged = false;
    std::vector<MergeRecord> merges;

    void add(const DrawObject& obj, std::size_t index) {
        members.push_back(obj.object_id);
        member_indices.push_back(index);
        for (const auto& t : obj.textures)
            union_textures[t.texture_id] = std::max(union_textures[t.texture_id], t.bytes);
        total_triangles += obj.triangle_count;
        total_vertices += obj.vertex_count;
        total_pixels_both_views += 2 * obj.pixels_per_view;
    }
};

/// Groups `frame` into batches. The head of the remaining queue becomes a
/// root; later objects whose prerequisites are all batched join when their
/// TSL against the growing union footprint exceeds the threshold and the
/// triangle limit still holds. Objects depending on a member are merged
/// unconditionally. TSL candidates are drawn from a bounded lookahead
/// window; the dependency scan covers the whole queue.
inline std::vector<Batch> build_batches(const Frame& frame, const BatchingOptions& opt = {}) {
    const std::size_t n = frame.objects.size();
    std::vector<Batch> batches;
    std::vector<bool> batched(n, false);
    std::unordered_map<ObjectId, std::size_t> index_of;
    for (std::size_t i = 0; i < n; ++i) index_of.emplace(frame.objects[i].object_id, i);

    auto deps_batched = [&](const DrawObject& obj) {
        return std::all_of(obj.depends_on.begin(), obj.depends_on.end(), [&](ObjectId d) {
            auto it = index_of.find(d);
            return it == index_of.end() || batched[it->second];
        });
    };

    std::size_t head = 0;
    while (true) {
        while (head < n && batched[head]) ++head;
        if (head == n) break;

        Batch batch;
        batch.batch_id = static_cast<std::uint32_t>(batches.size());
        batch.add(frame.objects[head], head);
        batched[head] = true;
        std::unordered_set<ObjectId> in_batch{frame.objects[head].object_id};

        std::uint32_t scanned = 0;
        for (std::size_t j = head + 1; j < n; ++j) {
            if (batched[j]) continue;
            const DrawObject& cand = frame.objects[j];
            const bool depends_on_member = std::any_of(cand.depends_on.begin(), cand.depends_on.end(),
                                                       [&](ObjectId d) { return in_batch.contains(d); });
            if (depends_on_member) {
                if (!deps_batched(cand)) continue;
                batch.add(cand, j);
                batch.dependency_merged = true;
                batch.merges.push_back({cand.object_id, 0.0, true});
                batched[j] = true;
                in_batch.insert(cand.object_id);
                continue;
            }
            if (scanned >= opt.lookahead) continue;
            ++scanned;
            if (batch.total_triangles > opt.triangle_limit) continue;
            if (batch.total_triangles + cand.triangle_count > opt.triangle_limit) continue;
            if (!deps_batched(cand) || cand.textures.empty() || batch.union_textures.empty()) continue;
            const double level = tsl(batch.union_textures, footprint_of(cand));
            if (level > opt.tsl_threshold) {
                batch.add(cand, j);
                batch.merges.push_back({cand.object_id, level, false});
                batched[j] = true;
                in_batch.insert(cand.object_id);
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

/// Predictor signals of a batch with every member rendering both views.
inline Signals batch_signals(const Batch& batch, const Frame& frame, bool smp_enabled) {
    if (batch.members.empty()) throw DomainError("signals of an empty batch");
    // tv counts both projections whether or not SMP merges the passes.
    (void)smp_enabled;
    Signals s;
    for (std::size_t idx : batch.member_indices) s += slice_signals(whole_object(frame.objects.at(idx), Views::both));
    return s;
}

}  // namespace rrsim
