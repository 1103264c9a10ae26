#pragma once

// Workload data model, deterministic synthetic scene generator and the
// line-oriented `rrtrace v1` text format.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rrsim/errors.hpp"

namespace rrsim {

using TextureId = std::uint32_t;
using ObjectId = std::uint64_t;

/// Half-open integer rectangle [x0, x1) x [y0, y1) in stereo-frame pixels.
struct Rect {
    std::int64_t x0 = 0;
    std::int64_t y0 = 0;
    std::int64_t x1 = 0;
    std::int64_t y1 = 0;

    std::int64_t width() const { return x1 - x0; }
    std::int64_t height() const { return y1 - y0; }
    std::int64_t area() const { return width() * height(); }
    friend bool operator==(const Rect&, const Rect&) = default;
};

struct TextureRef {
    TextureId texture_id = 0;
    std::uint64_t bytes = 0;  // bytes of the texture this object samples
    friend bool operator==(const TextureRef&, const TextureRef&) = default;
};

enum class Eye : int { left = 0, right = 1 };

struct DrawObject {
    ObjectId object_id = 0;
    std::uint64_t vertex_count = 0;
    std::uint64_t triangle_count = 0;
    std::uint64_t pixels_per_view = 0;
    std::array<Rect, 2> bbox_per_view{};  // indexed by Eye
    std::vector<TextureRef> textures;
    std::vector<ObjectId> depends_on;

    const Rect& bbox(Eye eye) const { return bbox_per_view[static_cast<int>(eye)]; }
    std::uint64_t texture_bytes() const {
        std::uint64_t total = 0;
        for (const auto& t : textures) total += t.bytes;
        return total;
    }
    friend bool operator==(const DrawObject&, const DrawObject&) = default;
};

/// One stereo frame pair. width/height are per eye; the stereo frame is
/// 2*width columns wide with the left eye in [0, width).
struct Frame {
    std::int64_t frame_id = 0;
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<DrawObject> objects;  // programmer-defined submission order
    friend bool operator==(const Frame&, const Frame&) = default;
};

struct Trace {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint64_t bytes_per_fragment = 1;
    std::map<TextureId, std::uint64_t> texture_table;
    std::vector<Frame> frames;
    std::map<std::string, std::string> metadata;
    friend bool operator==(const Trace&, const Trace&) = default;
};

/// Checks every data-model invariant. Throws ValidationError naming the
/// first offending object (object id -1 for trace-level problems).
inline void validate_trace(const Trace& trace) {
    if (trace.width == 0 || trace.height == 0) throw ValidationError(-1, "resolution must be positive");
    if (trace.bytes_per_fragment == 0) throw ValidationError(-1, "bytes_per_fragment must be positive");
    for (const auto& [id, bytes] : trace.texture_table)
        if (bytes == 0) throw ValidationError(-1, "texture " + std::to_string(id) + " has zero size");

    const std::int64_t w = trace.width;
    const std::int64_t h = trace.height;
    for (const auto& frame : trace.frames) {
        if (frame.width != trace.width || frame.height != trace.height)
            throw ValidationError(-1, "frame " + std::to_string(frame.frame_id) + " resolution differs from header");
        std::unordered_set<ObjectId> seen;
        for (const auto& obj : frame.objects) {
            const auto oid = static_cast<long long>(obj.object_id);
            if (!seen.insert(obj.object_id).second) throw ValidationError(oid, "duplicate object id in frame");
            if (obj.vertex_count == 0) throw ValidationError(oid, "vertex_count must be positive");
            if (obj.triangle_count == 0) throw ValidationError(oid, "triangle_count must be positive");
            if (obj.triangle_count > obj.vertex_count * 3) throw ValidationError(oid, "more triangles than 3 x vertices");
            for (int e = 0; e < 2; ++e) {
                const Rect& r = obj.bbox_per_view[e];
                const std::int64_t lo = e == 0 ? 0 : w;
                if (r.x0 < lo || r.x1 > lo + w || r.x0 > r.x1 || r.y0 < 0 || r.y1 > h || r.y0 > r.y1)
                    throw ValidationError(oid, std::string(e == 0 ? "left" : "right") + " bbox outside its eye");
            }
            std::set<TextureId> tex_ids;
            for (const auto& t : obj.textures) {
                auto it = trace.texture_table.find(t.texture_id);
                if (it == trace.texture_table.end())
                    throw ValidationError(oid, "unknown texture id " + std::to_string(t.texture_id));
                if (t.bytes == 0) throw ValidationError(oid, "texture reference with zero bytes");
                if (t.bytes > it->second) throw ValidationError(oid, "texture reference larger than texture");
                if (!tex_ids.insert(t.texture_id).second) throw ValidationError(oid, "texture referenced twice");
            }
            for (ObjectId dep : obj.depends_on)
                if (!seen.contains(dep) || dep == obj.object_id)
                    throw ValidationError(oid, "dependency " + std::to_string(dep) + " is not an earlier object");
        }
    }
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string serialize_trace(const Trace& trace) {
    std::ostringstream out;
    out << "rrtrace v1 " << trace.frames.size() << ' ' << trace.width << ' ' << trace.height << ' '
        << trace.bytes_per_fragment << '\n';
    for (const auto& [key, value] : trace.metadata) out << "M " << key << ' ' << value << '\n';
    out << "# textures " << trace.texture_table.size() << '\n';
    for (const auto& [id, bytes] : trace.texture_table) out << "T " << id << ' ' << bytes << '\n';
    out << "# frames " << trace.frames.size() << '\n';
    for (const auto& frame : trace.frames) {
        out << "F " << frame.frame_id << '\n';
        for (const auto& obj : frame.objects) {
            out << "O " << obj.object_id << ' ' << obj.vertex_count << ' ' << obj.triangle_count << ' '
                << obj.pixels_per_view;
            for (const auto& r : obj.bbox_per_view) out << ' ' << r.x0 << ' ' << r.y0 << ' ' << r.x1 << ' ' << r.y1;
            auto deps = obj.depends_on;
            std::sort(deps.begin(), deps.end());
            out << " deps=";
            for (std::size_t i = 0; i < deps.size(); ++i) out << (i ? "," : "") << deps[i];
            auto tex = obj.textures;
            std::sort(tex.begin(), tex.end(), [](const auto& a, const auto& b) { return a.texture_id < b.texture_id; });
            out << " tex=";
            for (std::size_t i = 0; i < tex.size(); ++i)
                out << (i ? "," : "") << tex[i].texture_id << ':' << tex[i].bytes;
            out << '\n';
        }
    }
    return out.str();
}

namespace detail {

struct LineCursor {
    std::string_view text;
    std::size_t line_no;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(line_no, "col " + std::to_string(pos + 1) + ": " + what);
    }

    std::string_view token() {
        while (pos < text.size() && text[pos] == ' ') ++pos;
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] != ' ') ++pos;
        if (start == pos) fail("unexpected end of line");
        return text.substr(start, pos - start);
    }

    bool at_end() {
        while (pos < text.size() && text[pos] == ' ') ++pos;
        return pos == text.size();
    }

    std::uint64_t parse_u64(std::string_view tok) const {
        if (tok.empty() || tok.size() > 20) fail("expected unsigned integer");
        std::uint64_t v = 0;
        for (char c : tok) {
            if (c < '0' || c > '9') fail("expected unsigned integer, got '" + std::string(tok) + "'");
            const std::uint64_t d = static_cast<std::uint64_t>(c - '0');
            if (v > (std::numeric_limits<std::uint64_t>::max() - d) / 10) fail("integer overflow");
            v = v * 10 + d;
        }
        return v;
    }

    std::int64_t parse_i64(std::string_view tok) const {
        const bool neg = !tok.empty() && tok.front() == '-';
        const std::uint64_t mag = parse_u64(neg ? tok.substr(1) : tok);
        if (mag > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) fail("integer overflow");
        return neg ? -static_cast<std::int64_t>(mag) : static_cast<std::int64_t>(mag);
    }

    std::uint64_t u64() { return parse_u64(token()); }
    std::int64_t i64() { return parse_i64(token()); }

    std::string_view keyed(std::string_view key) {
        auto tok = token();
        if (tok.substr(0, key.size()) != key) fail("expected '" + std::string(key) + "'");
        return tok.substr(key.size());
    }
};

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> parts;
    if (s.empty()) return parts;
    std::size_t start = 0;
    while (true) {
        const auto at = s.find(sep, start);
        parts.push_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
        if (at == std::string_view::npos) break;
        start = at + 1;
    }
    return parts;
}

}  // namespace detail

/// Parses an `rrtrace v1` document and validates all invariants.
inline Trace parse_trace(std::string_view bytes) {
    Trace trace;
    std::size_t declared_frames = 0;
    bool have_header = false;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < bytes.size()) {
        auto end = bytes.find('\n', start);
        if (end == std::string_view::npos) end = bytes.size();
        std::string_view line = bytes.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') throw ParseError(line_no, "CR line endings are not allowed");
        if (line.empty() || line.front() == '#') continue;

        detail::LineCursor cur{line, line_no};
        const auto tag = cur.token();
        if (!have_header) {
            if (tag != "rrtrace" || cur.token() != "v1") cur.fail("missing 'rrtrace v1' header");
            declared_frames = cur.u64();
            trace.width = static_cast<std::uint32_t>(cur.u64());
            trace.height = static_cast<std::uint32_t>(cur.u64());
            trace.bytes_per_fragment = cur.u64();
            have_header = true;
        } else if (tag == "M") {
            const auto key = std::string(cur.token());
            while (cur.pos < line.size() && line[cur.pos] == ' ') ++cur.pos;
            trace.metadata[key] = std::string(line.substr(cur.pos));
            continue;
        } else if (tag == "T") {
            const auto id = cur.u64();
            if (id > std::numeric_limits<TextureId>::max()) cur.fail("texture id out of range");
            if (!trace.texture_table.emplace(static_cast<TextureId>(id), cur.u64()).second)
                cur.fail("duplicate texture id " + std::to_string(id));
        } else if (tag == "F") {
            Frame f;
            f.frame_id = cur.i64();
            f.width = trace.width;
            f.height = trace.height;
            trace.frames.push_back(std::move(f));
        } else if (tag == "O") {
            if (trace.frames.empty()) cur.fail("object before any frame line");
            DrawObject obj;
            obj.object_id = cur.u64();
            obj.vertex_count = cur.u64();
            obj.triangle_count = cur.u64();
            obj.pixels_per_view = cur.u64();
            for (auto& r : obj.bbox_per_view) {
                r.x0 = cur.i64();
                r.y0 = cur.i64();
                r.x1 = cur.i64();
                r.y1 = cur.i64();
            }
            for (auto part : detail::split(cur.keyed("deps="), ',')) obj.depends_on.push_back(cur.parse_u64(part));
            for (auto part : detail::split(cur.keyed("tex="), ',')) {
                const auto colon = part.find(':');
                if (colon == std::string_view::npos) cur.fail("texture entry must be <id>:<bytes>");
                const auto id = cur.parse_u64(part.substr(0, colon));
                if (id > std::numeric_limits<TextureId>::max()) cur.fail("texture id out of range");
                obj.textures.push_back({static_cast<TextureId>(id), cur.parse_u64(part.substr(colon + 1))});
            }
            trace.frames.back().objects.push_back(std::move(obj));
        } else {
            cur.fail("unknown record tag '" + std::string(tag) + "'");
        }
        if (!cur.at_end()) cur.fail("trailing characters");
    }
    if (!have_header) throw ParseError(1, "empty input");
    if (declared_frames != trace.frames.size())
        throw ParseError(line_no, "header declares " + std::to_string(declared_frames) + " frames, found " +
                                      std::to_string(trace.frames.size()));
    validate_trace(trace);
    return trace;
}

// ---------------------------------------------------------------------------
// Synthetic scene generator

struct SceneParams {
    std::uint64_t seed = 1;
    std::uint32_t frames = 1;
    std::uint32_t objects_per_frame = 64;
    // Log-normal triangle counts, truncated to [8, 32768].
    double triangle_median = 1200.0;
    double triangle_sigma = 0.9;
    std::uint32_t texture_pool_size = 48;
    std::uint64_t texture_min_bytes = 256 * 1024;
    std::uint64_t texture_max_bytes = 2 * 1024 * 1024;
    std::uint32_t sharing_cluster_size = 4;
    double stereo_overlap_fraction = 0.8;
    std::uint32_t width = 1280;   // per eye
    std::uint32_t height = 720;
    std::uint64_t bytes_per_fragment = 64;
    double dependency_fraction = 0.05;
    double coverage = 0.01;       // median bbox area as a fraction of one eye
    double coverage_sigma = 0.8;
    double frame_jitter = 0.05;   // per-frame relative pixel-count variation
};

namespace detail {

// Portable RNG helpers: std distributions are implementation-defined, so
// traces must not depend on them.
class SceneRng {
public:
    explicit SceneRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Inclusive range.
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        const std::uint64_t span = hi - lo + 1;
        if (span == 0) return next();
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
        std::uint64_t v;
        do v = next();
        while (v >= limit);
        return lo + v % span;
    }
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t page_round(std::uint64_t bytes, std::uint64_t lo, std::uint64_t hi) {
    constexpr std::uint64_t kAlign = 4096;
    bytes = (bytes + kAlign / 2) / kAlign * kAlign;
    return std::clamp(bytes, lo, hi);
}

}  // namespace detail

inline void validate_scene_params(const SceneParams& p) {
    if (p.frames == 0) throw ParamError("frames", "must be positive");
    if (p.texture_pool_size == 0) throw ParamError("texture_pool_size", "must be positive");
    if (p.sharing_cluster_size == 0) throw ParamError("sharing_cluster_size", "must be positive");
    if (p.width < 16 || p.height < 16) throw ParamError("resolution", "must be at least 16x16 per eye");
    if (p.bytes_per_fragment == 0) throw ParamError("bytes_per_fragment", "must be positive");
    if (!(p.triangle_median >= 8.0 && p.triangle_median <= 32768.0))
        throw ParamError("triangle_median", "must lie in [8, 32768]");
    if (!(p.triangle_sigma >= 0.0)) throw ParamError("triangle_sigma", "must be non-negative");
    if (!(p.stereo_overlap_fraction >= 0.0 && p.stereo_overlap_fraction <= 1.0))
        throw ParamError("stereo_overlap_fraction", "must lie in [0, 1]");
    if (!(p.dependency_fraction >= 0.0 && p.dependency_fraction <= 1.0))
        throw ParamError("dependency_fraction", "must lie in [0, 1]");
    if (p.texture_min_bytes < 4096 || p.texture_min_bytes > p.texture_max_bytes)
        throw ParamError("texture_min_bytes", "must be >= 4096 and <= texture_max_bytes");
    if (!(p.coverage > 0.0 && p.coverage <= 1.0)) throw ParamError("coverage", "must lie in (0, 1]");
    if (!(p.coverage_sigma >= 0.0)) throw ParamError("coverage_sigma", "must be non-negative");
    if (!(p.frame_jitter >= 0.0 && p.frame_jitter < 1.0)) throw ParamError("frame_jitter", "must lie in [0, 1)");
}

/// Builds a deterministic stereo scene. Objects are grouped into sharing
/// clusters of consecutive submissions; every member samples its cluster
/// root's primary texture. The same objects are drawn in every frame with
/// small per-frame pixel and position variation.
inline Trace generate_scene(const SceneParams& p) {
    validate_scene_params(p);
    detail::SceneRng rng(p.seed);

    Trace trace;
    trace.width = p.width;
    trace.height = p.height;
    trace.bytes_per_fragment = p.bytes_per_fragment;
    trace.metadata["generator"] = "rrsim-scene";
    trace.metadata["seed"] = std::to_string(p.seed);

    const double log_min = std::log(static_cast<double>(p.texture_min_bytes));
    const double log_max = std::log(static_cast<double>(p.texture_max_bytes));
    for (TextureId id = 0; id < p.texture_pool_size; ++id) {
        const double b = std::exp(rng.uniform(log_min, log_max));
        trace.texture_table[id] =
            detail::page_round(static_cast<std::uint64_t>(b), p.texture_min_bytes, p.texture_max_bytes);
    }
    auto ref_bytes = [&](TextureId id, double fraction) {
        const auto total = trace.texture_table.at(id);
        return detail::page_round(static_cast<std::uint64_t>(static_cast<double>(total) * fraction), 4096, total);
    };

    struct Proto {
        DrawObject obj;
        std::int64_t x, y, w, h, disparity;
    };
    std::vector<Proto> protos;
    protos.reserve(p.objects_per_frame);
    const std::int64_t W = p.width;
    const std::int64_t H = p.height;
    std::vector<TextureRef> root_textures;
    for (std::uint32_t i = 0; i < p.objects_per_frame; ++i) {
        Proto pr{};
        DrawObject& o = pr.obj;
        o.object_id = i;

        double tris = 0.0;
        for (int attempt = 0; attempt < 64; ++attempt) {
            tris = p.triangle_median * std::exp(p.triangle_sigma * rng.normal());
            if (tris >= 8.0 && tris <= 32768.0) break;
        }
        o.triangle_count = static_cast<std::uint64_t>(std::llround(std::clamp(tris, 8.0, 32768.0)));
        o.vertex_count = std::max<std::uint64_t>(
            3, static_cast<std::uint64_t>(std::llround(static_cast<double>(o.triangle_count) * rng.uniform(0.55, 0.75))));

        if (i % p.sharing_cluster_size == 0) {
            root_textures.clear();
            const TextureId primary = static_cast<TextureId>(rng.uniform_int(0, p.texture_pool_size - 1));
            root_textures.push_back({primary, ref_bytes(primary, rng.uniform(0.5, 1.0))});
            if (p.texture_pool_size > 1 && rng.uniform() < 0.5) {
                TextureId second = static_cast<TextureId>(rng.uniform_int(0, p.texture_pool_size - 2));
                if (second >= primary) ++second;
                root_textures.push_back({second, ref_bytes(second, rng.uniform(0.25, 0.75))});
            }
            o.textures = root_textures;
        } else {
            const TextureRef primary = root_textures.front();
            o.textures.push_back(primary);
            if (p.texture_pool_size > 1 && rng.uniform() < 0.5) {
                TextureId extra = static_cast<TextureId>(rng.uniform_int(0, p.texture_pool_size - 2));
                if (extra >= primary.texture_id) ++extra;
                const auto total = trace.texture_table.at(extra);
                o.textures.push_back({extra, detail::page_round(primary.bytes / 4, 4096, total)});
            }
        }

        std::sort(o.textures.begin(), o.textures.end(),
                  [](const TextureRef& a, const TextureRef& b) { return a.texture_id < b.texture_id; });

        if (i > 0 && rng.uniform() < p.dependency_fraction) {
            const std::uint64_t back = rng.uniform_int(1, std::min<std::uint64_t>(i, 8));
            o.depends_on.push_back(i - back);
        }

        const double area_frac =
            std::clamp(p.coverage * std::exp(p.coverage_sigma * rng.normal()), 2e-5, 0.25);
        const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
        const double area = area_frac * static_cast<double>(W * H);
        pr.w = std::clamp<std::int64_t>(std::llround(std::sqrt(area * aspect)), 1, W);
        pr.h = std::clamp<std::int64_t>(std::llround(std::sqrt(area / aspect)), 1, H);
        pr.x = static_cast<std::int64_t>(rng.uniform_int(0, static_cast<std::uint64_t>(W - pr.w)));
        pr.y = static_cast<std::int64_t>(rng.uniform_int(0, static_cast<std::uint64_t>(H - pr.h)));
        pr.disparity = std::llround((1.0 - p.stereo_overlap_fraction) * static_cast<double>(pr.w));
        o.pixels_per_view = static_cast<std::uint64_t>(std::llround(static_cast<double>(pr.w * pr.h) * rng.uniform(0.35, 0.9)));
        protos.push_back(std::move(pr));
    }

    for (std::uint32_t f = 0; f < p.frames; ++f) {
        Frame frame;
        frame.frame_id = f;
        frame.width = p.width;
        frame.height = p.height;
        const std::int64_t pan = static_cast<std::int64_t>(f) * 4;
        for (const auto& pr : protos) {
            DrawObject o = pr.obj;
            const double scale = 1.0 + (f == 0 ? 0.0 : rng.uniform(-p.frame_jitter, p.frame_jitter));
            o.pixels_per_view = std::min<std::uint64_t>(
                static_cast<std::uint64_t>(pr.w * pr.h),
                static_cast<std::uint64_t>(std::llround(static_cast<double>(o.pixels_per_view) * scale)));
            const std::int64_t lx = std::clamp<std::int64_t>(pr.x + pan, 0, W - pr.w);
            const std::int64_t rx = std::max<std::int64_t>(0, lx - pr.disparity);
            o.bbox_per_view[0] = {lx, pr.y, lx + pr.w, pr.y + pr.h};
            o.bbox_per_view[1] = {W + rx, pr.y, W + rx + pr.w, pr.y + pr.h};
            frame.objects.push_back(std::move(o));
        }
        trace.frames.push_back(std::move(frame));
    }
    validate_trace(trace);
    return trace;
}

/// Parameters of the bundled reference scene (data/ref.rrtrace).
inline SceneParams reference_scene_params() {
    SceneParams p;
    p.seed = 9;
    p.frames = 4;
    p.objects_per_frame = 512;
    p.triangle_median = 1256.56;
    p.triangle_sigma = 0.64;
    p.texture_pool_size = 1;
    p.texture_min_bytes = 2359296;
    p.texture_max_bytes = 2359296;
    p.sharing_cluster_size = 3;
    p.bytes_per_fragment = 3722;
    p.coverage = 0.00361;
    p.frame_jitter = 0.0044;
    return p;
}

/// Near-uniform object costs; used for GPM-count scaling experiments.
inline SceneParams balanced_scene_params() {
    SceneParams p;
    p.seed = 8;
    p.frames = 4;
    p.objects_per_frame = 512;
    p.triangle_median = 700.0;
    p.triangle_sigma = 0.1;
    p.texture_pool_size = 160;
    p.coverage = 0.004;
    p.coverage_sigma = 0.1;
    p.dependency_fraction = 0.0;
    return p;
}

}  // namespace rrsim
