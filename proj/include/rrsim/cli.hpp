#pragma once

// Experiment runner plumbing: run configs, scheme matrices, bandwidth and
// GPM-count sweeps, report files and the index CSV.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rrsim/errors.hpp"
#include "rrsim/machine.hpp"
#include "rrsim/metrics.hpp"
#include "rrsim/schemes.hpp"
#include "rrsim/trace.hpp"

namespace rrsim {

/// A trace file that cannot be read.
class TraceFileError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SweepKind { run, bandwidth, gpms };

inline constexpr std::string_view sweep_name(SweepKind k) {
    switch (k) {
        case SweepKind::run: return "run";
        case SweepKind::bandwidth: return "sweep-bw";
        case SweepKind::gpms: return "sweep-gpms";
    }
    return "?";
}

struct RunConfig {
    std::optional<std::string> trace_path;  // otherwise `scene` is generated
    SceneParams scene = reference_scene_params();
    std::vector<SchemeId> schemes;
    MachineConfig machine;
    std::vector<double> link_gbps;
    std::vector<std::uint32_t> gpm_counts;
    std::string out_dir = "out";
};

struct RunPoint {
    SchemeId scheme = SchemeId::baseline;
    double link_gbps = 0.0;
    std::uint32_t gpm_count = 0;
    friend bool operator==(const RunPoint&, const RunPoint&) = default;
};

template <typename Params, typename Visitor>
void visit_scene_fields(Params& p, Visitor&& v) {
    v("seed", p.seed);
    v("frames", p.frames);
    v("objects_per_frame", p.objects_per_frame);
    v("triangle_median", p.triangle_median);
    v("triangle_sigma", p.triangle_sigma);
    v("texture_pool_size", p.texture_pool_size);
    v("texture_min_bytes", p.texture_min_bytes);
    v("texture_max_bytes", p.texture_max_bytes);
    v("sharing_cluster_size", p.sharing_cluster_size);
    v("stereo_overlap_fraction", p.stereo_overlap_fraction);
    v("width", p.width);
    v("height", p.height);
    v("bytes_per_fragment", p.bytes_per_fragment);
    v("dependency_fraction", p.dependency_fraction);
    v("coverage", p.coverage);
    v("coverage_sigma", p.coverage_sigma);
    v("frame_jitter", p.frame_jitter);
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t");
    return std::string(s.substr(a, b - a + 1));
}

/// Parses `text` into an arithmetic field; `field` names it in errors.
template <typename T>
T parse_number(std::string_view field, std::string_view text) {
    const std::string s = trim(text);
    T value{};
    if constexpr (std::is_floating_point_v<T>) {
        char* end = nullptr;
        errno = 0;
        const double d = std::strtod(s.c_str(), &end);
        if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(d))
            throw ConfigError(std::string(field) + ": expected a number, got '" + s + "'");
        value = static_cast<T>(d);
    } else {
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
        if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
            throw ConfigError(std::string(field) + ": expected a non-negative integer, got '" + s + "'");
    }
    return value;
}

template <typename T>
void assign_json(std::string_view field, T& out, const nlohmann::json& j) {
    if constexpr (std::is_floating_point_v<T>) {
        if (!j.is_number()) throw ConfigError(std::string(field) + ": expected a number");
        out = j.get<T>();
    } else {
        if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<long long>() >= 0))
            throw ConfigError(std::string(field) + ": expected a non-negative integer");
        out = j.get<T>();
    }
}

template <typename Fields>
bool set_by_name(Fields&& visit, std::string_view name, std::string_view text) {
    bool found = false;
    visit([&](const char* field, auto& ref) {
        if (name != field) return;
        ref = parse_number<std::remove_reference_t<decltype(ref)>>(field, text);
        found = true;
    });
    return found;
}

inline std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto end = comma == std::string_view::npos ? s.size() : comma;
        const std::string item = trim(s.substr(start, end - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

/// Shortest round-trip text for a double (integers without a fraction).
inline std::string number_text(double v) {
    if (v == std::floor(v) && std::abs(v) < 1e15) return std::to_string(static_cast<long long>(v));
    return nlohmann::json(v).dump();
}

}  // namespace detail

/// Sets one MachineConfig field from text; unknown names throw ConfigError.
inline void set_machine_field(MachineConfig& cfg, std::string_view name, std::string_view text) {
    if (!detail::set_by_name([&](auto&& v) { visit_fields(cfg, v); }, name, text))
        throw ConfigError("unknown machine field '" + std::string(name) + "'");
}

inline void set_scene_field(SceneParams& p, std::string_view name, std::string_view text) {
    if (!detail::set_by_name([&](auto&& v) { visit_scene_fields(p, v); }, name, text))
        throw ConfigError("unknown scene field '" + std::string(name) + "'");
}

inline std::vector<SchemeId> parse_scheme_list(std::string_view text) {
    std::vector<SchemeId> out;
    for (const auto& name : detail::split_list(text)) {
        const SchemeId s = parse_scheme(name);
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    }
    if (out.empty()) throw ConfigError("scheme: at least one scheme is required");
    return out;
}

inline std::vector<double> parse_bandwidth_list(std::string_view text) {
    std::vector<double> out;
    for (const auto& item : detail::split_list(text)) out.push_back(detail::parse_number<double>("link_gbps", item));
    if (out.empty()) throw ConfigError("link_gbps: empty list");
    return out;
}

inline std::vector<std::uint32_t> parse_gpm_list(std::string_view text) {
    std::vector<std::uint32_t> out;
    for (const auto& item : detail::split_list(text))
        out.push_back(detail::parse_number<std::uint32_t>("gpm_count", item));
    if (out.empty()) throw ConfigError("gpm_count: empty list");
    return out;
}

/// Applies a JSON run-config document. Recognized keys: trace, scene,
/// schemes, machine, link_gbps, gpms, out, seed.
inline void apply_json_config(RunConfig& rc, const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [key, value] : j.items()) {
        if (key == "trace") {
            if (!value.is_string()) throw ConfigError("trace: expected a path string");
            rc.trace_path = value.get<std::string>();
        } else if (key == "out") {
            if (!value.is_string()) throw ConfigError("out: expected a path string");
            rc.out_dir = value.get<std::string>();
        } else if (key == "seed") {
            detail::assign_json("seed", rc.scene.seed, value);
        } else if (key == "schemes") {
            if (value.is_string()) {
                rc.schemes = parse_scheme_list(value.get<std::string>());
            } else if (value.is_array()) {
                std::string joined;
                for (const auto& s : value) {
                    if (!s.is_string()) throw ConfigError("schemes: expected scheme names");
                    joined += s.get<std::string>() + ",";
                }
                rc.schemes = parse_scheme_list(joined);
            } else {
                throw ConfigError("schemes: expected a list of names");
            }
        } else if (key == "link_gbps" || key == "gpms") {
            if (!value.is_array() || value.empty()) throw ConfigError(key + ": expected a non-empty list");
            if (key == "link_gbps") {
                rc.link_gbps.clear();
                for (const auto& v : value) detail::assign_json("link_gbps", rc.link_gbps.emplace_back(), v);
            } else {
                rc.gpm_counts.clear();
                for (const auto& v : value) detail::assign_json("gpm_count", rc.gpm_counts.emplace_back(), v);
            }
        } else if (key == "machine" || key == "scene") {
            if (!value.is_object()) throw ConfigError(key + ": expected an object");
            for (const auto& [field, v] : value.items()) {
                bool found = false;
                auto assign = [&](const char* name, auto& ref) {
                    if (field != name) return;
                    detail::assign_json(name, ref, v);
                    found = true;
                };
                if (key == "machine")
                    visit_fields(rc.machine, assign);
                else
                    visit_scene_fields(rc.scene, assign);
                if (!found) throw ConfigError("unknown " + key + " field '" + field + "'");
            }
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TraceFileError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw ConfigError("write failed for '" + path.string() + "'");
}

inline nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
}

inline Trace load_trace(const RunConfig& rc) {
    if (rc.trace_path) return parse_trace(read_file(*rc.trace_path));
    return generate_scene(rc.scene);
}

/// The runs a command performs, in report order.
inline std::vector<RunPoint> plan_runs(const RunConfig& rc, SweepKind kind) {
    if (rc.schemes.empty()) throw ConfigError("scheme: at least one scheme is required");
    std::vector<double> links{rc.machine.link_gbps};
    std::vector<std::uint32_t> gpms{rc.machine.gpm_count};
    if (kind == SweepKind::bandwidth) {
        if (rc.link_gbps.empty()) throw ConfigError("link_gbps: sweep-bw needs a bandwidth list");
        links = rc.link_gbps;
    } else if (kind == SweepKind::gpms) {
        if (rc.gpm_counts.empty()) throw ConfigError("gpm_count: sweep-gpms needs a GPM-count list");
        gpms = rc.gpm_counts;
    } else {
        if (!rc.link_gbps.empty()) links = rc.link_gbps;
        if (!rc.gpm_counts.empty()) gpms = rc.gpm_counts;
    }
    std::vector<RunPoint> out;
    for (double l : links)
        for (std::uint32_t g : gpms)
            for (SchemeId s : rc.schemes) {
                MachineConfig cfg = rc.machine;
                cfg.link_gbps = l;
                cfg.gpm_count = g;
                validate_config(cfg);
                out.push_back({s, l, g});
            }
    return out;
}

/// Concurrent sweep points allowed by RRSIM_THREADS (default: hardware).
inline unsigned thread_limit() {
    const char* env = std::getenv("RRSIM_THREADS");
    if (env == nullptr || *env == '\0') return std::max(1u, std::thread::hardware_concurrency());
    const auto n = detail::parse_number<unsigned>("RRSIM_THREADS", env);
    if (n == 0) throw ConfigError("RRSIM_THREADS: must be at least 1");
    return n;
}

/// Runs every point; results are in plan order whatever the thread count.
inline std::vector<MetricsReport> run_points(const Trace& trace, const MachineConfig& base,
                                             const std::vector<RunPoint>& points, unsigned threads) {
    std::vector<MetricsReport> out(points.size());
    std::vector<std::exception_ptr> errors(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next++) < points.size();) {
            try {
                MachineConfig cfg = base;
                cfg.link_gbps = points[i].link_gbps;
                cfg.gpm_count = points[i].gpm_count;
                out[i] = run_scheme(points[i].scheme, trace, cfg);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(points.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

inline std::string report_stem(const RunPoint& p) {
    std::string link = detail::number_text(p.link_gbps);
    std::replace(link.begin(), link.end(), '.', 'p');
    return std::string(scheme_name(p.scheme)) + "_link" + link + "_gpm" + std::to_string(p.gpm_count);
}

/// One row per run. Latency and traffic are normalized to the reference:
/// baseline at the same point (first scheme if baseline is absent), or for
/// GPM sweeps the same scheme at the smallest GPM count.
inline std::string index_csv(SweepKind kind, const std::vector<RunPoint>& points,
                             const std::vector<MetricsReport>& reports) {
    std::ostringstream out;
    out << "sweep,scheme,link_gbps,gpm_count,report,single_frame_latency_cycles,frames_per_megacycle,balance_ratio,"
           "total_link_bytes";
    for (auto c : kAllCategories) out << ',' << category_name(c);
    out << ",reference,latency_speedup,throughput_speedup,traffic_ratio\n";

    const bool has_baseline = std::any_of(points.begin(), points.end(),
                                          [](const RunPoint& p) { return p.scheme == SchemeId::baseline; });
    const SchemeId ref_scheme = has_baseline ? SchemeId::baseline : points.front().scheme;
    std::uint32_t min_gpms = points.front().gpm_count;
    for (const auto& p : points) min_gpms = std::min(min_gpms, p.gpm_count);

    auto find = [&](const RunPoint& want) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < points.size(); ++i)
            if (points[i] == want) return i;
        return std::nullopt;
    };
    const auto num = [](double v) { return nlohmann::json(v).dump(); };

    for (std::size_t i = 0; i < points.size(); ++i) {
        const RunPoint& p = points[i];
        const MetricsReport& r = reports[i];
        out << sweep_name(kind) << ',' << scheme_name(p.scheme) << ',' << detail::number_text(p.link_gbps) << ','
            << p.gpm_count << ',' << report_stem(p) << ".json," << num(r.single_frame_latency()) << ','
            << num(r.frames_per_megacycle()) << ',' << num(r.balance_ratio()) << ',' << r.ledger.total();
        for (auto c : kAllCategories) out << ',' << r.ledger.total(c);

        RunPoint ref = p;
        if (kind == SweepKind::gpms)
            ref.gpm_count = min_gpms;
        else
            ref.scheme = ref_scheme;
        const auto j = find(ref);
        if (!j) {
            out << ",,,,\n";
            continue;
        }
        const MetricsReport& base = reports[*j];
        out << ',' << report_stem(ref) << ',';
        if (r.single_frame_latency() > 0.0) out << num(base.single_frame_latency() / r.single_frame_latency());
        out << ',';
        if (base.frames_per_megacycle() > 0.0) out << num(r.frames_per_megacycle() / base.frames_per_megacycle());
        out << ',';
        if (base.ledger.total() > 0)
            out << num(static_cast<double>(r.ledger.total()) / static_cast<double>(base.ledger.total()));
        out << '\n';
    }
    return out.str();
}

/// Writes <stem>.json and <stem>.csv per run plus index.csv.
inline void write_outputs(const std::filesystem::path& dir, SweepKind kind, const std::vector<RunPoint>& points,
                          const std::vector<MetricsReport>& reports) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("out: cannot create '" + dir.string() + "': " + ec.message());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const std::string stem = report_stem(points[i]);
        write_file(dir / (stem + ".json"), serialize_report(reports[i]));
        write_file(dir / (stem + ".csv"), report_to_csv(reports[i]));
    }
    write_file(dir / "index.csv", index_csv(kind, points, reports));
}

/// Summary printed by `gen`: sizes and texture sharing statistics.
inline std::string trace_summary(const Trace& t) {
    std::uint64_t objects = 0, triangles = 0, pixels = 0;
    std::map<TextureId, std::uint64_t> users;
    for (const auto& f : t.frames)
        for (const auto& o : f.objects) {
            ++objects;
            triangles += o.triangle_count;
            pixels += 2 * o.pixels_per_view;
            for (const auto& ref : o.textures) ++users[ref.texture_id];
        }
    std::uint64_t texture_bytes = 0;
    for (const auto& [id, bytes] : t.texture_table) texture_bytes += bytes;
    std::uint64_t shared = 0, refs = 0;
    for (const auto& [id, n] : users) {
        refs += n;
        if (n > 1) ++shared;
    }
    std::ostringstream out;
    out << "frames " << t.frames.size() << "\n"
        << "objects " << objects << "\n"
        << "triangles " << triangles << "\n"
        << "pixels " << pixels << "\n"
        << "textures " << t.texture_table.size() << " (" << texture_bytes << " bytes)\n"
        << "shared textures " << shared << "\n"
        << "references per used texture "
        << detail::number_text(users.empty() ? 0.0 : static_cast<double>(refs) / static_cast<double>(users.size()))
        << "\n";
    return out.str();
}

}  // namespace rrsim
