// simrun: command-line front end for the stereo multi-GPM simulator.
//
//   simrun [run] --trace ref.rrtrace --scheme baseline,oo_vr --out out/
//   simrun sweep-bw --link-gbps 32,64,128,1024 --scheme baseline,oo_vr
//   simrun sweep-gpms --gpms 1,2,4,8 --scheme oo_vr
//   simrun gen --out scene.rrtrace --seed 7
//
// Exit status: 0 success, 2 configuration error, 3 trace error.

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "rrsim/cli.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitTrace = 3;

struct Flags {
    std::string config_file;
    std::string trace;
    std::string schemes;
    std::string gpms;
    std::string link_gbps;
    std::optional<double> local_gbps;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> page_bytes;
    std::optional<std::uint64_t> remote_cache_bytes;
    std::string out;
    std::map<std::string, std::string> cfg;
    std::map<std::string, std::string> scene;
};

rrsim::RunConfig build_config(const Flags& f, rrsim::SweepKind kind) {
    using namespace rrsim;
    RunConfig rc;
    if (!f.config_file.empty()) apply_json_config(rc, load_json_file(f.config_file));
    if (!f.trace.empty()) rc.trace_path = f.trace;
    if (f.seed) rc.scene.seed = *f.seed;
    for (const auto& [name, value] : f.scene) set_scene_field(rc.scene, name, value);
    for (const auto& [name, value] : f.cfg) set_machine_field(rc.machine, name, value);
    if (f.local_gbps) rc.machine.local_dram_gbps = *f.local_gbps;
    if (f.page_bytes) rc.machine.page_bytes = *f.page_bytes;
    if (f.remote_cache_bytes) rc.machine.remote_cache_bytes = *f.remote_cache_bytes;
    if (!f.out.empty()) rc.out_dir = f.out;

    if (!f.schemes.empty()) rc.schemes = parse_scheme_list(f.schemes);
    if (rc.schemes.empty()) rc.schemes.assign(kAllSchemes.begin(), kAllSchemes.end());

    if (!f.link_gbps.empty()) rc.link_gbps = parse_bandwidth_list(f.link_gbps);
    if (!f.gpms.empty()) rc.gpm_counts = parse_gpm_list(f.gpms);
    if (kind == SweepKind::bandwidth && rc.link_gbps.empty()) rc.link_gbps = {32.0, 64.0, 128.0, 1024.0};
    if (kind == SweepKind::gpms && rc.gpm_counts.empty()) rc.gpm_counts = {1, 2, 4, 8};
    return rc;
}

int run_command(const Flags& f, rrsim::SweepKind kind) {
    using namespace rrsim;
    const RunConfig rc = build_config(f, kind);
    const auto points = plan_runs(rc, kind);
    const unsigned threads = thread_limit();
    const Trace trace = load_trace(rc);
    const auto reports = run_points(trace, rc.machine, points, threads);
    write_outputs(rc.out_dir, kind, points, reports);
    for (std::size_t i = 0; i < points.size(); ++i)
        std::cout << report_stem(points[i]) << " latency " << reports[i].single_frame_latency() << " link_bytes "
                  << reports[i].ledger.total() << "\n";
    std::cout << "wrote " << points.size() << " reports to " << rc.out_dir << "\n";
    return 0;
}

int gen_command(const Flags& f) {
    using namespace rrsim;
    RunConfig rc = build_config(f, SweepKind::run);
    const Trace trace = generate_scene(rc.scene);
    const std::string path = f.out.empty() ? "scene.rrtrace" : f.out;
    write_file(path, serialize_trace(trace));
    std::cout << trace_summary(trace) << "wrote " << path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trace-driven stereo rendering simulator for NUMA multi-GPM systems"};
    app.require_subcommand(0, 1);

    Flags f;
    app.add_option("--config", f.config_file, "JSON run configuration");
    app.add_option("--trace", f.trace, "Trace file (default: generated reference scene)");
    app.add_option("--scheme", f.schemes, "Comma-separated schemes");
    app.add_option("--gpms", f.gpms, "GPM count, or comma-separated list for sweep-gpms");
    app.add_option("--link-gbps", f.link_gbps, "Link bandwidth, or comma-separated list for sweep-bw");
    app.add_option("--local-gbps", f.local_gbps, "Local DRAM bandwidth per GPM");
    app.add_option("--seed", f.seed, "Scene generator seed");
    app.add_option("--out", f.out, "Output directory (trace file for gen)");
    app.add_option("--page-bytes", f.page_bytes, "Page size in bytes");
    app.add_option("--remote-cache-bytes", f.remote_cache_bytes, "Remote page cache per GPM");

    rrsim::MachineConfig defaults;
    rrsim::visit_fields(defaults, [&](const char* name, const auto&) {
        const std::string field = name;
        app.add_option_function<std::string>(
            std::string("--cfg.") + field, [&f, field](const std::string& v) { f.cfg[field] = v; },
            "Machine field " + field);
    });
    rrsim::SceneParams scene_defaults;
    rrsim::visit_scene_fields(scene_defaults, [&](const char* name, const auto&) {
        const std::string field = name;
        app.add_option_function<std::string>(
            std::string("--scene.") + field, [&f, field](const std::string& v) { f.scene[field] = v; },
            "Scene generator field " + field);
    });

    app.add_subcommand("run", "Run schemes on one machine configuration")->fallthrough();
    auto* sweep_bw = app.add_subcommand("sweep-bw", "Sweep link bandwidth")->fallthrough();
    auto* sweep_gpms = app.add_subcommand("sweep-gpms", "Sweep GPM count")->fallthrough();
    auto* gen = app.add_subcommand("gen", "Generate a synthetic trace")->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gen->parsed()) return gen_command(f);
        if (sweep_bw->parsed()) return run_command(f, rrsim::SweepKind::bandwidth);
        if (sweep_gpms->parsed()) return run_command(f, rrsim::SweepKind::gpms);
        return run_command(f, rrsim::SweepKind::run);
    } catch (const rrsim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const rrsim::ParamError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const rrsim::DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const rrsim::ParseError& e) {
        std::cerr << "trace error: " << e.what() << "\n";
        return kExitTrace;
    } catch (const rrsim::ValidationError& e) {
        std::cerr << "trace error: " << e.what() << "\n";
        return kExitTrace;
    } catch (const rrsim::TraceFileError& e) {
        std::cerr << "trace error: " << e.what() << "\n";
        return kExitTrace;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
