#include <gtest/gtest.h>

#include "generators.hpp"
#include "rrsim/pipeline.hpp"

using namespace rrsim;

namespace {

DrawObject example_object() {
    DrawObject o;
    o.object_id = 1;
    o.vertex_count = 128;
    o.triangle_count = 64;
    o.pixels_per_view = 1000;
    o.bbox_per_view[0] = {0, 0, 40, 40};
    o.bbox_per_view[1] = {1280, 0, 1320, 40};
    o.textures = {{0, 1 << 20}};
    return o;
}

Cycle stage(const std::vector<StageCost>& c, Stage s) { return c[static_cast<std::size_t>(s)].compute_cycles; }

std::uint64_t footprint_bytes(const std::vector<StageCost>& c, const MachineConfig& cfg) {
    return c[static_cast<std::size_t>(Stage::fragment)].footprint.size() * cfg.page_bytes;
}

}  // namespace

TEST(StageCosts, BothViewsWithSmp) {
    const MachineConfig cfg;
    const DrawObject o = example_object();
    const auto c = stage_costs(o, whole_object(o, Views::both), 64, cfg, true);
    EXPECT_EQ(stage(c, Stage::geometry), 16u);
    EXPECT_EQ(slice_signals(whole_object(o, Views::both)).tv, 256u);
    EXPECT_EQ(c[static_cast<std::size_t>(Stage::color)].output_pixels, 2000u);
    EXPECT_EQ(stage(c, Stage::fragment), 32u);  // ceil(2000 / 64)
    EXPECT_EQ(stage(c, Stage::color), 63u);     // ceil(2000 / 32)
    for (std::size_t i = 0; i + 1 < c.size(); ++i) EXPECT_EQ(c[i].output_pixels, 0u);
}

TEST(StageCosts, LeftViewOnlyHalvesFootprint) {
    const MachineConfig cfg;
    const DrawObject o = example_object();
    const auto both = stage_costs(o, whole_object(o, Views::both), 64, cfg, true);
    const auto left = stage_costs(o, whole_object(o, Views::left), 64, cfg, true);
    const auto right = stage_costs(o, whole_object(o, Views::right), 64, cfg, true);
    EXPECT_EQ(left[static_cast<std::size_t>(Stage::color)].output_pixels, 1000u);
    // both views share one footprint; left + right together read it twice
    EXPECT_EQ(footprint_bytes(left, cfg) + footprint_bytes(right, cfg), 2 * footprint_bytes(both, cfg));
    EXPECT_EQ(footprint_bytes(left, cfg), footprint_bytes(both, cfg));
}

TEST(StageCosts, ZeroPixelSlice) {
    const MachineConfig cfg;
    const DrawObject o = example_object();
    WorkSlice s = whole_object(o);
    s.pixel_units = 0;
    const auto c = stage_costs(o, s, 64, cfg, true);
    EXPECT_EQ(stage(c, Stage::raster), 0u);
    EXPECT_EQ(stage(c, Stage::fragment), 0u);
    EXPECT_EQ(stage(c, Stage::color), 0u);
    EXPECT_TRUE(c[static_cast<std::size_t>(Stage::fragment)].footprint.empty());
}

TEST(StageCosts, ZeroRateIsConfigError) {
    MachineConfig cfg;
    cfg.fragment_rate = 0;
    const DrawObject o = example_object();
    EXPECT_THROW(stage_costs(o, whole_object(o), 64, cfg, true), ConfigError);
}

TEST(StageCosts, OversizedSliceRejected) {
    const MachineConfig cfg;
    const DrawObject o = example_object();
    WorkSlice s = whole_object(o);
    s.pixel_units = 1001;
    EXPECT_THROW(stage_costs(o, s, 64, cfg, true), DomainError);
}

TEST(StageTime, ComputeBound) {
    const MachineConfig cfg;
    StageCost c;
    c.compute_cycles = 100;
    EXPECT_EQ(stage_time(c, cfg), 100u);
}

TEST(StageTime, RemoteBound) {
    const MachineConfig cfg;
    StageCost c;
    c.compute_cycles = 10;
    c.remote_bytes = 6400;
    EXPECT_EQ(stage_time(c, cfg), 100u);
}

TEST(StageTime, LocalTie) {
    const MachineConfig cfg;
    StageCost c;
    c.compute_cycles = 100;
    c.local_bytes = 102400;
    EXPECT_EQ(stage_time(c, cfg), 100u);
}

TEST(StageTime, PropertyMonotone) {
    const MachineConfig cfg;
    testgen::Gen g(3);
    for (int i = 0; i < 1000; ++i) {
        StageCost a;
        a.compute_cycles = g.range(0, 5000);
        a.local_bytes = g.range(0, 1 << 22);
        a.remote_bytes = g.range(0, 1 << 18);
        StageCost b = a;
        switch (g.range(0, 2)) {
            case 0: b.compute_cycles += g.range(0, 100); break;
            case 1: b.local_bytes += g.range(0, 100000); break;
            default: b.remote_bytes += g.range(0, 10000); break;
        }
        EXPECT_LE(stage_time(a, cfg), stage_time(b, cfg));
    }
}

TEST(Pipeline, PropertySmpSaving) {
    const MachineConfig cfg;
    testgen::Gen g(9);
    const Frame f = g.frame(500);
    for (const auto& o : f.objects) {
        const auto both = stage_costs(o, whole_object(o, Views::both), 16, cfg, true);
        const auto left = stage_costs(o, whole_object(o, Views::left), 16, cfg, true);
        const auto right = stage_costs(o, whole_object(o, Views::right), 16, cfg, true);
        EXPECT_LT(stage(both, Stage::geometry), stage(left, Stage::geometry) + stage(right, Stage::geometry));
        // without SMP both views pay the geometry pass twice
        const auto plain = stage_costs(o, whole_object(o, Views::both), 16, cfg, false);
        EXPECT_EQ(stage(plain, Stage::geometry), 2 * stage(left, Stage::geometry));
    }
}

TEST(Pipeline, PropertySliceAdditivity) {
    testgen::Gen g(13);
    const Frame f = g.frame(300);
    for (const auto& o : f.objects) {
        const std::size_t parts = g.range(1, 9);
        const WorkSlice whole = whole_object(o);
        const auto v = split_even(o.vertex_count, parts);
        const auto t = split_even(o.triangle_count, parts);
        const auto p = split_even(o.pixels_per_view, parts);
        Signals sum;
        std::uint64_t offset = 0;
        for (std::size_t k = 0; k < parts; ++k) {
            WorkSlice s{o.object_id, Views::both, offset, v[k], t[k], p[k]};
            EXPECT_NO_THROW(validate_slice(s, o));
            offset += v[k];
            sum += slice_signals(s);
        }
        EXPECT_EQ(sum, slice_signals(whole));
        EXPECT_EQ(offset, o.vertex_count);
    }
}

TEST(Pipeline, SplitEvenDiffersByAtMostOne) {
    EXPECT_EQ(split_even(999, 2), (std::vector<std::uint64_t>{500, 499}));
    EXPECT_EQ(split_even(4000, 4), (std::vector<std::uint64_t>{1000, 1000, 1000, 1000}));
    EXPECT_THROW(split_even(1, 0), DomainError);
}

TEST(Pipeline, ApportionIsExactAndProportional) {
    EXPECT_EQ(apportion(100, {1, 1, 2}), (std::vector<std::uint64_t>{25, 25, 50}));
    EXPECT_EQ(apportion(10, {0, 0}), (std::vector<std::uint64_t>{10, 0}));
    testgen::Gen g(4);
    for (int i = 0; i < 500; ++i) {
        std::vector<double> w(g.range(1, 8));
        for (auto& x : w) x = static_cast<double>(g.range(0, 50));
        const std::uint64_t total = g.range(0, 100000);
        const auto out = apportion(total, w);
        EXPECT_EQ(std::accumulate(out.begin(), out.end(), std::uint64_t{0}), total);
    }
}

TEST(Pipeline, TextureFootprintScalesWithPixels) {
    const MachineConfig cfg;
    DrawObject o = example_object();
    o.textures = {{0, 40960}, {1, 40960}};
    // 100 px * 64 B = 6400 B, half per texture, rounded up to whole pages
    EXPECT_EQ(texture_footprint(o, 100, 64, cfg.page_bytes).size(), 2u);
    // capped by the referenced bytes: 10 pages per texture
    EXPECT_EQ(texture_footprint(o, 100000, 64, cfg.page_bytes).size(), 20u);
    EXPECT_TRUE(texture_footprint(o, 0, 64, cfg.page_bytes).empty());
}
