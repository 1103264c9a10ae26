#include <gtest/gtest.h>

#include "generators.hpp"
#include "rrsim/engine.hpp"

using namespace rrsim;

namespace {

// Core cycles per transformed vertex and per pixel on the default machine:
// geometry v/8 plus reprojection v/32 over tv = 2v; raster 1/256 plus
// fragment 1/64 per pixel.
constexpr double kC1 = (1.0 / 8 + 1.0 / 32) / 2;
constexpr double kC2 = 1.0 / 256 + 1.0 / 64;

std::vector<CalibrationSample> linear_samples(double c1, double c2) {
    std::vector<CalibrationSample> s;
    for (std::uint64_t i = 0; i < 8; ++i) {
        const std::uint64_t tv = 100 + 37 * i;
        const std::uint64_t px = 1000 + 400 * ((i * 5) % 8);
        s.push_back({tv / 2, tv, px, static_cast<Cycle>(c1 * tv + c2 * px)});
    }
    return s;
}

PredictorState with_coeffs(double c0, double c1, double c2) {
    PredictorState ps;
    ps.c0 = c0;
    ps.c1 = c1;
    ps.c2 = c2;
    ps.calibrated = true;
    return ps;
}

Frame frame_of(std::vector<DrawObject> objs) {
    Frame f;
    f.width = 1280;
    f.height = 720;
    f.objects = std::move(objs);
    return f;
}

DrawObject obj(ObjectId id, std::uint64_t verts, std::uint64_t px, TextureId tex) {
    DrawObject o;
    o.object_id = id;
    o.vertex_count = verts;
    o.triangle_count = verts / 2;
    o.pixels_per_view = px;
    o.bbox_per_view[0] = {0, 0, 100, 100};
    o.bbox_per_view[1] = {1280, 0, 1380, 100};
    o.textures = {{tex, 4096}};
    return o;
}

Trace trace_of(std::vector<Frame> frames, std::size_t textures) {
    Trace t;
    t.width = 1280;
    t.height = 720;
    t.bytes_per_fragment = 1;
    for (std::size_t i = 0; i < textures; ++i) t.texture_table[static_cast<TextureId>(i)] = 4096;
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i].frame_id = static_cast<std::int64_t>(i);
    t.frames = std::move(frames);
    return t;
}

struct EngineRun {
    std::vector<FrameMetrics> frames;
    std::vector<ScheduleEntry> log;
    PredictorState ps;
    TrafficLedger ledger;
    std::vector<std::uint64_t> remote_after_frame;
};

EngineRun run_engine(const Trace& t, const MachineConfig& cfg) {
    EngineRun r{{}, {}, {}, TrafficLedger(cfg.gpm_count), {}};
    Machine m(cfg);
    DistributionEngine e(cfg);
    Cycle start = 0;
    for (const auto& f : t.frames) {
        m.align_to(start);
        r.frames.push_back(e.run_frame(m, r.ledger, t, f, start, r.log));
        start += r.frames.back().latency_cycles;
        r.remote_after_frame.push_back(r.ledger.total(TrafficCategory::texture_remote));
    }
    r.ps = e.predictor();
    return r;
}

}  // namespace

TEST(Calibrate, RecoversExactLinearLaw) {
    const auto ps = calibrate(linear_samples(2.0, 0.5));
    EXPECT_TRUE(ps.calibrated);
    EXPECT_FALSE(ps.fallback);
    EXPECT_NEAR(ps.c1, 2.0, 2.0 * 1e-9);
    EXPECT_NEAR(ps.c2, 0.5, 0.5 * 1e-9);
    EXPECT_EQ(ps.samples.size(), 8u);
}

TEST(Calibrate, SingularFallsBackToEvenSplit) {
    std::vector<CalibrationSample> s(8, CalibrationSample{50, 100, 400, 1000});
    const auto ps = calibrate(s);
    EXPECT_TRUE(ps.fallback);
    EXPECT_NEAR(ps.c1 * 100 + ps.c2 * 400, 1000.0, 1e-9);
    EXPECT_NEAR(ps.c1 * 100, 500.0, 1e-9);
}

TEST(Calibrate, C0IsRatioOfSums) {
    std::vector<CalibrationSample> s;
    for (std::uint64_t i = 1; i <= 8; ++i) s.push_back({i * 7, i, i * 3, i * 70});
    EXPECT_EQ(calibrate(s).c0, 10.0);
}

TEST(Calibrate, NeedsEightSamples) {
    std::vector<CalibrationSample> s(7, CalibrationSample{1, 1, 1, 1});
    EXPECT_THROW(calibrate(s), CalibrationError);
    s.assign(8, CalibrationSample{1, 1, 1, 0});
    EXPECT_THROW(calibrate(s), CalibrationError);
}

TEST(Calibrate, ClampsNegativeCoefficient) {
    // measured falls as pixels rise: unconstrained c2 would be negative
    std::vector<CalibrationSample> s;
    for (std::uint64_t i = 0; i < 8; ++i) s.push_back({10, 100 + 10 * i, 1000 - 50 * i, 1000 - 20 * i});
    const auto ps = calibrate(s);
    EXPECT_GE(ps.c1, 0.0);
    EXPECT_GE(ps.c2, 0.0);
}

TEST(Predict, TotalIsC0TimesTriangles) {
    const auto ps = with_coeffs(10, 0, 0);
    EXPECT_EQ(predict_total(ps, {64, 0, 0}), 640u);
    EXPECT_EQ(predict_total(ps, {0, 0, 0}), 0u);
    EXPECT_EQ(predict_total(ps, {4096, 0, 0}), 40960u);
    EXPECT_THROW(predict_total(PredictorState{}, {1, 1, 1}), StateError);
    EXPECT_THROW(predict_linear(PredictorState{}, {1, 1, 1}), StateError);
}

TEST(AdvanceElapsed, AddsLinearTerms) {
    const auto ps = with_coeffs(0, 2, 0.5);
    EXPECT_EQ(advance_elapsed({}, ps, 100, 200).elapsed_cycles, 300);
    const GpmCounters c{500, 42};
    EXPECT_EQ(advance_elapsed(c, ps, 0, 0), c);
}

TEST(AdvanceElapsed, PropertyAdditiveWithinOneCycle) {
    testgen::Gen g(8);
    for (int i = 0; i < 1000; ++i) {
        const auto ps = with_coeffs(0, static_cast<double>(g.range(0, 1000)) / 97.0,
                                    static_cast<double>(g.range(0, 1000)) / 89.0);
        const auto a_tv = g.range(0, 5000), a_px = g.range(0, 5000);
        const auto b_tv = g.range(0, 5000), b_px = g.range(0, 5000);
        const auto two = advance_elapsed(advance_elapsed({}, ps, a_tv, a_px), ps, b_tv, b_px);
        const auto one = advance_elapsed({}, ps, a_tv + b_tv, a_px + b_px);
        EXPECT_LE(std::llabs(two.elapsed_cycles - one.elapsed_cycles), 1);
    }
}

TEST(SelectGpm, Argmin) {
    const std::vector<GpmCounters> c{{100, 0}, {50, 0}, {80, 0}, {200, 0}};
    const std::vector<std::size_t> q{0, 0, 0, 0};
    EXPECT_EQ(select_gpm(c, q), 1u);
}

TEST(SelectGpm, TieBreaksByLowestId) {
    const std::vector<GpmCounters> c{{50, 0}, {60, 10}, {90, 0}, {95, 5}};
    const std::vector<std::size_t> q{0, 0, 0, 0};
    EXPECT_EQ(select_gpm(c, q), 0u);
}

TEST(SelectGpm, SkipsFullQueues) {
    const std::vector<GpmCounters> c{{100, 0}, {50, 0}, {80, 0}, {200, 0}};
    EXPECT_EQ(select_gpm(c, std::vector<std::size_t>{0, 4, 0, 0}), 2u);
    EXPECT_EQ(select_gpm(c, std::vector<std::size_t>{4, 4, 4, 4}), std::nullopt);
}

TEST(SelectGpm, PropertyScaleInvariant) {
    testgen::Gen g(31);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t n = g.range(1, 8);
        std::vector<GpmCounters> c(n), scaled(n);
        std::vector<std::size_t> q(n);
        const std::int64_t k = static_cast<std::int64_t>(g.range(1, 50));
        for (std::size_t j = 0; j < n; ++j) {
            c[j] = {static_cast<std::int64_t>(g.range(0, 1000)), static_cast<std::int64_t>(g.range(0, 500))};
            scaled[j] = {c[j].total_predicted_cycles * k, c[j].elapsed_cycles * k};
            q[j] = g.range(0, 4);
        }
        EXPECT_EQ(select_gpm(c, q), select_gpm(scaled, q));
    }
}

TEST(Redistribute, EvenPixelSplit) {
    const std::vector<WorkSlice> rest{{7, Views::both, 0, 0, 0, 4000}};
    const std::vector<GpmId> idle{3, 0, 2};
    const auto out = redistribute_straggler(rest, 1, idle);
    ASSERT_EQ(out.size(), 4u);
    for (GpmId g = 0; g < 4; ++g) {
        EXPECT_EQ(out[g].gpm, g);
        EXPECT_EQ(out[g].slice.pixel_units, 1000u);
    }
}

TEST(Redistribute, TrianglesDifferByOne) {
    const std::vector<WorkSlice> rest{{7, Views::both, 0, 0, 999, 0}};
    const auto out = redistribute_straggler(rest, 2, std::vector<GpmId>{0});
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].slice.triangle_units, 500u);
    EXPECT_EQ(out[1].slice.triangle_units, 499u);
}

TEST(Redistribute, NoIdleGpmIsNoop) {
    const std::vector<WorkSlice> rest{{7, Views::both, 0, 10, 10, 10}};
    EXPECT_TRUE(redistribute_straggler(rest, 0, {}).empty());
}

TEST(Redistribute, PropertyConservesUnits) {
    testgen::Gen g(41);
    for (int i = 0; i < 500; ++i) {
        std::vector<WorkSlice> rest;
        for (std::size_t k = 0; k < g.range(1, 4); ++k)
            rest.push_back({k, Views::both, g.range(0, 100), g.range(0, 500), g.range(0, 500), g.range(0, 5000)});
        std::vector<GpmId> idle;
        for (GpmId x = 1; x < 8; ++x)
            if (g.chance(0.5)) idle.push_back(x);
        const auto out = redistribute_straggler(rest, 0, idle);
        for (std::size_t k = 0; k < rest.size(); ++k) {
            Signals sum;
            std::uint64_t verts = 0;
            for (const auto& a : out)
                if (a.source == k) {
                    sum += slice_signals(a.slice);
                    verts += a.slice.vertex_units;
                }
            if (idle.empty()) continue;
            EXPECT_EQ(sum, slice_signals(rest[k]));
            EXPECT_EQ(verts, rest[k].vertex_units);
        }
    }
}

TEST(Dispatch, EightIdenticalBatchesRoundRobin) {
    std::vector<DrawObject> objs;
    for (ObjectId i = 0; i < 8; ++i) objs.push_back(obj(i, 320, 1280, static_cast<TextureId>(i)));
    const Trace t = trace_of({frame_of(objs)}, 8);
    const auto r = run_engine(t, MachineConfig{});
    ASSERT_EQ(r.log.size(), 8u);
    std::vector<int> per_gpm(4, 0);
    for (std::size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(r.log[i].gpm, i % 4);
        ++per_gpm[r.log[i].gpm];
    }
    EXPECT_EQ(per_gpm, (std::vector<int>{2, 2, 2, 2}));
    EXPECT_TRUE(r.ps.calibrated);
}

TEST(Dispatch, FewBatchesStayRoundRobinUncalibrated) {
    std::vector<DrawObject> objs;
    for (ObjectId i = 0; i < 4; ++i) objs.push_back(obj(i, 320, 1280, static_cast<TextureId>(i)));
    const auto r = run_engine(trace_of({frame_of(objs)}, 4), MachineConfig{});
    ASSERT_EQ(r.log.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(r.log[i].gpm, i);
        EXPECT_EQ(r.log[i].predicted_cycles, 0u);
    }
    EXPECT_FALSE(r.ps.calibrated);
}

TEST(Dispatch, PostCalibrationGoesToLeastLoaded) {
    std::vector<DrawObject> calib;
    for (ObjectId i = 0; i < 8; ++i) calib.push_back(obj(i, 320 + 32 * i, 1280 + 128 * (i % 3), static_cast<TextureId>(i)));
    // one heavy batch followed by light ones
    std::vector<DrawObject> skewed{obj(0, 8000, 60000, 0)};
    for (ObjectId i = 1; i < 8; ++i) skewed.push_back(obj(i, 64, 256, static_cast<TextureId>(i)));
    const auto r = run_engine(trace_of({frame_of(calib), frame_of(skewed)}, 8), MachineConfig{});
    std::vector<ScheduleEntry> second;
    for (const auto& e : r.log)
        if (e.frame_id == 1) second.push_back(e);
    ASSERT_EQ(second.size(), 8u);
    EXPECT_EQ(second[0].gpm, 0u);
    EXPECT_EQ(second[1].gpm, 1u);
    EXPECT_EQ(second[2].gpm, 2u);
    EXPECT_EQ(second[3].gpm, 3u);
    // the heavy GPM is skipped while lighter ones have room
    for (std::size_t i = 4; i < second.size(); ++i) EXPECT_NE(second[i].gpm, 0u) << "batch " << i;
    for (const auto& e : second) EXPECT_GT(e.predicted_cycles, 0u);
}

TEST(Dispatch, CountersAndQueuesSane) {
    SceneParams p;
    p.seed = 5;
    p.frames = 2;
    p.objects_per_frame = 200;
    p.texture_pool_size = 12;
    const Trace t = generate_scene(p);
    const auto r = run_engine(t, MachineConfig{});
    for (const auto& e : r.log) {
        EXPECT_GE(e.start_cycle, e.dispatch_cycle);
        EXPECT_GT(e.end_cycle, e.start_cycle);
        EXPECT_GT(e.measured_cycles, 0u);
    }
    std::size_t batches = 0;
    for (const auto& f : t.frames) batches += build_batches(f).size();
    EXPECT_EQ(r.log.size(), batches);
    // per-GPM pending queue never exceeds the depth at dispatch time
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        std::size_t pending = 0;
        for (std::size_t j = 0; j < i; ++j)
            if (r.log[j].frame_id == r.log[i].frame_id && r.log[j].gpm == r.log[i].gpm &&
                r.log[j].end_cycle > r.log[i].dispatch_cycle)
                ++pending;
        EXPECT_LT(pending, 4u) << "batch " << i;
    }
}

TEST(Engine, LinearWorkloadPredictionsWithinOnePercent) {
    testgen::Gen g(2);
    const Trace t = g.linear_workload(96, 2);
    const auto r = run_engine(t, MachineConfig{});
    ASSERT_TRUE(r.ps.calibrated);
    EXPECT_NEAR(r.ps.c1, kC1, kC1 * 1e-6);
    EXPECT_NEAR(r.ps.c2, kC2, kC2 * 1e-6);
    std::size_t checked = 0;
    for (const auto& e : r.log) {
        if (e.predicted_linear_cycles == 0) continue;
        ++checked;
        EXPECT_NEAR(static_cast<double>(e.predicted_linear_cycles), static_cast<double>(e.measured_cycles),
                    0.01 * static_cast<double>(e.measured_cycles))
            << "frame " << e.frame_id << " batch " << e.batch_id;
    }
    EXPECT_GT(checked, 150u);
}

TEST(Engine, PreallocationRemovesRemoteTextureReads) {
    SceneParams p;
    p.seed = 12;
    p.frames = 3;
    p.objects_per_frame = 150;
    p.texture_pool_size = 6;
    p.bytes_per_fragment = 256;
    const Trace t = generate_scene(p);
    const auto r = run_engine(t, MachineConfig{});
    ASSERT_TRUE(r.ps.calibrated);
    // remote reads happen only in the first-touch calibration phase
    EXPECT_EQ(r.remote_after_frame[1], r.remote_after_frame[0]);
    EXPECT_EQ(r.remote_after_frame[2], r.remote_after_frame[0]);
    EXPECT_GT(r.ledger.total(TrafficCategory::preallocation_copy), 0u);
}

TEST(Engine, StragglerSplitUsesIdleGpms) {
    std::vector<DrawObject> objs;
    for (ObjectId i = 0; i < 8; ++i) objs.push_back(obj(i, 320, 1280, static_cast<TextureId>(i)));
    std::vector<DrawObject> second = objs;
    second.push_back(obj(8, 32000, 200000, 8));
    const auto r = run_engine(trace_of({frame_of(objs), frame_of(second)}, 9), MachineConfig{});
    const auto& last = r.log.back();
    EXPECT_EQ(last.frame_id, 1);
    EXPECT_EQ(last.slices.size(), 4u);
    // after the split each participant holds its pages: no new remote reads
    EXPECT_EQ(r.remote_after_frame[1], r.remote_after_frame[0]);
    EXPECT_GT(r.ledger.total(TrafficCategory::vertex), 0u);
}
