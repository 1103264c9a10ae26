#include <gtest/gtest.h>

#include "generators.hpp"
#include "rrsim/machine.hpp"

using namespace rrsim;

namespace {

std::vector<PageId> pages_of(std::uint64_t texture, std::uint64_t n) {
    std::vector<PageId> out;
    for (std::uint64_t i = 0; i < n; ++i) out.push_back({texture, i});
    return out;
}

}  // namespace

TEST(Bandwidth, LinkAtOneGigahertz) {
    MachineConfig c;
    c.link_gbps = 64;
    EXPECT_DOUBLE_EQ(bandwidth_bytes_per_cycle(c, BandwidthKind::link), 64.0);
}

TEST(Bandwidth, LocalAtOneGigahertz) {
    MachineConfig c;
    c.local_dram_gbps = 1024;
    EXPECT_DOUBLE_EQ(bandwidth_bytes_per_cycle(c, BandwidthKind::local), 1024.0);
}

TEST(Bandwidth, LinearInClock) {
    MachineConfig c;
    c.clock_ghz = 2.0;
    EXPECT_DOUBLE_EQ(bandwidth_bytes_per_cycle(c, BandwidthKind::link), 32.0);
}

TEST(Bandwidth, TransferCyclesRoundUp) {
    EXPECT_EQ(transfer_cycles(0, 64.0), 0u);
    EXPECT_EQ(transfer_cycles(1, 64.0), 1u);
    EXPECT_EQ(transfer_cycles(6400, 64.0), 100u);
    EXPECT_EQ(transfer_cycles(6401, 64.0), 101u);
}

TEST(Config, DefaultsMatchBaselineMachine) {
    const MachineConfig c;
    EXPECT_EQ(c.gpm_count, 4u);
    EXPECT_EQ(c.sm_per_gpm, 8u);
    EXPECT_EQ(c.rop_per_gpm, 8u);
    EXPECT_DOUBLE_EQ(c.rop_pixels_per_cycle, 4.0);
    EXPECT_DOUBLE_EQ(c.link_gbps, 64.0);
    EXPECT_DOUBLE_EQ(c.clock_ghz, 1.0);
    EXPECT_EQ(c.page_bytes, 4096u);
    EXPECT_EQ(c.remote_cache_bytes, 2u << 20);
    EXPECT_NO_THROW(validate_config(c));
}

TEST(Config, RefusesInvertedNuma) {
    MachineConfig c;
    c.link_gbps = 2048;
    EXPECT_THROW(validate_config(c), ConfigError);
    EXPECT_THROW(Machine{c}, ConfigError);
}

TEST(Config, RejectsNonPositiveFields) {
    MachineConfig c;
    c.gpm_count = 0;
    EXPECT_THROW(validate_config(c), ConfigError);
    c = {};
    c.vertex_rate = 0;
    EXPECT_THROW(validate_config(c), ConfigError);
    c = {};
    c.page_bytes = 0;
    EXPECT_THROW(validate_config(c), ConfigError);
    c = {};
    c.tsl_threshold = 1.5;
    EXPECT_THROW(validate_config(c), ConfigError);
}

TEST(Config, VisitFieldsCoversEveryField) {
    MachineConfig c;
    std::vector<std::string> names;
    visit_fields(c, [&](const char* n, const auto&) { names.push_back(n); });
    EXPECT_EQ(names.size(), 23u);
    EXPECT_EQ(names.front(), "gpm_count");
    EXPECT_EQ(names.back(), "calibration_batches");
}

TEST(TouchPages, FirstTouchAllocatesLocally) {
    MachineConfig c;
    Machine m(c);
    const auto pages = pages_of(1, 3);
    const auto s = m.touch_pages(0, pages);
    EXPECT_EQ(s.allocations, 3u);
    EXPECT_EQ(s.remote_bytes, 0u);
    EXPECT_EQ(s.local_bytes, 3 * c.page_bytes);
    for (const auto& p : pages) EXPECT_TRUE(m.is_local(0, p));
}

TEST(TouchPages, OtherGpmPaysRemoteWithoutCache) {
    MachineConfig c;
    c.remote_cache_bytes = 0;
    Machine m(c);
    const auto pages = pages_of(1, 3);
    m.touch_pages(0, pages);
    const auto s = m.touch_pages(1, pages);
    EXPECT_EQ(s.remote_bytes, 3 * c.page_bytes);
    EXPECT_EQ(s.allocations, 0u);
    EXPECT_EQ(s.remote_by_source.at(0), 3 * c.page_bytes);
    // no cache: a second pass pays again
    EXPECT_EQ(m.touch_pages(1, pages).remote_bytes, 3 * c.page_bytes);
}

TEST(TouchPages, RemoteCacheHitsOnReplay) {
    MachineConfig c;
    c.remote_cache_bytes = 3 * c.page_bytes;
    Machine m(c);
    const auto pages = pages_of(1, 3);
    m.touch_pages(0, pages);
    EXPECT_EQ(m.touch_pages(1, pages).remote_bytes, 3 * c.page_bytes);
    const auto again = m.touch_pages(1, pages);
    EXPECT_EQ(again.remote_bytes, 0u);
    EXPECT_EQ(again.cache_hits, 3u);
}

TEST(TouchPages, CacheEvictsLeastRecentlyUsed) {
    MachineConfig c;
    c.remote_cache_bytes = 2 * c.page_bytes;
    Machine m(c);
    const auto pages = pages_of(1, 3);
    m.touch_pages(0, pages);
    m.touch_pages(1, std::vector<PageId>{pages[0], pages[1]});
    m.touch_pages(1, std::vector<PageId>{pages[0]});  // refresh page 0
    m.touch_pages(1, std::vector<PageId>{pages[2]});  // evicts page 1
    EXPECT_EQ(m.touch_pages(1, std::vector<PageId>{pages[0]}).remote_bytes, 0u);
    EXPECT_EQ(m.touch_pages(1, std::vector<PageId>{pages[1]}).remote_bytes, c.page_bytes);
}

TEST(TouchPages, SegmentedPolicyIsAlwaysLocal) {
    MachineConfig c;
    Machine m(c, PlacementPolicy::segmented);
    const auto pages = pages_of(1, 4);
    m.touch_pages(0, pages);
    const auto s = m.touch_pages(3, pages);
    EXPECT_EQ(s.remote_bytes, 0u);
    EXPECT_EQ(s.allocations, 4u);
}

TEST(Preallocate, UnallocatedPagesAreFree) {
    MachineConfig c;
    Machine m(c);
    const auto pages = pages_of(2, 2);
    const auto s = m.preallocate_pages(1, pages);
    EXPECT_EQ(s.copied_bytes, 0u);
    for (const auto& p : pages) EXPECT_TRUE(m.is_local(1, p));
}

TEST(Preallocate, ResidentElsewhereIsCopied) {
    MachineConfig c;
    Machine m(c);
    const auto pages = pages_of(2, 2);
    m.touch_pages(0, pages);
    const auto s = m.preallocate_pages(1, pages);
    EXPECT_EQ(s.copied_bytes, 2 * c.page_bytes);
    EXPECT_EQ(s.source_map.at(0), 2 * c.page_bytes);
    for (const auto& p : pages) EXPECT_TRUE(m.pages().at(p).duplicated());
    // already held: nothing more to copy
    EXPECT_EQ(m.preallocate_pages(1, pages).copied_bytes, 0u);
}

TEST(Preallocate, TouchAfterPreallocateIsLocal) {
    MachineConfig c;
    c.remote_cache_bytes = 0;
    Machine m(c);
    const auto pages = pages_of(2, 5);
    m.touch_pages(0, pages);
    m.preallocate_pages(3, pages);
    const auto s = m.touch_pages(3, pages);
    EXPECT_EQ(s.remote_bytes, 0u);
    EXPECT_EQ(s.local_bytes, 5 * c.page_bytes);
}

TEST(Preallocate, SpreadsCopiesAcrossHolders) {
    MachineConfig c;
    Machine m(c);
    const auto pages = pages_of(2, 8);
    m.touch_pages(0, pages);
    m.preallocate_pages(1, pages);
    const auto s = m.preallocate_pages(2, pages);
    EXPECT_EQ(s.copied_bytes, 8 * c.page_bytes);
    EXPECT_EQ(s.source_map.at(0), 4 * c.page_bytes);
    EXPECT_EQ(s.source_map.at(1), 4 * c.page_bytes);
}

TEST(Links, TransfersQueuePerDirectedPair) {
    MachineConfig c;
    Machine m(c);
    EXPECT_EQ(m.post_transfer(0, 1, 6400, 0), 100u);
    EXPECT_EQ(m.post_transfer(0, 1, 6400, 50), 200u);
    EXPECT_EQ(m.post_transfer(1, 0, 6400, 0), 100u);  // reverse direction is independent
    EXPECT_EQ(m.post_transfer(0, 2, 64, 10), 11u);
    EXPECT_EQ(m.post_transfer(0, 2, 0, 5), 5u);
    EXPECT_THROW(m.post_transfer(1, 1, 64, 0), AccountingError);
}

TEST(Timelines, CoreNeverMovesBackwards) {
    Machine m(MachineConfig{});
    m.occupy_core(0, 10, 5);
    EXPECT_EQ(m.gpm(0).timeline_cycles, 15u);
    EXPECT_EQ(m.gpm(0).busy_cycles, 5u);
    EXPECT_THROW(m.occupy_core(0, 12, 1), AccountingError);
    m.align_to(100);
    EXPECT_EQ(m.gpm(3).timeline_cycles, 100u);
    m.align_to(50);
    EXPECT_EQ(m.gpm(3).timeline_cycles, 100u);
}

TEST(Placement, PropertyConservationAndUniqueness) {
    testgen::Gen g(21);
    for (int round = 0; round < 50; ++round) {
        MachineConfig c;
        c.gpm_count = static_cast<std::uint32_t>(g.range(1, 8));
        c.remote_cache_bytes = g.range(0, 16) * c.page_bytes;
        Machine m(c);
        std::set<PageId> duplicated_by_pa;
        for (int op = 0; op < 60; ++op) {
            const auto gpm = static_cast<GpmId>(g.range(0, c.gpm_count - 1));
            std::vector<PageId> pages;
            const std::uint64_t tex = g.range(0, 3);
            const std::uint64_t first = g.range(0, 20);
            for (std::uint64_t i = first; i < first + g.range(1, 10); ++i) pages.push_back({tex, i});
            if (g.chance(0.3)) {
                const auto s = m.preallocate_pages(gpm, pages);
                std::uint64_t sum = 0;
                for (const auto& [src, b] : s.source_map) {
                    EXPECT_NE(src, gpm);
                    sum += b;
                }
                EXPECT_EQ(sum, s.copied_bytes);
                for (const auto& p : pages) duplicated_by_pa.insert(p);
            } else {
                const auto s = m.touch_pages(gpm, pages);
                EXPECT_EQ(s.local_bytes + s.remote_bytes, pages.size() * c.page_bytes);
                for (const auto& p : pages) EXPECT_TRUE(m.pages().contains(p));
            }
        }
        for (const auto& [page, e] : m.pages()) {
            EXPECT_GE(std::popcount(e.holders), 1);
            EXPECT_TRUE(e.holders & (1ull << e.home));
            if (e.duplicated()) {
                EXPECT_TRUE(duplicated_by_pa.contains(page));
            }
        }
    }
}
