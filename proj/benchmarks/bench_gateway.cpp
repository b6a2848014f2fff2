#include <benchmark/benchmark.h>

#include <filesystem>

#include "secss/gateway.hpp"
#include "secss/playground.hpp"
#include "secss/rewriter.hpp"

using namespace secss;

namespace {

const char* kUpdate =
    "UPDATE sandbox s LEFT JOIN children c ON s.ninu = c.ninu SET s.item = (SELECT t.item FROM toychest t WHERE "
    "t.name = 'rattle') WHERE c.name = 'Loys'";

struct World {
    std::unique_ptr<backend::SqliteBackend> db;
    std::unique_ptr<gateway::Gateway> gw;
    ela::ElaDocument doc;

    World() {
        const std::filesystem::path dir(SECSS_BENCH_WORKDIR);
        std::filesystem::create_directories(dir);
        const auto& f = playground::playground_fixture();
        db = playground::open_seeded(f, dir / "bench.db");
        gw = std::make_unique<gateway::Gateway>(*db, identity::TrustStore{},
                                                gateway::publish_ela(std::string(f.ela_xml), std::nullopt, {}));
        doc = ela::parse_ela(f.ela_xml);
    }
};

World& world() {
    static World w;
    return w;
}

void BM_Parse(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(sql::parse_statement(kUpdate));
}
BENCHMARK(BM_Parse);

void BM_ParseEla(benchmark::State& state) {
    const auto xml = playground::playground_fixture().ela_xml;
    for (auto _ : state) benchmark::DoNotOptimize(ela::parse_ela(xml));
}
BENCHMARK(BM_ParseEla);

void BM_Rewrite(benchmark::State& state) {
    auto& w = world();
    const auto stmt = sql::parse_statement(kUpdate);
    rewrite::Rewriter rw(w.doc, *w.db);
    for (auto _ : state) benchmark::DoNotOptimize(rw.rewrite(stmt, identity::RequesterIdentity::anonymous()));
}
BENCHMARK(BM_Rewrite);

void BM_ProcessSelect(benchmark::State& state) {
    auto& w = world();
    for (auto _ : state) {
        benchmark::DoNotOptimize(w.gw->process({"SELECT name, surname FROM children", std::nullopt, std::nullopt}));
    }
}
BENCHMARK(BM_ProcessSelect);

void BM_ProcessUpdate(benchmark::State& state) {
    auto& w = world();
    for (auto _ : state) benchmark::DoNotOptimize(w.gw->process({kUpdate, std::nullopt, std::nullopt}));
}
BENCHMARK(BM_ProcessUpdate);

}  // namespace

BENCHMARK_MAIN();
