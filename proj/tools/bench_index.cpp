// Scale smoke test: build an IVF-PQ index over synthetic clustered vectors and time
// queries against it. Prints timings as JSON; nothing is asserted.

#include <chrono>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ekila/index.hpp"
#include "ekila/toydata.hpp"

using namespace ekila;

int main(int argc, char** argv) {
    CLI::App app{"IVF-PQ build and query timing on synthetic vectors"};
    int count = 1'000'000, queries = 100, clusters = 2000, topK = 10;
    IndexParams params;
    bool withRecall = false;
    app.add_option("--count", count, "Database vectors");
    app.add_option("--queries", queries, "Held-out queries");
    app.add_option("--clusters", clusters, "Synthetic cluster count");
    app.add_option("--nlist", params.nlist);
    app.add_option("--m", params.m);
    app.add_option("--nprobe", params.nprobe);
    app.add_option("--kmeans-iterations", params.kmeansMaxIterations);
    app.add_flag("--recall", withRecall, "Also compute recall@10 against brute force");
    CLI11_PARSE(app, argc, argv);

    using Clock = std::chrono::steady_clock;
    auto seconds = [](Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };

    const auto t0 = Clock::now();
    auto all = clusteredVectors(count + queries, kEmbeddingDim, clusters, 16, 0.5, 0.2, 99);
    std::vector<EmbeddingRecord> held(all.end() - queries, all.end());
    all.resize(static_cast<std::size_t>(count));
    const auto t1 = Clock::now();
    const auto index = IvfPqIndex::build(all, params, 1);
    const auto t2 = Clock::now();
    std::vector<std::vector<RetrievalHit>> results;
    for (const auto& q : held) results.push_back(index.search(q.values, topK));
    const auto t3 = Clock::now();

    nlohmann::json out{{"vectors", count},
                       {"queries", queries},
                       {"nlist", params.nlist},
                       {"m", params.m},
                       {"nprobe", params.nprobe},
                       {"generateSeconds", seconds(t0, t1)},
                       {"buildSeconds", seconds(t1, t2)},
                       {"querySecondsTotal", seconds(t2, t3)},
                       {"queryMillisecondsEach", 1000 * seconds(t2, t3) / std::max(1, queries)}};
    if (withRecall) {
        double recall = 0;
        for (std::size_t i = 0; i < held.size(); ++i)
            recall += recallAtK(results[i], bruteForceSearch(all, held[i].values, topK), topK);
        out["recallAt10"] = recall / static_cast<double>(held.size());
    }
    std::cout << out.dump(2) << "\n";
}
