#include "support.hpp"

#include "engage/error.hpp"
#include "engage/log_io.hpp"
#include "engage/pipeline.hpp"

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

using namespace engage;
using engage::testing::TempDir;

namespace {

RunConfig small_run() {
    auto c = RunConfig::parse("seed = 3\n"
                              "gen.users = 150\n"
                              "gen.tweets = 500\n"
                              "gen.rows = 3000\n"
                              "gen.vocab = 120\n"
                              "gen.days = 8\n"
                              "gen.topics = 3\n"
                              "gen.languages = 3\n"
                              "gen.hashtag_vocab = 40\n"
                              "split.train_days = 5\n"
                              "sketch.depth = 4\n"
                              "sketch.width = 16\n"
                              "partition.k = 3\n"
                              "model.hidden_width = 16\n"
                              "model.hidden_layers = 1\n"
                              "model.batch_size = 64\n"
                              "model.epochs_stage1 = 1\n"
                              "model.epochs_stage2 = 1\n"
                              "metrics.groups = 3\n",
                              "small");
    c.validate();
    return c;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Drops the provenance line recording the thread count.
std::string without_threads(const std::string& text) {
    std::istringstream in(text);
    std::string out, line;
    while (std::getline(in, line)) {
        if (line.rfind("#cfg\trun.threads=", 0) != 0) out += line + "\n";
    }
    return out;
}

void run_all(const RunConfig& c, const WorkDir& d) {
    run_gen(c, d);
    run_fit_sketch(c, d);
    run_partition(c, d);
    run_build_store(c, d);
    run_featurize(c, d);
    run_train(c, d);
    run_predict(c, d);
    run_eval(c, d);
}

} // namespace

TEST_CASE("plans: stage-1 day windows, disjoint stage-2 parts and holdout") {
    const auto c = small_run();
    const auto data = generate_synthetic(c.gen, c.seed);
    const auto plans = make_plans(data.log, c);
    CHECK(plans.stage1.chunk_count == c.train_days);
    CHECK(plans.stage2.chunk_count == c.partition_k);
    CHECK(plans.eval.chunk_count == 1);

    std::vector<std::size_t> all;
    for (const auto* p : {&plans.stage1, &plans.stage2, &plans.eval}) {
        all.insert(all.end(), p->record_index.begin(), p->record_index.end());
    }
    std::sort(all.begin(), all.end());
    CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());
    CHECK(all.size() == data.log.size());
    CHECK(training_period(data.log, c.train_days).size() == plans.stage1.size());

    const double validation = static_cast<double>(plans.stage2.size() + plans.eval.size());
    CHECK(static_cast<double>(plans.eval.size()) == doctest::Approx(c.holdout_fraction * validation).epsilon(0.01));
}

TEST_CASE("store histories never contain the rows they featurize") {
    const auto c = small_run();
    const auto data = generate_synthetic(c.gen, c.seed);
    const auto plans = make_plans(data.log, c);
    const std::set<std::size_t> stage1(plans.stage1.record_index.begin(), plans.stage1.record_index.end());
    for (std::uint32_t k = 0; k < plans.stage1.chunk_count; ++k) {
        const auto h = stage1_history(plans, k);
        for (const auto p : plans.stage1.members(k)) CHECK_FALSE(std::binary_search(h.begin(), h.end(), p));
    }
    for (std::uint32_t k = 0; k < plans.stage2.chunk_count; ++k) {
        const auto h = stage2_history(plans, k);
        for (const auto p : plans.stage2.members(k)) CHECK_FALSE(std::binary_search(h.begin(), h.end(), p));
        for (const auto p : stage1) CHECK(std::binary_search(h.begin(), h.end(), p));
    }
    const auto e = eval_history(plans);
    CHECK(e.size() == plans.stage1.size() + plans.stage2.size());
    for (const auto p : plans.eval.record_index) CHECK_FALSE(std::binary_search(e.begin(), e.end(), p));
}

TEST_CASE("end-to-end run is byte-identical across repeats") {
    const auto c = small_run();
    TempDir a, b;
    run_all(c, WorkDir{a.path()});
    run_all(c, WorkDir{b.path()});
    const WorkDir da{a.path()}, db{b.path()};
    CHECK(slurp(da.predictions()) == slurp(db.predictions()));
    CHECK(slurp(da.report_tsv()) == slurp(db.report_tsv()));
    CHECK(slurp(da.model()) == slurp(db.model()));
    CHECK_FALSE(slurp(da.predictions()).empty());

    const auto report = run_eval(c, da);
    const auto plans = make_plans(generate_synthetic(c.gen, c.seed).log, c);
    CHECK(report.rows == plans.eval.size());
    CHECK(report.group_count == 3);
    CHECK(report.reactions[0].ap.has_value());
}

TEST_CASE("stale artifacts are rejected by config hash") {
    const auto c = small_run();
    TempDir dir;
    const WorkDir d{dir.path()};
    run_gen(c, d);
    auto other = c;
    other.apply_override("gen.rows=3001");
    CHECK_THROWS_AS(run_fit_sketch(other, d), ConfigError);
    run_fit_sketch(c, d);
    run_partition(c, d);
    run_build_store(c, d);
    run_featurize(c, d);
    // A model-only change retrains from the same features.
    auto retrain = c;
    retrain.apply_override("model.lr=0.002");
    CHECK_NOTHROW(run_train(retrain, d));
    CHECK_THROWS_AS(run_predict(c, d), ConfigError);
    CHECK_NOTHROW(run_predict(retrain, d));
}

TEST_CASE("featurize output does not depend on the thread count") {
    auto c = small_run();
    TempDir a, b;
    const WorkDir da{a.path()}, db{b.path()};
    for (const auto* d : {&da, &db}) {
        run_gen(c, *d);
        run_fit_sketch(c, *d);
        run_partition(c, *d);
        run_build_store(c, *d);
    }
    run_featurize(c, da);
    c.threads = 3;
    run_featurize(c, db);
    const auto a1 = slurp(da.features_stage1()), b1 = slurp(db.features_stage1());
    CHECK(a1 != b1); // the thread count is recorded
    CHECK(without_threads(a1) == without_threads(b1));
    CHECK(without_threads(slurp(da.features_stage2())) == without_threads(slurp(db.features_stage2())));
}

TEST_CASE("bench replays the holdout and reports ordered percentiles") {
    const auto c = small_run();
    TempDir dir;
    const WorkDir d{dir.path()};
    run_all(c, d);
    BenchOptions o;
    o.warmup = 20;
    o.predictions = 300;
    o.cpu = -1;
    const auto r = run_bench(c, d, o);
    CHECK(r.predictions == 300);
    CHECK(r.p50_ms > 0.0);
    CHECK(r.p50_ms <= r.p95_ms);
    CHECK(r.p95_ms <= r.max_ms);
}
