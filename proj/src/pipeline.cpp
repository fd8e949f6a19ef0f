#include "engage/pipeline.hpp"

#include "engage/error.hpp"
#include "engage/log_io.hpp"
#include "engage/random.hpp"
#include "engage/similarity.hpp"
#include "engage/synthetic.hpp"
#include "engage/text.hpp"

#include <sched.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <thread>

namespace engage {

std::filesystem::path WorkDir::store_stage1(std::uint32_t chunk) const {
    return root / "stores" / ("stage1_" + std::to_string(chunk) + ".txt");
}

std::filesystem::path WorkDir::store_stage2(std::uint32_t chunk) const {
    return root / "stores" / ("stage2_" + std::to_string(chunk) + ".txt");
}

void check_hash(const ArtifactMeta& meta, const RunConfig& config, Stage stage, const std::filesystem::path& path) {
    const std::string expected = text::hex64(config.hash(stage));
    if (meta.config_hash != expected) {
        throw ConfigError("config hash mismatch: " + path.string() + " has " +
                          (meta.config_hash.empty() ? std::string("no hash") : meta.config_hash) +
                          ", current configuration gives " + expected);
    }
}

std::vector<std::size_t> training_period(std::span<const InteractionRecord> log, std::size_t train_days) {
    const Timestamp end = day_anchor(log) + static_cast<Timestamp>(train_days) * kSecondsPerDay;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < log.size(); ++i) {
        if (log[i].event_time() < end) out.push_back(i);
    }
    return out;
}

PipelinePlans make_plans(std::span<const InteractionRecord> log, const RunConfig& config) {
    const auto train = training_period(log, config.train_days);
    std::vector<std::size_t> validation;
    std::size_t t = 0;
    for (std::size_t i = 0; i < log.size(); ++i) {
        if (t < train.size() && train[t] == i) {
            ++t;
        } else {
            validation.push_back(i);
        }
    }
    if (train.empty() || validation.empty()) {
        throw DataError("split.train_days leaves an empty training or validation period");
    }
    PipelinePlans plans;
    plans.stage1 = plan_day_windows(log, train, mix64(config.seed ^ 0x31));
    const auto split = split_holdout(validation, config.holdout_fraction, mix64(config.seed ^ 0x32));
    if (split.held_out.empty()) throw DataError("evaluation holdout is empty");
    plans.stage2 = plan_k_random(split.kept, config.partition_k, mix64(config.seed ^ 0x33));
    plans.eval.mode = PartitionMode::k_random;
    plans.eval.chunk_count = 1;
    plans.eval.record_index = split.held_out;
    plans.eval.chunk.assign(split.held_out.size(), 0);
    plans.eval.training_order = {0};
    return plans;
}

namespace {

std::vector<std::size_t> merged(std::vector<std::size_t> a, std::span<const std::size_t> b) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    return a;
}

std::vector<std::size_t> sorted_positions(const PartitionPlan& plan) {
    std::vector<std::size_t> out = plan.record_index;
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

std::vector<std::size_t> stage1_history(const PipelinePlans& plans, std::uint32_t chunk) {
    return plans.stage1.history(chunk);
}

std::vector<std::size_t> stage2_history(const PipelinePlans& plans, std::uint32_t chunk) {
    return merged(sorted_positions(plans.stage1), plans.stage2.history(chunk));
}

std::vector<std::size_t> eval_history(const PipelinePlans& plans) {
    return merged(sorted_positions(plans.stage1), sorted_positions(plans.stage2));
}

FeatureStore store_from_positions(std::span<const InteractionRecord> log, std::span<const std::size_t> positions,
                                  const std::unordered_map<UserId, UserId>& clusters, const StoreConfig& config) {
    StoreBuilder builder(config);
    for (const auto p : positions) builder.add(log[p]);
    return std::move(builder).finish(clusters);
}

std::vector<FeatureRow> featurize_plan(std::span<const InteractionRecord> log, const PartitionPlan& plan,
                                       const std::function<FeatureStore(std::uint32_t)>& store_for,
                                       const SketchCodec& codec, const FeatureLayout& layout, std::size_t threads) {
    std::vector<std::vector<FeatureRow>> per_chunk(plan.chunk_count);
    std::vector<std::exception_ptr> errors(plan.chunk_count);
    std::atomic<std::uint32_t> next{0};
    auto worker = [&] {
        AssembledFeatures features;
        while (true) {
            const std::uint32_t c = next.fetch_add(1);
            if (c >= plan.chunk_count) return;
            try {
                const FeatureStore store = store_for(c);
                const FeatureAssembler assembler(store, codec, layout);
                for (const auto p : plan.members(c)) {
                    assembler.assemble(log[p], features);
                    per_chunk[c].push_back(to_row(features, p, c, labels_of(log[p])));
                }
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min<std::size_t>(threads, plan.chunk_count));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    std::vector<FeatureRow> rows;
    for (auto& chunk : per_chunk) {
        std::move(chunk.begin(), chunk.end(), std::back_inserter(rows));
    }
    return rows;
}

FeatureLayout run_layout(const RunConfig& config) {
    return FeatureLayout::standard(config.sketch_depth, config.sketch_width, config.gen.languages);
}

// Stages ---------------------------------------------------------------------

namespace {

std::vector<InteractionRecord> load_log(const RunConfig& config, const WorkDir& dir) {
    ArtifactMeta meta;
    auto log = read_log(dir.log(), &meta);
    check_hash(meta, config, Stage::gen, dir.log());
    return log;
}

SketchCodec load_codec(const RunConfig& config, const WorkDir& dir) {
    ArtifactMeta meta;
    auto codec = SketchCodec::load(dir.codec(), &meta);
    check_hash(meta, config, Stage::fit_sketch, dir.codec());
    return codec;
}

PipelinePlans load_plans(const RunConfig& config, const WorkDir& dir) {
    PipelinePlans plans;
    const std::filesystem::path paths[] = {dir.plan_stage1(), dir.plan_stage2(), dir.plan_eval()};
    PartitionPlan* targets[] = {&plans.stage1, &plans.stage2, &plans.eval};
    for (int i = 0; i < 3; ++i) {
        ArtifactMeta meta;
        *targets[i] = read_plan(paths[i], &meta);
        check_hash(meta, config, Stage::partition, paths[i]);
    }
    return plans;
}

FeatureStore load_store(const RunConfig& config, const std::filesystem::path& path) {
    ArtifactMeta meta;
    auto store = FeatureStore::load(path, &meta);
    check_hash(meta, config, Stage::build_store, path);
    return store;
}

EngagePredictor load_trained(const RunConfig& config, const WorkDir& dir) {
    ArtifactMeta meta;
    auto model = load_model(dir.model(), &meta);
    check_hash(meta, config, Stage::train, dir.model());
    return model;
}

} // namespace

void run_gen(const RunConfig& config, const WorkDir& dir) {
    config.validate();
    const auto data = generate_synthetic(config.gen, config.seed);
    const auto meta = config.meta(Stage::gen);
    write_log(dir.log(), data.log, meta);
    write_followers(dir.followers(), data.followers, meta);
    write_embeddings(dir.embeddings(), data.token_embeddings, meta);
}

void run_fit_sketch(const RunConfig& config, const WorkDir& dir) {
    config.validate();
    ArtifactMeta meta;
    const auto emb = read_embeddings(dir.embeddings(), &meta);
    check_hash(meta, config, Stage::gen, dir.embeddings());
    const auto codec = SketchCodec::fit(emb, config.sketch_params(emb.cols));
    codec.save(dir.codec(), config.meta(Stage::fit_sketch));
}

void run_partition(const RunConfig& config, const WorkDir& dir) {
    config.validate();
    const auto log = load_log(config, dir);
    const auto plans = make_plans(log, config);
    const auto meta = config.meta(Stage::partition);
    write_plan(dir.plan_stage1(), plans.stage1, meta);
    write_plan(dir.plan_stage2(), plans.stage2, meta);
    write_plan(dir.plan_eval(), plans.eval, meta);
}

void run_build_store(const RunConfig& config, const WorkDir& dir) {
    config.validate();
    const auto log = load_log(config, dir);
    const auto plans = load_plans(config, dir);
    ArtifactMeta fmeta;
    const auto followers = read_followers(dir.followers(), &fmeta);
    check_hash(fmeta, config, Stage::gen, dir.followers());
    const auto clusters = similar_user_clusters(followers, config.jaccard_threshold);
    const auto store_config = config.store_config();
    const auto meta = config.meta(Stage::build_store);
    std::filesystem::create_directories(dir.root / "stores");
    for (std::uint32_t c = 0; c < plans.stage1.chunk_count; ++c) {
        store_from_positions(log, stage1_history(plans, c), clusters, store_config).save(dir.store_stage1(c), meta);
    }
    for (std::uint32_t c = 0; c < plans.stage2.chunk_count; ++c) {
        store_from_positions(log, stage2_history(plans, c), clusters, store_config).save(dir.store_stage2(c), meta);
    }
    store_from_positions(log, eval_history(plans), clusters, store_config).save(dir.store_eval(), meta);
}

void run_featurize(const RunConfig& config, const WorkDir& dir) {
    config.validate();
    const auto log = load_log(config, dir);
    const auto plans = load_plans(config, dir);
    const auto codec = load_codec(config, dir);
    const auto layout = run_layout(config);
    const auto meta = config.meta(Stage::featurize);
    const auto rows1 = featurize_plan(
        log, plans.stage1, [&](std::uint32_t c) { return load_store(config, dir.store_stage1(c)); }, codec, layout,
        config.threads);
    write_features(dir.features_stage1(), layout, rows1, meta);
    const auto rows2 = featurize_plan(
        log, plans.stage2, [&](std::uint32_t c) { return load_store(config, dir.store_stage2(c)); }, codec, layout,
        config.threads);
    write_features(dir.features_stage2(), layout, rows2, meta);
}

TrainingReport run_train(const RunConfig& config, const WorkDir& dir) {
    config.validate();
    FeatureLayout layout1, layout2;
    ArtifactMeta m1, m2;
    const auto rows1 = read_features(dir.features_stage1(), layout1, &m1);
    check_hash(m1, config, Stage::featurize, dir.features_stage1());
    const auto rows2 = read_features(dir.features_stage2(), layout2, &m2);
    check_hash(m2, config, Stage::featurize, dir.features_stage2());
    if (!(layout1 == layout2)) throw DataError("stage feature files disagree on the layout");
    TrainingReport report;
    const auto model = train(rows1, rows2, layout1, config.model_config(), &report);
    save_model(dir.model(), model, config.meta(Stage::train));
    return report;
}

void run_predict(const RunConfig& config, const WorkDir& dir) {
    config.validate();
    const auto log = load_log(config, dir);
    const auto plans = load_plans(config, dir);
    const auto codec = load_codec(config, dir);
    const auto store = load_store(config, dir.store_eval());
    const auto model = load_trained(config, dir);
    const FeatureAssembler assembler(store, codec, model.layout());
    const InferenceEngine engine(model);
    auto ws = engine.make_workspace();
    AssembledFeatures features;
    auto out = open_output(dir.predictions());
    out << "#predictions v1\n";
    write_meta(out, config.meta(Stage::train));
    out << "#columns\ttweet_id\tengaging_user\tp_like\tp_reply\tp_retweet\tp_quote\n";
    for (const auto p : plans.eval.record_index) {
        const auto& r = log[p];
        assembler.assemble(r, features);
        const auto probs = engine.predict(features, ws);
        out << r.tweet_id << '\t' << r.engaging_user;
        for (const float v : probs) out << '\t' << text::format_float(v);
        out << '\n';
    }
    out << "#rows\t" << plans.eval.record_index.size() << '\n';
    if (!out) throw DataError("failed writing " + dir.predictions().string());
}

EvalReport run_eval(const RunConfig& config, const WorkDir& dir) {
    config.validate();
    const auto log = load_log(config, dir);
    const auto plans = load_plans(config, dir);
    auto in = open_input(dir.predictions());
    std::string line;
    if (!text::read_line(in, line) || line != "#predictions v1") {
        throw DataError(dir.predictions().string() + ": bad predictions header");
    }
    ArtifactMeta meta;
    std::vector<EvalRow> rows;
    std::optional<std::size_t> footer;
    std::size_t line_no = 1;
    while (text::read_line(in, line)) {
        ++line_no;
        if (consume_meta_line(line, meta) || text::starts_with(line, "#columns")) continue;
        if (text::starts_with(line, "#rows\t")) {
            footer = text::parse_u64(std::string_view(line).substr(6), "row count");
            continue;
        }
        const auto where = dir.predictions().string() + ":" + std::to_string(line_no) + ": ";
        const auto f = text::split(line, '\t');
        if (f.size() != 2 + kReactionCount) throw DataError(where + "expected 6 fields");
        if (rows.size() >= plans.eval.record_index.size()) throw DataError(where + "more rows than the eval plan");
        const auto& r = log[plans.eval.record_index[rows.size()]];
        if (text::parse_u64(f[0], "tweet_id") != r.tweet_id || text::parse_u64(f[1], "engaging_user") != r.engaging_user) {
            throw DataError(where + "row does not match the eval plan");
        }
        EvalRow row;
        for (std::size_t k = 0; k < kReactionCount; ++k) {
            row.scores[k] = text::parse_float(f[2 + k], "probability");
            row.labels[k] = r.reactions[k].has_value() ? 1 : 0;
        }
        row.engaged_follower_count = r.engaged_follower_count;
        row.language = r.language;
        rows.push_back(row);
    }
    check_hash(meta, config, Stage::train, dir.predictions());
    if (!footer || *footer != rows.size() || rows.size() != plans.eval.record_index.size()) {
        throw DataError(dir.predictions().string() + ": truncated or incomplete predictions");
    }
    auto report = grouped_eval(rows, config.metric_groups);
    {
        auto out = open_output(dir.report_text());
        out << format_report(report);
    }
    auto out = open_output(dir.report_tsv());
    write_report_tsv(out, report);
    return report;
}

// Bench ----------------------------------------------------------------------

namespace {

class CpuPin {
public:
    // cpu < 0 leaves the affinity alone.
    explicit CpuPin(int cpu) {
        if (cpu < 0 || cpu >= CPU_SETSIZE) return;
        if (sched_getaffinity(0, sizeof(saved_), &saved_) != 0) return;
        cpu_set_t set;
        CPU_ZERO(&set);
        CPU_SET(cpu, &set);
        pinned_ = sched_setaffinity(0, sizeof(set), &set) == 0;
    }
    ~CpuPin() {
        if (pinned_) sched_setaffinity(0, sizeof(saved_), &saved_);
    }
    CpuPin(const CpuPin&) = delete;
    CpuPin& operator=(const CpuPin&) = delete;
    bool pinned() const { return pinned_; }

private:
    cpu_set_t saved_{};
    bool pinned_ = false;
};

double percentile(const std::vector<double>& sorted, double q) {
    const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(sorted.size())));
    return sorted[std::max<std::size_t>(rank, 1) - 1];
}

} // namespace

BenchResult bench_predictions(std::span<const InteractionRecord> records, const FeatureStore& store,
                              const SketchCodec& codec, const EngagePredictor& model, const BenchOptions& options) {
    if (records.empty()) throw DataError("bench needs at least one record");
    if (options.predictions == 0) throw ConfigError("bench.predictions must be > 0");
    using clock = std::chrono::steady_clock;
    const auto wall_start = clock::now();
    CpuPin pin(options.cpu);
    const FeatureAssembler assembler(store, codec, model.layout());
    const InferenceEngine engine(model);
    auto ws = engine.make_workspace();
    AssembledFeatures features;
    std::vector<double> ms(options.predictions);
    float sink = 0.0f;
    std::size_t cursor = 0;
    auto one = [&] {
        assembler.assemble(records[cursor], features);
        sink += engine.predict(features, ws)[0];
        if (++cursor == records.size()) cursor = 0;
    };
    for (std::size_t i = 0; i < options.warmup; ++i) one();
    const std::uint64_t alloc_before = options.allocation_counter ? options.allocation_counter() : 0;
    for (std::size_t i = 0; i < options.predictions; ++i) {
        const auto t0 = clock::now();
        one();
        const auto t1 = clock::now();
        ms[i] = std::chrono::duration<double, std::milli>(t1 - t0).count();
    }
    const std::uint64_t alloc_after = options.allocation_counter ? options.allocation_counter() : 0;
    if (!std::isfinite(sink)) throw DivergenceError("non-finite prediction during bench", 0);

    BenchResult result;
    result.predictions = options.predictions;
    result.pinned = pin.pinned();
    result.allocations = alloc_after - alloc_before;
    double total = 0.0;
    for (const double v : ms) total += v;
    result.mean_ms = total / static_cast<double>(ms.size());
    std::sort(ms.begin(), ms.end());
    result.p50_ms = percentile(ms, 0.50);
    result.p95_ms = percentile(ms, 0.95);
    result.max_ms = ms.back();
    result.wall_seconds = std::chrono::duration<double>(clock::now() - wall_start).count();
    return result;
}

BenchResult run_bench(const RunConfig& config, const WorkDir& dir, const BenchOptions& options) {
    config.validate();
    const auto log = load_log(config, dir);
    const auto plans = load_plans(config, dir);
    const auto codec = load_codec(config, dir);
    const auto store = load_store(config, dir.store_eval());
    const auto model = load_trained(config, dir);
    std::vector<InteractionRecord> records;
    for (const auto p : plans.eval.record_index) records.push_back(log[p]);
    return bench_predictions(records, store, codec, model, options);
}

} // namespace engage
