#include "engage/config.hpp"

#include "engage/error.hpp"
#include "engage/log_io.hpp"
#include "engage/random.hpp"
#include "engage/text.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

namespace engage {

namespace {

struct Key {
    std::string name;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Field accessors by type, so the key table below stays one line per key.
template <typename Field>
Key size_key(std::string name, Field field) {
    return {name, [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
            [field, name](RunConfig& c, std::string_view v) { field(c) = text::parse_u64(v, name); }};
}

template <typename Field>
Key double_key(std::string name, Field field) {
    return {name, [field](const RunConfig& c) { return text::format_double(field(const_cast<RunConfig&>(c))); },
            [field, name](RunConfig& c, std::string_view v) { field(c) = text::parse_double(v, name); }};
}

template <typename Field>
Key bool_key(std::string name, Field field) {
    return {name, [field](const RunConfig& c) { return std::string(field(const_cast<RunConfig&>(c)) ? "1" : "0"); },
            [field, name](RunConfig& c, std::string_view v) { field(c) = text::parse_bool01(v, name); }};
}

#define FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

const std::vector<Key>& key_table() {
    static const std::vector<Key> keys = [] {
        std::vector<Key> k;
        k.push_back(size_key("seed", FIELD(seed)));
        k.push_back(size_key("gen.users", FIELD(gen.users)));
        k.push_back(size_key("gen.tweets", FIELD(gen.tweets)));
        k.push_back(size_key("gen.rows", FIELD(gen.rows)));
        k.push_back(size_key("gen.vocab", FIELD(gen.vocab)));
        k.push_back(size_key("gen.embedding_dim", FIELD(gen.embedding_dim)));
        k.push_back(size_key("gen.days", FIELD(gen.days)));
        k.push_back(size_key("gen.topics", FIELD(gen.topics)));
        k.push_back(size_key("gen.languages", FIELD(gen.languages)));
        k.push_back(size_key("gen.hashtag_vocab", FIELD(gen.hashtag_vocab)));
        k.push_back(size_key("gen.group_size", FIELD(gen.group_size)));
        k.push_back(size_key("gen.tokens_min", FIELD(gen.tokens_min)));
        k.push_back(size_key("gen.tokens_max", FIELD(gen.tokens_max)));
        k.push_back(double_key("gen.topic_purity", FIELD(gen.topic_purity)));
        k.push_back(double_key("gen.embedding_noise", FIELD(gen.embedding_noise)));
        k.push_back(double_key("gen.follow_in_group", FIELD(gen.follow_in_group)));
        k.push_back(size_key("gen.random_follows", FIELD(gen.random_follows)));
        k.push_back(double_key("gen.followed_author_share", FIELD(gen.followed_author_share)));
        for (std::size_t r = 0; r < kReactionCount; ++r) {
            const std::string name = "gen.prior." + std::string(kReactionNames[r]);
            k.push_back({name, [r](const RunConfig& c) { return text::format_double(c.gen.priors[r]); },
                         [r, name](RunConfig& c, std::string_view v) { c.gen.priors[r] = text::parse_double(v, name); }});
        }
        k.push_back(double_key("gen.topic_strength", FIELD(gen.topic_strength)));
        k.push_back(double_key("gen.interest_strength", FIELD(gen.interest_strength)));
        k.push_back(double_key("gen.pair_strength", FIELD(gen.pair_strength)));
        k.push_back(double_key("gen.popularity_strength", FIELD(gen.popularity_strength)));
        k.push_back({"gen.start_time", [](const RunConfig& c) { return std::to_string(c.gen.start_time); },
                     [](RunConfig& c, std::string_view v) { c.gen.start_time = text::parse_i64(v, "gen.start_time"); }});
        k.push_back(size_key("split.train_days", FIELD(train_days)));
        k.push_back(size_key("sketch.depth", FIELD(sketch_depth)));
        k.push_back(size_key("sketch.width", FIELD(sketch_width)));
        k.push_back({"sketch.offsets",
                     [](const RunConfig& c) {
                         return std::string(c.sketch_offsets == OffsetMode::quantile ? "quantile" : "uniform");
                     },
                     [](RunConfig& c, std::string_view v) {
                         if (v == "quantile") {
                             c.sketch_offsets = OffsetMode::quantile;
                         } else if (v == "uniform") {
                             c.sketch_offsets = OffsetMode::uniform;
                         } else {
                             throw ConfigError("sketch.offsets must be quantile or uniform");
                         }
                     }});
        k.push_back(double_key("store.jaccard_threshold", FIELD(jaccard_threshold)));
        k.push_back(size_key("partition.k", FIELD(partition_k)));
        k.push_back(double_key("partition.holdout_fraction", FIELD(holdout_fraction)));
        k.push_back(size_key("model.hidden_width", FIELD(model.hidden_width)));
        k.push_back(size_key("model.hidden_layers", FIELD(model.hidden_layers)));
        k.push_back(double_key("model.leaky_slope", FIELD(model.leaky_slope)));
        k.push_back(size_key("model.embedding_dim_cap", FIELD(model.embedding_dim_cap)));
        k.push_back(size_key("model.batch_size", FIELD(model.batch_size)));
        k.push_back(double_key("model.lr", FIELD(model.lr)));
        k.push_back(double_key("model.weight_decay", FIELD(model.weight_decay)));
        k.push_back(double_key("model.beta1", FIELD(model.beta1)));
        k.push_back(double_key("model.beta2", FIELD(model.beta2)));
        k.push_back(double_key("model.adam_epsilon", FIELD(model.adam_epsilon)));
        k.push_back(size_key("model.epochs_stage1", FIELD(model.epochs_stage1)));
        k.push_back(size_key("model.epochs_stage2", FIELD(model.epochs_stage2)));
        k.push_back(double_key("model.bn_momentum", FIELD(model.bn_momentum)));
        k.push_back(double_key("model.bn_epsilon", FIELD(model.bn_epsilon)));
        k.push_back(bool_key("model.use_sketch", FIELD(model.use_sketch)));
        k.push_back({"model.fourier_scales",
                     [](const RunConfig& c) {
                         std::string s;
                         for (const int e : c.model.fourier.scales.exponents) {
                             if (!s.empty()) s += ',';
                             s += std::to_string(e);
                         }
                         return s;
                     },
                     [](RunConfig& c, std::string_view v) {
                         c.model.fourier.scales.exponents.clear();
                         for (const auto part : text::split(v, ',')) {
                             c.model.fourier.scales.exponents.push_back(
                                 static_cast<int>(text::parse_i64(trim(part), "model.fourier_scales")));
                         }
                     }});
        k.push_back(bool_key("model.fourier_log_inputs", FIELD(model.fourier.log_inputs)));
        k.push_back(size_key("metrics.groups", FIELD(metric_groups)));
        k.push_back(size_key("bench.warmup", FIELD(bench.warmup)));
        k.push_back(size_key("bench.predictions", FIELD(bench.predictions)));
        k.push_back(double_key("bench.budget_p50_ms", FIELD(bench.budget_p50_ms)));
        k.push_back(double_key("bench.budget_p95_ms", FIELD(bench.budget_p95_ms)));
        k.push_back({"bench.cpu", [](const RunConfig& c) { return std::to_string(c.bench.cpu); },
                     [](RunConfig& c, std::string_view v) {
                         c.bench.cpu = static_cast<int>(text::parse_i64(v, "bench.cpu"));
                     }});
        k.push_back(size_key("run.threads", FIELD(threads)));
        std::sort(k.begin(), k.end(), [](const Key& a, const Key& b) { return a.name < b.name; });
        return k;
    }();
    return keys;
}

#undef FIELD

std::vector<std::string_view> stage_prefixes(Stage stage) {
    switch (stage) {
    case Stage::gen:
        return {"seed", "gen."};
    case Stage::fit_sketch:
        return {"seed", "gen.", "sketch."};
    case Stage::partition:
        return {"seed", "gen.", "split.", "partition."};
    case Stage::build_store:
        return {"seed", "gen.", "split.", "partition.", "store."};
    case Stage::featurize:
        return {"seed", "gen.", "split.", "partition.", "store.", "sketch."};
    case Stage::train:
        return {"seed", "gen.", "split.", "partition.", "store.", "sketch.", "model."};
    }
    return {};
}

} // namespace

ModelConfig RunConfig::desk_model() {
    ModelConfig m;
    m.hidden_width = 256;
    m.lr = 1e-3;
    return m;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name);
    return out;
}

void RunConfig::set(std::string_view key, std::string_view value) {
    const auto& keys = key_table();
    const auto it = std::find_if(keys.begin(), keys.end(), [&](const Key& k) { return k.name == key; });
    if (it == keys.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    try {
        it->set(*this, trim(value));
    } catch (const DataError& e) {
        throw ConfigError(std::string(key) + ": " + e.what());
    }
}

void RunConfig::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
    set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
    RunConfig c;
    std::size_t line_no = 0;
    for (const auto raw : text::split(text, '\n')) {
        ++line_no;
        std::string line(raw);
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": expected key = value");
        }
        try {
            c.set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse(content, path.string());
}

void RunConfig::validate() const {
    if (train_days < 1 || train_days >= gen.days) {
        throw ConfigError("split.train_days must lie in [1, gen.days)");
    }
    if (partition_k < 2) throw ConfigError("partition.k must be >= 2");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("partition.holdout_fraction must lie in (0, 1)");
    }
    if (!(jaccard_threshold > 0.0 && jaccard_threshold <= 1.0)) {
        throw ConfigError("store.jaccard_threshold must lie in (0, 1]");
    }
    if (metric_groups == 0) throw ConfigError("metrics.groups must be >= 1");
    if (threads == 0) throw ConfigError("run.threads must be >= 1");
    sketch_params(gen.embedding_dim).validate();
    model.validate();
}

std::vector<std::string> RunConfig::lines() const {
    std::vector<std::string> out;
    for (const auto& k : key_table()) out.push_back(k.name + "=" + k.get(*this));
    return out;
}

std::uint64_t RunConfig::hash(Stage stage) const {
    const auto prefixes = stage_prefixes(stage);
    std::uint64_t h = text::fnv1a("engage-config");
    for (const auto& k : key_table()) {
        const bool covered = std::any_of(prefixes.begin(), prefixes.end(),
                                         [&](std::string_view p) { return text::starts_with(k.name, p); });
        if (covered) h = text::fnv1a(k.name + "=" + k.get(*this) + "\n", h);
    }
    return h;
}

ArtifactMeta RunConfig::meta(Stage stage) const {
    return ArtifactMeta{text::hex64(hash(stage)), lines()};
}

SketchParams RunConfig::sketch_params(std::size_t embedding_dim) const {
    SketchParams p;
    p.depth = sketch_depth;
    p.width = sketch_width;
    p.embedding_dim = embedding_dim;
    p.seed = mix64(seed ^ 0x736b65746368ULL);
    p.offsets = sketch_offsets;
    return p;
}

StoreConfig RunConfig::store_config() const {
    return StoreConfig{jaccard_threshold, mix64(seed ^ 0x73746f7265ULL)};
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m = model;
    m.seed = mix64(seed ^ 0x6d6f64656cULL);
    return m;
}

} // namespace engage
