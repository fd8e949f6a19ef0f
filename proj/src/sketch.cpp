#include "engage/sketch.hpp"

#include "engage/error.hpp"
#include "engage/log_io.hpp"
#include "engage/random.hpp"
#include "engage/text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace engage {

std::size_t SketchParams::bits() const {
    return static_cast<std::size_t>(std::countr_zero(width));
}

void SketchParams::validate() const {
    if (depth < 1) throw ConfigError("sketch depth must be >= 1");
    if (width < 2 || !std::has_single_bit(width) || width > (std::size_t{1} << 31)) {
        throw ConfigError("sketch width must be a power of two >= 2");
    }
    if (embedding_dim < 1) throw ConfigError("sketch embedding_dim must be >= 1");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::string_view offset_mode_name(OffsetMode m) {
    return m == OffsetMode::quantile ? "quantile" : "uniform";
}

} // namespace

SketchCodec SketchCodec::fit(const EmbeddingMatrix& embeddings, const SketchParams& params) {
    params.validate();
    if (embeddings.cols != params.embedding_dim) {
        throw DataError("sketch fit: embedding dim " + std::to_string(embeddings.cols) +
                        " does not match configured D " + std::to_string(params.embedding_dim));
    }
    if (embeddings.rows < params.width) {
        throw DataError("sketch fit: vocabulary size " + std::to_string(embeddings.rows) +
                        " is smaller than width " + std::to_string(params.width));
    }
    for (double v : embeddings.values) {
        if (!std::isfinite(v)) throw DataError("sketch fit: non-finite embedding value");
    }

    SketchCodec codec;
    codec.params_ = params;
    codec.vocab_ = embeddings.rows;
    const std::size_t D = params.embedding_dim;
    const std::size_t bits = params.bits();
    Rng rng(params.seed);
    std::vector<double> proj(embeddings.rows);
    codec.planes_.reserve(params.depth * bits);
    for (std::size_t k = 0; k < params.depth; ++k) {
        for (std::size_t b = 0; b < bits; ++b) {
            Hyperplane h;
            h.direction.resize(D);
            for (auto& x : h.direction) x = rng.normal();
            if (params.offsets == OffsetMode::quantile) {
                const std::size_t pick = rng.below(embeddings.rows);
                h.offset = dot(h.direction, embeddings.row(pick));
            } else {
                for (std::size_t t = 0; t < embeddings.rows; ++t) proj[t] = dot(h.direction, embeddings.row(t));
                const auto [lo, hi] = std::minmax_element(proj.begin(), proj.end());
                h.offset = rng.uniform(*lo, *hi);
            }
            codec.planes_.push_back(std::move(h));
        }
    }
    codec.assignment_.resize(embeddings.rows * params.depth);
    for (std::size_t t = 0; t < embeddings.rows; ++t) {
        for (std::size_t k = 0; k < params.depth; ++k) {
            codec.assignment_[t * params.depth + k] = codec.region_of(embeddings.row(t), k);
        }
    }
    return codec;
}

std::span<const Hyperplane> SketchCodec::hyperplanes(std::size_t depth) const {
    const std::size_t bits = params_.bits();
    return {planes_.data() + depth * bits, bits};
}

std::uint32_t SketchCodec::region_of(std::span<const double> embedding, std::size_t depth) const {
    std::uint32_t code = 0;
    const auto planes = hyperplanes(depth);
    for (std::size_t b = 0; b < planes.size(); ++b) {
        if (dot(planes[b].direction, embedding) > planes[b].offset) code |= 1u << b;
    }
    return code;
}

std::vector<std::uint32_t> SketchCodec::raw_counts(std::span<const TokenId> tokens, OovPolicy oov) const {
    std::vector<std::uint32_t> counts(params_.size(), 0);
    for (const TokenId t : tokens) {
        if (t >= vocab_) {
            if (oov == OovPolicy::skip) continue;
            throw DataError("token id " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(vocab_));
        }
        for (std::size_t k = 0; k < params_.depth; ++k) {
            ++counts[k * params_.width + region(t, k)];
        }
    }
    return counts;
}

void normalize_rows(Sketch& sketch) {
    for (std::size_t k = 0; k < sketch.depth; ++k) {
        double* row = sketch.values.data() + k * sketch.width;
        double sq = 0.0;
        for (std::size_t r = 0; r < sketch.width; ++r) sq += row[r] * row[r];
        if (sq == 0.0) continue;
        const double inv = 1.0 / std::sqrt(sq);
        for (std::size_t r = 0; r < sketch.width; ++r) row[r] *= inv;
    }
}

void SketchCodec::encode_into(std::span<const TokenId> tokens, Sketch& out, OovPolicy oov) const {
    if (out.depth != params_.depth || out.width != params_.width) {
        out = Sketch(params_.depth, params_.width);
    } else {
        std::fill(out.values.begin(), out.values.end(), 0.0);
    }
    for (const TokenId t : tokens) {
        if (t >= vocab_) {
            if (oov == OovPolicy::skip) continue;
            throw DataError("token id " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(vocab_));
        }
        const std::uint32_t* regions = assignment_.data() + static_cast<std::size_t>(t) * params_.depth;
        for (std::size_t k = 0; k < params_.depth; ++k) {
            out.values[k * params_.width + regions[k]] += 1.0;
        }
    }
    normalize_rows(out);
}

Sketch SketchCodec::encode(std::span<const TokenId> tokens, OovPolicy oov) const {
    Sketch s(params_.depth, params_.width);
    encode_into(tokens, s, oov);
    return s;
}

void SketchCodec::save(std::ostream& out, const ArtifactMeta& meta) const {
    out << "#sketch-codec v1 " << params_.depth << ' ' << params_.width << ' '
        << params_.embedding_dim << ' ' << params_.seed << '\n';
    write_meta(out, meta);
    out << "#offsets\t" << offset_mode_name(params_.offsets) << '\n';
    out << "#hyperplanes\t" << planes_.size() << '\n';
    const std::size_t bits = params_.bits();
    for (std::size_t i = 0; i < planes_.size(); ++i) {
        out << i / bits << '\t' << i % bits << '\t' << text::format_double(planes_[i].offset) << '\t'
            << text::join_doubles(planes_[i].direction, ' ') << '\n';
    }
    out << "#assignments\t" << vocab_ << '\n';
    for (std::size_t t = 0; t < vocab_; ++t) {
        for (std::size_t k = 0; k < params_.depth; ++k) {
            if (k) out << ' ';
            out << assignment_[t * params_.depth + k];
        }
        out << '\n';
    }
}

void SketchCodec::save(const std::filesystem::path& path, const ArtifactMeta& meta) const {
    auto out = open_output(path);
    save(out, meta);
}

SketchCodec SketchCodec::load(std::istream& in, ArtifactMeta* meta) {
    std::string line;
    if (!text::read_line(in, line) || !text::starts_with(line, "#sketch-codec v1 ")) {
        throw DataError("sketch codec: bad header");
    }
    const auto head = text::split(std::string_view(line).substr(17), ' ');
    if (head.size() != 4) throw DataError("sketch codec: expected '#sketch-codec v1 K W D seed'");
    SketchCodec codec;
    codec.params_.depth = text::parse_u64(head[0], "K");
    codec.params_.width = text::parse_u64(head[1], "W");
    codec.params_.embedding_dim = text::parse_u64(head[2], "D");
    codec.params_.seed = text::parse_u64(head[3], "seed");
    try {
        codec.params_.validate();
    } catch (const ConfigError& e) {
        throw DataError(std::string("sketch codec: ") + e.what());
    }
    ArtifactMeta m;
    auto next_line = [&](std::string_view what) {
        while (true) {
            if (!text::read_line(in, line)) throw DataError("sketch codec: truncated before " + std::string(what));
            if (!consume_meta_line(line, m)) return;
        }
    };
    next_line("#offsets");
    if (line == "#offsets\tquantile") {
        codec.params_.offsets = OffsetMode::quantile;
    } else if (line == "#offsets\tuniform") {
        codec.params_.offsets = OffsetMode::uniform;
    } else {
        throw DataError("sketch codec: bad #offsets line");
    }
    next_line("#hyperplanes");
    if (!text::starts_with(line, "#hyperplanes\t")) throw DataError("sketch codec: missing #hyperplanes");
    const std::size_t n_planes = text::parse_u64(std::string_view(line).substr(13), "hyperplane count");
    const std::size_t bits = codec.params_.bits();
    if (n_planes != codec.params_.depth * bits) throw DataError("sketch codec: hyperplane count mismatch");
    for (std::size_t i = 0; i < n_planes; ++i) {
        next_line("hyperplane");
        const auto f = text::split(line, '\t');
        if (f.size() != 4 || text::parse_u64(f[0], "depth") != i / bits ||
            text::parse_u64(f[1], "bit") != i % bits) {
            throw DataError("sketch codec: malformed hyperplane " + std::to_string(i));
        }
        Hyperplane h;
        h.offset = text::parse_double(f[2], "offset");
        for (const auto v : text::split(f[3], ' ')) h.direction.push_back(text::parse_double(v, "direction"));
        if (h.direction.size() != codec.params_.embedding_dim) {
            throw DataError("sketch codec: hyperplane " + std::to_string(i) + " has wrong dimension");
        }
        codec.planes_.push_back(std::move(h));
    }
    next_line("#assignments");
    if (!text::starts_with(line, "#assignments\t")) throw DataError("sketch codec: missing #assignments");
    codec.vocab_ = text::parse_u64(std::string_view(line).substr(13), "vocab size");
    codec.assignment_.reserve(codec.vocab_ * codec.params_.depth);
    for (std::size_t t = 0; t < codec.vocab_; ++t) {
        next_line("assignment row");
        const auto f = text::split(line, ' ');
        if (f.size() != codec.params_.depth) throw DataError("sketch codec: bad assignment row " + std::to_string(t));
        for (const auto v : f) {
            const std::uint64_t id = text::parse_u64(v, "region");
            if (id >= codec.params_.width) throw DataError("sketch codec: region id out of range");
            codec.assignment_.push_back(static_cast<std::uint32_t>(id));
        }
    }
    if (meta) *meta = std::move(m);
    return codec;
}

SketchCodec SketchCodec::load(const std::filesystem::path& path, ArtifactMeta* meta) {
    auto in = open_input(path);
    return load(in, meta);
}

} // namespace engage
