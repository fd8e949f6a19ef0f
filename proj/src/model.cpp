#include "engage/model.hpp"

#include "engage/error.hpp"
#include "engage/log_io.hpp"
#include "engage/random.hpp"
#include "engage/text.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

namespace engage {

void ModelConfig::validate() const {
    auto fail = [](const std::string& msg) { throw ConfigError("model: " + msg); };
    if (hidden_width == 0) fail("hidden_width must be > 0");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in (0,1)");
    if (embedding_dim_cap == 0) fail("embedding_dim_cap must be > 0");
    if (batch_size == 0) fail("batch_size must be > 0");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr must be positive");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) fail("betas must lie in (0,1)");
    if (!(adam_epsilon > 0.0)) fail("adam_epsilon must be > 0");
    if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) fail("bn_momentum must lie in (0,1]");
    if (!(bn_epsilon > 0.0)) fail("bn_epsilon must be > 0");
    fourier.scales.validate();
}

namespace {

template <typename Scalar>
Scalar leaky(Scalar x, Scalar slope) {
    return x > Scalar(0) ? x : slope * x;
}

// Numerically stable binary cross-entropy on a logit.
double bce_logit(double z, double y) {
    return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_row(const FeatureRow& row, const FeatureLayout& layout) {
    if (row.numeric.size() != layout.numeric_count ||
        row.categorical.size() != layout.categorical_vocab.size()) {
        throw DataError("feature row does not match the model layout");
    }
    for (std::size_t c = 0; c < row.categorical.size(); ++c) {
        if (row.categorical[c] >= layout.categorical_vocab[c]) {
            throw DataError("categorical id " + std::to_string(row.categorical[c]) + " out of range for feature " +
                            std::to_string(c));
        }
    }
    for (const auto& e : row.sketch) {
        if (e.index >= layout.sketch_size()) throw DataError("sketch index out of range");
    }
}

std::vector<const FeatureRow*> pointers(std::span<const FeatureRow> rows) {
    std::vector<const FeatureRow*> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = &rows[i];
    return out;
}

} // namespace

template <typename Scalar>
Network<Scalar>::Network(FeatureLayout layout, ModelConfig config)
    : layout_(std::move(layout)), config_(std::move(config)) {
    config_.validate();
    const std::size_t n_cat = layout_.categorical_vocab.size();
    std::size_t offset = layout_.sketch_size() + layout_.numeric_count * config_.fourier.width();
    for (std::size_t c = 0; c < n_cat; ++c) {
        const std::size_t dim = std::min(config_.embedding_dim_cap, layout_.categorical_vocab[c]);
        embedding_dims_.push_back(dim);
        embedding_offsets_.push_back(offset);
        offset += dim;
    }
    strength_offset_ = offset;
    input_dim_ = offset + layout_.strength_count;

    Rng rng(config_.seed);
    auto uniform_matrix = [&](std::size_t rows, std::size_t cols, double bound) {
        Matrix m(rows, cols);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = static_cast<Scalar>(rng.uniform(-bound, bound));
        }
        return m;
    };
    for (std::size_t c = 0; c < n_cat; ++c) {
        Matrix e(layout_.categorical_vocab[c], embedding_dims_[c]);
        for (Eigen::Index j = 0; j < e.cols(); ++j) {
            for (Eigen::Index i = 0; i < e.rows(); ++i) e(i, j) = static_cast<Scalar>(rng.normal());
        }
        params_.push_back(std::move(e));
        param_names_.push_back("embedding." + std::string(c < kCategoricalFeatureNames.size()
                                                              ? kCategoricalFeatureNames[c]
                                                              : std::to_string(c)));
        decay_.push_back(true);
    }
    std::size_t fan_in = input_dim_;
    const std::size_t H = config_.hidden_width;
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
        const std::string prefix = "block" + std::to_string(l) + ".";
        params_.push_back(uniform_matrix(H, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))));
        param_names_.push_back(prefix + "weight");
        decay_.push_back(true);
        params_.push_back(Matrix::Ones(H, 1));
        param_names_.push_back(prefix + "gamma");
        decay_.push_back(false);
        params_.push_back(Matrix::Zero(H, 1));
        param_names_.push_back(prefix + "beta");
        decay_.push_back(false);
        running_mean_.push_back(Vector::Zero(H));
        running_var_.push_back(Vector::Ones(H));
        fan_in = H;
    }
    params_.push_back(uniform_matrix(kReactionCount, fan_in, 1.0 / std::sqrt(static_cast<double>(fan_in))));
    param_names_.push_back("output.weight");
    decay_.push_back(true);
    params_.push_back(Matrix::Zero(kReactionCount, 1));
    param_names_.push_back("output.bias");
    decay_.push_back(false);
}

template <typename Scalar>
void Network<Scalar>::build_input(std::span<const FeatureRow* const> rows, Matrix& x) const {
    x.setZero(static_cast<Eigen::Index>(input_dim_), static_cast<Eigen::Index>(rows.size()));
    const std::size_t fw = config_.fourier.width();
    for (std::size_t b = 0; b < rows.size(); ++b) {
        const FeatureRow& row = *rows[b];
        check_row(row, layout_);
        Scalar* col = x.col(static_cast<Eigen::Index>(b)).data();
        if (config_.use_sketch) {
            for (const auto& e : row.sketch) col[e.index] = static_cast<Scalar>(e.value);
        }
        for (std::size_t j = 0; j < row.numeric.size(); ++j) {
            config_.fourier.encode(row.numeric[j], std::span<Scalar>(col + fourier_offset() + j * fw, fw));
        }
        for (std::size_t c = 0; c < row.categorical.size(); ++c) {
            const auto& table = params_[c];
            for (std::size_t d = 0; d < embedding_dims_[c]; ++d) {
                col[embedding_offsets_[c] + d] =
                    table(static_cast<Eigen::Index>(row.categorical[c]), static_cast<Eigen::Index>(d));
            }
        }
        for (std::size_t k = 0; k < layout_.strength_count; ++k) {
            col[strength_offset_ + k] = static_cast<Scalar>(row.strengths[k]);
        }
    }
}

template <typename Scalar>
double Network<Scalar>::loss_and_gradients(std::span<const FeatureRow> rows, std::vector<Matrix>* grads,
                                           bool update_running) {
    const auto ptrs = pointers(rows);
    return loss_and_gradients(std::span<const FeatureRow* const>(ptrs), grads, update_running);
}

template <typename Scalar>
double Network<Scalar>::loss_and_gradients(std::span<const FeatureRow* const> rows,
                                           std::vector<Matrix>* grads, bool update_running) {
    const auto B = static_cast<Eigen::Index>(rows.size());
    if (B == 0) throw DataError("empty batch");
    const std::size_t L = config_.hidden_layers;
    const auto slope = static_cast<Scalar>(config_.leaky_slope);
    const auto eps = static_cast<Scalar>(config_.bn_epsilon);
    const auto momentum = static_cast<Scalar>(config_.bn_momentum);

    std::vector<Matrix> h(L + 1);
    std::vector<Matrix> zhat(L);
    std::vector<Matrix> y(L);
    std::vector<Vector> inv_std(L);
    build_input(rows, h[0]);
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix z = weight(l) * h[l];
        const Vector mu = z.rowwise().mean();
        Matrix centered = z.colwise() - mu;
        const Vector var = centered.array().square().rowwise().mean();
        inv_std[l] = (var.array() + eps).rsqrt();
        zhat[l] = centered.array().colwise() * inv_std[l].array();
        y[l] = (zhat[l].array().colwise() * gamma(l).col(0).array()).colwise() + beta(l).col(0).array();
        h[l + 1] = y[l].unaryExpr([slope](Scalar v) { return leaky(v, slope); });
        if (l > 0) h[l + 1] += h[l];
        if (update_running) {
            const Scalar unbias = B > 1 ? static_cast<Scalar>(B) / static_cast<Scalar>(B - 1) : Scalar(1);
            running_mean_[l] = (Scalar(1) - momentum) * running_mean_[l] + momentum * mu;
            running_var_[l] = (Scalar(1) - momentum) * running_var_[l] + momentum * unbias * var;
        }
    }
    Matrix logits = out_weight() * h[L];
    logits.colwise() += out_bias().col(0);

    double loss = 0.0;
    Matrix dlogits(kReactionCount, B);
    for (Eigen::Index b = 0; b < B; ++b) {
        const FeatureRow& row = *rows[static_cast<std::size_t>(b)];
        for (std::size_t k = 0; k < kReactionCount; ++k) {
            const double z = static_cast<double>(logits(static_cast<Eigen::Index>(k), b));
            const double t = row.labels[k];
            loss += bce_logit(z, t);
            dlogits(static_cast<Eigen::Index>(k), b) = static_cast<Scalar>((sigmoid(z) - t) / static_cast<double>(B));
        }
    }
    loss /= static_cast<double>(B);
    if (!grads) return loss;

    grads->resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) (*grads)[i].setZero(params_[i].rows(), params_[i].cols());
    std::vector<Matrix>& g = *grads;
    g[params_.size() - 2].noalias() = dlogits * h[L].transpose();
    g[params_.size() - 1] = dlogits.rowwise().sum();
    Matrix dh = out_weight().transpose() * dlogits;
    const Scalar bs = static_cast<Scalar>(B);
    for (std::size_t l = L; l-- > 0;) {
        const Matrix dy = dh.array() * y[l].array().unaryExpr([slope](Scalar v) {
            return v > Scalar(0) ? Scalar(1) : slope;
        });
        const std::size_t base = block_base(l);
        g[base + 1] = (dy.array() * zhat[l].array()).rowwise().sum().matrix();
        g[base + 2] = dy.rowwise().sum();
        const Matrix dzhat = dy.array().colwise() * gamma(l).col(0).array();
        const Vector sum1 = dzhat.rowwise().sum();
        const Vector sum2 = (dzhat.array() * zhat[l].array()).rowwise().sum();
        Matrix dz = (bs * dzhat.array()).colwise() - sum1.array();
        dz.array() -= zhat[l].array().colwise() * sum2.array();
        dz.array().colwise() *= inv_std[l].array() / bs;
        g[base].noalias() = dz * h[l].transpose();
        Matrix dprev = weight(l).transpose() * dz;
        if (l > 0) dprev += dh;
        dh = std::move(dprev);
    }
    // dh is now the input gradient; scatter the embedding slots.
    for (std::size_t c = 0; c < layout_.categorical_vocab.size(); ++c) {
        for (Eigen::Index b = 0; b < B; ++b) {
            const auto id = static_cast<Eigen::Index>(rows[static_cast<std::size_t>(b)]->categorical[c]);
            for (std::size_t d = 0; d < embedding_dims_[c]; ++d) {
                g[c](id, static_cast<Eigen::Index>(d)) +=
                    dh(static_cast<Eigen::Index>(embedding_offsets_[c] + d), b);
            }
        }
    }
    return loss;
}

template <typename Scalar>
typename Network<Scalar>::Matrix Network<Scalar>::predict(std::span<const FeatureRow> rows) const {
    const auto ptrs = pointers(rows);
    Matrix h;
    build_input(ptrs, h);
    const auto slope = static_cast<Scalar>(config_.leaky_slope);
    const auto eps = static_cast<Scalar>(config_.bn_epsilon);
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
        Matrix z = weight(l) * h;
        z.colwise() -= running_mean_[l];
        const Vector scale = gamma(l).col(0).array() * (running_var_[l].array() + eps).rsqrt();
        z.array().colwise() *= scale.array();
        z.colwise() += beta(l).col(0);
        Matrix a = z.unaryExpr([slope](Scalar v) { return leaky(v, slope); });
        if (l > 0) a += h;
        h = std::move(a);
    }
    Matrix logits = out_weight() * h;
    logits.colwise() += out_bias().col(0);
    return logits.unaryExpr([](Scalar z) { return static_cast<Scalar>(sigmoid(static_cast<double>(z))); });
}

template <typename Scalar>
Scalar Network<Scalar>::min_preactivation_magnitude(std::span<const FeatureRow> rows) const {
    const auto ptrs = pointers(rows);
    Matrix h;
    build_input(ptrs, h);
    const auto slope = static_cast<Scalar>(config_.leaky_slope);
    const auto eps = static_cast<Scalar>(config_.bn_epsilon);
    Scalar best = std::numeric_limits<Scalar>::infinity();
    for (std::size_t l = 0; l < config_.hidden_layers; ++l) {
        const Matrix z = weight(l) * h;
        const Vector mu = z.rowwise().mean();
        const Matrix centered = z.colwise() - mu;
        const Vector inv = (centered.array().square().rowwise().mean() + eps).rsqrt();
        const Matrix y = ((centered.array().colwise() * inv.array()).colwise() * gamma(l).col(0).array()).colwise() +
                         beta(l).col(0).array();
        best = std::min(best, y.cwiseAbs().minCoeff());
        Matrix a = y.unaryExpr([slope](Scalar v) { return leaky(v, slope); });
        if (l > 0) a += h;
        h = std::move(a);
    }
    return best;
}

template <typename Scalar>
bool Network<Scalar>::operator==(const Network& o) const {
    if (!(layout_ == o.layout_) || params_.size() != o.params_.size() ||
        running_mean_.size() != o.running_mean_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i].rows() != o.params_[i].rows() || params_[i].cols() != o.params_[i].cols() ||
            params_[i] != o.params_[i]) {
            return false;
        }
    }
    for (std::size_t l = 0; l < running_mean_.size(); ++l) {
        if (running_mean_[l] != o.running_mean_[l] || running_var_[l] != o.running_var_[l]) return false;
    }
    return true;
}

template class Network<float>;
template class Network<double>;

template <typename To, typename From>
Network<To> convert_network(const Network<From>& from) {
    Network<To> to(from.layout(), from.config());
    for (std::size_t i = 0; i < from.params().size(); ++i) to.params()[i] = from.params()[i].template cast<To>();
    for (std::size_t l = 0; l < from.block_count(); ++l) {
        to.running_mean(l) = from.running_mean(l).template cast<To>();
        to.running_var(l) = from.running_var(l).template cast<To>();
    }
    return to;
}

template Network<double> convert_network<double, float>(const Network<float>&);
template Network<float> convert_network<float, double>(const Network<double>&);

// Inference ------------------------------------------------------------------

InferenceEngine::InferenceEngine(const EngagePredictor& model)
    : layout_(model.layout()),
      fourier_(model.config().fourier),
      use_sketch_(model.config().use_sketch),
      slope_(static_cast<float>(model.config().leaky_slope)) {
    const std::size_t n_cat = layout_.categorical_vocab.size();
    for (std::size_t c = 0; c < n_cat; ++c) {
        embeddings_.push_back(model.embedding(c));
        embedding_dims_.push_back(model.embedding_dim(c));
    }
    const auto eps = static_cast<float>(model.config().bn_epsilon);
    auto fold = [&](std::size_t l, Eigen::MatrixXf& w, Eigen::VectorXf& shift) {
        const Eigen::VectorXf scale =
            model.gamma(l).col(0).array() * (model.running_var(l).array() + eps).rsqrt();
        w = scale.asDiagonal() * model.weight(l);
        shift = model.beta(l).col(0).array() - scale.array() * model.running_mean(l).array();
    };
    const auto S = static_cast<Eigen::Index>(layout_.sketch_size());
    Eigen::MatrixXf first;
    if (model.block_count() == 0) {
        first = model.out_weight();
        first_shift_ = model.out_bias().col(0);
        first_is_output_ = true;
    } else {
        fold(0, first, first_shift_);
    }
    first_sketch_ = first.leftCols(S);
    first_dense_ = first.rightCols(first.cols() - S);
    for (std::size_t l = 1; l < model.block_count(); ++l) {
        Eigen::MatrixXf w;
        Eigen::VectorXf shift;
        fold(l, w, shift);
        weights_.push_back(std::move(w));
        shifts_.push_back(std::move(shift));
    }
    out_weight_ = model.out_weight();
    out_bias_ = model.out_bias().col(0);
}

InferenceWorkspace InferenceEngine::make_workspace() const {
    InferenceWorkspace ws;
    ws.dense.setZero(first_dense_.cols());
    ws.a.setZero(first_dense_.rows());
    ws.b.setZero(first_dense_.rows());
    ws.logits.setZero(static_cast<Eigen::Index>(kReactionCount));
    return ws;
}

void InferenceEngine::fill_dense(std::span<const double> numeric, std::span<const std::uint32_t> categorical,
                                 std::span<const double> strengths, Eigen::VectorXf& dense) const {
    if (numeric.size() != layout_.numeric_count || categorical.size() != layout_.categorical_vocab.size() ||
        strengths.size() != layout_.strength_count) {
        throw DataError("features do not match the model layout");
    }
    if (dense.size() != first_dense_.cols()) dense.setZero(first_dense_.cols());
    float* out = dense.data();
    const std::size_t fw = fourier_.width();
    for (std::size_t j = 0; j < numeric.size(); ++j) {
        fourier_.encode(numeric[j], std::span<float>(out, fw));
        out += fw;
    }
    for (std::size_t c = 0; c < categorical.size(); ++c) {
        if (categorical[c] >= layout_.categorical_vocab[c]) throw DataError("categorical id out of range");
        const auto row = static_cast<Eigen::Index>(categorical[c]);
        for (std::size_t d = 0; d < embedding_dims_[c]; ++d) {
            *out++ = embeddings_[c](row, static_cast<Eigen::Index>(d));
        }
    }
    for (const double s : strengths) *out++ = static_cast<float>(s);
}

template <typename SketchVisitor>
Probabilities InferenceEngine::run(SketchVisitor&& sketch, InferenceWorkspace& ws) const {
    ws.a.noalias() = first_dense_ * ws.dense;
    ws.a += first_shift_;
    if (use_sketch_) {
        sketch([&](std::size_t index, float value) { ws.a += value * first_sketch_.col(static_cast<Eigen::Index>(index)); });
    }
    if (first_is_output_) {
        ws.logits = ws.a;
    } else {
        ws.a = ws.a.cwiseMax(slope_ * ws.a);
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            ws.b.noalias() = weights_[l] * ws.a;
            ws.b += shifts_[l];
            ws.a += ws.b.cwiseMax(slope_ * ws.b);
        }
        ws.logits.noalias() = out_weight_ * ws.a;
        ws.logits += out_bias_;
    }
    Probabilities p{};
    for (std::size_t k = 0; k < kReactionCount; ++k) {
        const float z = ws.logits(static_cast<Eigen::Index>(k));
        if (!std::isfinite(z)) throw DivergenceError("non-finite activation in forward pass", 0);
        p[k] = static_cast<float>(sigmoid(static_cast<double>(z)));
    }
    return p;
}

Probabilities InferenceEngine::predict(const AssembledFeatures& f, InferenceWorkspace& ws) const {
    if (f.sketch.values.size() != layout_.sketch_size()) throw DataError("sketch size does not match the model layout");
    fill_dense(f.numeric, f.categorical, f.community_strengths, ws.dense);
    return run(
        [&](auto&& add) {
            for (std::size_t i = 0; i < f.sketch.values.size(); ++i) {
                if (f.sketch.values[i] != 0.0) add(i, static_cast<float>(f.sketch.values[i]));
            }
        },
        ws);
}

Probabilities InferenceEngine::predict(const FeatureRow& row, InferenceWorkspace& ws) const {
    fill_dense(row.numeric, row.categorical, row.strengths, ws.dense);
    return run(
        [&](auto&& add) {
            for (const auto& e : row.sketch) {
                if (e.index >= layout_.sketch_size()) throw DataError("sketch index out of range");
                add(e.index, e.value);
            }
        },
        ws);
}

Probabilities InferenceEngine::predict(const AssembledFeatures& features) const {
    auto ws = make_workspace();
    return predict(features, ws);
}

std::vector<Probabilities> InferenceEngine::predict_batch(std::span<const FeatureRow> rows) const {
    const auto B = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXf dense(first_dense_.cols(), B);
    Eigen::VectorXf col;
    for (Eigen::Index b = 0; b < B; ++b) {
        const auto& row = rows[static_cast<std::size_t>(b)];
        fill_dense(row.numeric, row.categorical, row.strengths, col);
        dense.col(b) = col;
    }
    Eigen::MatrixXf a = first_dense_ * dense;
    a.colwise() += first_shift_;
    if (use_sketch_) {
        for (Eigen::Index b = 0; b < B; ++b) {
            for (const auto& e : rows[static_cast<std::size_t>(b)].sketch) {
                if (e.index >= layout_.sketch_size()) throw DataError("sketch index out of range");
                a.col(b) += e.value * first_sketch_.col(static_cast<Eigen::Index>(e.index));
            }
        }
    }
    Eigen::MatrixXf logits;
    if (first_is_output_) {
        logits = std::move(a);
    } else {
        a = a.cwiseMax(slope_ * a);
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            Eigen::MatrixXf z = weights_[l] * a;
            z.colwise() += shifts_[l];
            a += z.cwiseMax(slope_ * z);
        }
        logits = out_weight_ * a;
        logits.colwise() += out_bias_;
    }
    std::vector<Probabilities> out(rows.size());
    for (Eigen::Index b = 0; b < B; ++b) {
        for (std::size_t k = 0; k < kReactionCount; ++k) {
            const float z = logits(static_cast<Eigen::Index>(k), b);
            if (!std::isfinite(z)) throw DivergenceError("non-finite activation in forward pass", static_cast<std::size_t>(b));
            out[static_cast<std::size_t>(b)][k] = static_cast<float>(sigmoid(static_cast<double>(z)));
        }
    }
    return out;
}

Probabilities forward(const EngagePredictor& model, const AssembledFeatures& features) {
    return InferenceEngine(model).predict(features);
}

// Training -------------------------------------------------------------------

double mean_loss(const EngagePredictor& model, std::span<const FeatureRow> rows) {
    if (rows.empty()) return 0.0;
    const auto p = model.predict(rows);
    double loss = 0.0;
    for (Eigen::Index b = 0; b < p.cols(); ++b) {
        for (std::size_t k = 0; k < kReactionCount; ++k) {
            const double q = std::clamp(static_cast<double>(p(static_cast<Eigen::Index>(k), b)), 1e-7, 1.0 - 1e-7);
            const double y = rows[static_cast<std::size_t>(b)].labels[k];
            loss -= y * std::log(q) + (1.0 - y) * std::log(1.0 - q);
        }
    }
    return loss / static_cast<double>(rows.size());
}

void train_stage(EngagePredictor& model, std::span<const FeatureRow> rows, std::size_t epochs,
                 std::uint64_t shuffle_seed, std::vector<double>* epoch_loss, std::size_t* step_counter) {
    if (epochs == 0 || rows.empty()) return;
    using Matrix = EngagePredictor::Matrix;
    const ModelConfig& cfg = model.config();
    const std::size_t n = rows.size();
    const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
    const double total_steps = static_cast<double>(epochs * batches);
    auto& params = model.params();
    std::vector<Matrix> m(params.size());
    std::vector<Matrix> v(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i].setZero(params[i].rows(), params[i].cols());
        v[i].setZero(params[i].rows(), params[i].cols());
    }
    std::vector<Matrix> grads;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::vector<const FeatureRow*> batch;
    batch.reserve(cfg.batch_size);
    Rng rng(shuffle_seed);
    std::size_t t = 0;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(order);
        double sum = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(n, start + cfg.batch_size); ++i) batch.push_back(&rows[order[i]]);
            const double loss = model.loss_and_gradients(batch, &grads, true);
            const std::size_t global_step = (step_counter ? *step_counter : 0) + t;
            if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss", global_step);
            sum += loss * static_cast<double>(batch.size());
            const double lr = cfg.lr * (1.0 - static_cast<double>(t) / total_steps);
            ++t;
            const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
            const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
            const auto b1 = static_cast<float>(cfg.beta1);
            const auto b2 = static_cast<float>(cfg.beta2);
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = b1 * m[i] + (1.0f - b1) * grads[i];
                v[i] = b2 * v[i] + (1.0f - b2) * grads[i].cwiseAbs2();
                if (model.decays(i)) params[i] *= static_cast<float>(1.0 - lr * cfg.weight_decay);
                const auto step_size = static_cast<float>(lr / c1);
                const auto denom_scale = static_cast<float>(1.0 / std::sqrt(c2));
                const auto eps = static_cast<float>(cfg.adam_epsilon);
                params[i].array() -= step_size * m[i].array() / (v[i].array().sqrt() * denom_scale + eps);
            }
        }
        if (epoch_loss) epoch_loss->push_back(sum / static_cast<double>(n)); // row-weighted mean
    }
    if (step_counter) *step_counter += t;
}

EngagePredictor train(std::span<const FeatureRow> stage1, std::span<const FeatureRow> stage2,
                      const FeatureLayout& layout, const ModelConfig& config, TrainingReport* report) {
    config.validate();
    if (stage1.empty()) throw DataError("training needs a non-empty first stage");
    EngagePredictor model(layout, config);
    TrainingReport local;
    TrainingReport& rep = report ? *report : local;
    rep = TrainingReport{};
    rep.initial_loss = mean_loss(model, stage1);
    train_stage(model, stage1, config.epochs_stage1, mix64(config.seed ^ 0x5354414745310000ULL),
                &rep.stage1_epoch_loss, &rep.steps);
    train_stage(model, stage2, config.epochs_stage2, mix64(config.seed ^ 0x5354414745320000ULL),
                &rep.stage2_epoch_loss, &rep.steps);
    return model;
}

// Gradient check -------------------------------------------------------------

double gradient_check(Network<double>& model, std::span<const FeatureRow> rows, std::uint64_t seed,
                      std::size_t samples, double h) {
    using Matrix = Network<double>::Matrix;
    Rng rng(seed);
    std::vector<FeatureRow> work(rows.begin(), rows.end());
    constexpr double kKinkMargin = 1e-3;
    for (int attempt = 0; attempt < 500 && model.block_count() > 0; ++attempt) {
        if (model.min_preactivation_magnitude(work) >= kKinkMargin) break;
        for (auto& r : work) {
            for (auto& s : r.strengths) s += 0.05 * rng.normal();
            for (auto& x : r.numeric) x += 0.05 * rng.normal();
        }
    }
    std::vector<Matrix> grads;
    model.loss_and_gradients(work, &grads, false);

    auto& params = model.params();
    std::vector<std::size_t> cumulative;
    std::size_t total = 0;
    for (const auto& p : params) {
        total += static_cast<std::size_t>(p.size());
        cumulative.push_back(total);
    }
    double worst = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t flat = rng.below(total);
        const std::size_t t =
            static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), flat) - cumulative.begin());
        const std::size_t local = flat - (t == 0 ? 0 : cumulative[t - 1]);
        double& theta = params[t].data()[local];
        const double saved = theta;
        theta = saved + h;
        const double up = model.loss_and_gradients(work, nullptr, false);
        theta = saved - h;
        const double down = model.loss_and_gradients(work, nullptr, false);
        theta = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = grads[t].data()[local];
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-4});
        worst = std::max(worst, std::fabs(analytic - numeric) / denom);
    }
    return worst;
}

// Serialization --------------------------------------------------------------

namespace {

std::string config_line(const ModelConfig& c) {
    std::ostringstream s;
    s << "#model"
      << "\thidden_width=" << c.hidden_width << "\thidden_layers=" << c.hidden_layers
      << "\tleaky_slope=" << text::format_double(c.leaky_slope) << "\tembedding_dim_cap=" << c.embedding_dim_cap
      << "\tbatch_size=" << c.batch_size << "\tlr=" << text::format_double(c.lr)
      << "\tweight_decay=" << text::format_double(c.weight_decay) << "\tbeta1=" << text::format_double(c.beta1)
      << "\tbeta2=" << text::format_double(c.beta2) << "\tadam_epsilon=" << text::format_double(c.adam_epsilon)
      << "\tepochs_stage1=" << c.epochs_stage1 << "\tepochs_stage2=" << c.epochs_stage2
      << "\tbn_momentum=" << text::format_double(c.bn_momentum)
      << "\tbn_epsilon=" << text::format_double(c.bn_epsilon) << "\tuse_sketch=" << (c.use_sketch ? 1 : 0)
      << "\tseed=" << c.seed << "\tfourier_scales=";
    for (std::size_t i = 0; i < c.fourier.scales.exponents.size(); ++i) {
        if (i) s << ',';
        s << c.fourier.scales.exponents[i];
    }
    s << "\tfourier_log_inputs=" << (c.fourier.log_inputs ? 1 : 0);
    return s.str();
}

ModelConfig parse_config_line(std::string_view line) {
    std::map<std::string, std::string, std::less<>> kv;
    for (const auto part : text::split(line.substr(7), '\t')) {
        const auto eq = part.find('=');
        if (eq == std::string_view::npos) throw DataError("model: malformed #model entry");
        kv.emplace(std::string(part.substr(0, eq)), std::string(part.substr(eq + 1)));
    }
    auto get = [&](std::string_view k) -> const std::string& {
        const auto it = kv.find(k);
        if (it == kv.end()) throw DataError("model: #model line lacks " + std::string(k));
        return it->second;
    };
    ModelConfig c;
    c.hidden_width = text::parse_u64(get("hidden_width"), "hidden_width");
    c.hidden_layers = text::parse_u64(get("hidden_layers"), "hidden_layers");
    c.leaky_slope = text::parse_double(get("leaky_slope"), "leaky_slope");
    c.embedding_dim_cap = text::parse_u64(get("embedding_dim_cap"), "embedding_dim_cap");
    c.batch_size = text::parse_u64(get("batch_size"), "batch_size");
    c.lr = text::parse_double(get("lr"), "lr");
    c.weight_decay = text::parse_double(get("weight_decay"), "weight_decay");
    c.beta1 = text::parse_double(get("beta1"), "beta1");
    c.beta2 = text::parse_double(get("beta2"), "beta2");
    c.adam_epsilon = text::parse_double(get("adam_epsilon"), "adam_epsilon");
    c.epochs_stage1 = text::parse_u64(get("epochs_stage1"), "epochs_stage1");
    c.epochs_stage2 = text::parse_u64(get("epochs_stage2"), "epochs_stage2");
    c.bn_momentum = text::parse_double(get("bn_momentum"), "bn_momentum");
    c.bn_epsilon = text::parse_double(get("bn_epsilon"), "bn_epsilon");
    c.use_sketch = text::parse_bool01(get("use_sketch"), "use_sketch");
    c.seed = text::parse_u64(get("seed"), "seed");
    c.fourier.scales.exponents.clear();
    for (const auto v : text::split(get("fourier_scales"), ',')) {
        c.fourier.scales.exponents.push_back(static_cast<int>(text::parse_i64(v, "fourier scale")));
    }
    c.fourier.log_inputs = text::parse_bool01(get("fourier_log_inputs"), "fourier_log_inputs");
    return c;
}

struct TensorRef {
    std::string name;
    const float* data;
    float* mutable_data;
    std::size_t rows;
    std::size_t cols;
};

std::vector<TensorRef> tensor_table(EngagePredictor& model) {
    std::vector<TensorRef> out;
    for (std::size_t i = 0; i < model.params().size(); ++i) {
        auto& p = model.params()[i];
        out.push_back({model.param_names()[i], p.data(), p.data(), static_cast<std::size_t>(p.rows()),
                       static_cast<std::size_t>(p.cols())});
    }
    for (std::size_t l = 0; l < model.block_count(); ++l) {
        auto& rm = model.running_mean(l);
        auto& rv = model.running_var(l);
        const std::string prefix = "block" + std::to_string(l) + ".";
        out.push_back({prefix + "running_mean", rm.data(), rm.data(), static_cast<std::size_t>(rm.size()), 1});
        out.push_back({prefix + "running_var", rv.data(), rv.data(), static_cast<std::size_t>(rv.size()), 1});
    }
    return out;
}

} // namespace

void save_model(std::ostream& out, const EngagePredictor& model, const ArtifactMeta& meta) {
    EngagePredictor& m = const_cast<EngagePredictor&>(model); // tensor_table only reads here
    const auto& layout = model.layout();
    out << "#engage-model v1\n";
    write_meta(out, meta);
    out << config_line(model.config()) << '\n';
    out << "#layout\t" << layout.sketch_depth << '\t' << layout.sketch_width << '\t' << layout.numeric_count
        << '\t' << text::join(std::span<const std::size_t>(layout.categorical_vocab), ',') << '\t'
        << layout.strength_count << '\n';
    const auto tensors = tensor_table(m);
    std::size_t bytes = 0;
    for (const auto& t : tensors) {
        out << "#tensor\t" << t.name << '\t' << t.rows << '\t' << t.cols << '\n';
        bytes += 4 * t.rows * t.cols;
    }
    out << "#data\t" << bytes << '\n';
    std::string blob;
    blob.reserve(bytes);
    for (const auto& t : tensors) {
        // Column-major, as stored by Eigen.
        for (std::size_t i = 0; i < t.rows * t.cols; ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(t.data[i]);
            for (int k = 0; k < 4; ++k) blob.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
        }
    }
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    out << "\n#checksum\t" << text::hex64(text::fnv1a(blob)) << '\n';
}

void save_model(const std::filesystem::path& path, const EngagePredictor& model, const ArtifactMeta& meta) {
    auto out = open_output(path);
    save_model(out, model, meta);
}

EngagePredictor load_model(std::istream& in, ArtifactMeta* meta) {
    std::string line;
    if (!text::read_line(in, line) || line != "#engage-model v1") throw DataError("model: bad header");
    ArtifactMeta m;
    std::optional<ModelConfig> config;
    std::optional<FeatureLayout> layout;
    std::vector<std::tuple<std::string, std::size_t, std::size_t>> declared;
    std::size_t bytes = 0;
    while (true) {
        if (!text::read_line(in, line)) throw DataError("model: truncated header");
        if (consume_meta_line(line, m)) continue;
        if (text::starts_with(line, "#model\t")) {
            config = parse_config_line(line);
        } else if (text::starts_with(line, "#layout\t")) {
            const auto f = text::split(std::string_view(line).substr(8), '\t');
            if (f.size() != 5) throw DataError("model: bad #layout");
            FeatureLayout l;
            l.sketch_depth = text::parse_u64(f[0], "depth");
            l.sketch_width = text::parse_u64(f[1], "width");
            l.numeric_count = text::parse_u64(f[2], "numeric count");
            for (const auto v : text::parse_u32_list(f[3], "vocab")) l.categorical_vocab.push_back(v);
            l.strength_count = text::parse_u64(f[4], "strength count");
            layout = std::move(l);
        } else if (text::starts_with(line, "#tensor\t")) {
            const auto f = text::split(std::string_view(line).substr(8), '\t');
            if (f.size() != 3) throw DataError("model: bad #tensor");
            declared.emplace_back(std::string(f[0]), text::parse_u64(f[1], "rows"), text::parse_u64(f[2], "cols"));
        } else if (text::starts_with(line, "#data\t")) {
            bytes = text::parse_u64(std::string_view(line).substr(6), "data size");
            break;
        } else {
            throw DataError("model: unexpected header line '" + line + "'");
        }
    }
    if (!config || !layout) throw DataError("model: header lacks #model or #layout");
    std::string blob(bytes, '\0');
    in.read(blob.data(), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(in.gcount()) != bytes) throw DataError("model: truncated tensor data");
    if (!text::read_line(in, line) || !line.empty() || !text::read_line(in, line) ||
        !text::starts_with(line, "#checksum\t")) {
        throw DataError("model: missing #checksum line");
    }
    if (line.substr(10) != text::hex64(text::fnv1a(blob))) throw DataError("model: checksum mismatch");

    EngagePredictor model(*layout, *config);
    auto tensors = tensor_table(model);
    if (tensors.size() != declared.size()) throw DataError("model: tensor table does not match config");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& [name, rows, cols] = declared[i];
        if (name != tensors[i].name || rows != tensors[i].rows || cols != tensors[i].cols) {
            throw DataError("model: tensor " + name + " does not match the declared architecture");
        }
        for (std::size_t k = 0; k < rows * cols; ++k) {
            std::uint32_t bits = 0;
            for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(blob[pos + b])) << (8 * b);
            pos += 4;
            tensors[i].mutable_data[k] = std::bit_cast<float>(bits);
        }
    }
    if (pos != bytes) throw DataError("model: data size mismatch");
    if (meta) *meta = std::move(m);
    return model;
}

EngagePredictor load_model(const std::filesystem::path& path, ArtifactMeta* meta) {
    auto in = open_input(path);
    return load_model(in, meta);
}

} // namespace engage
