#pragma once

#include "engage/record.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace engage {

// Parameters of the latent engagement model behind the synthetic log.
//
// Each reaction's log-odds is an intercept plus four latent terms:
//   topic appeal     a global per-(topic, reaction) effect of the tweet topic
//   user interest    +/- for tweets on the engaging user's preferred topic
//   pair affinity    a persistent per-(engaging, engaged) effect, so past
//                    engagement between the same pair predicts future engagement
//   popularity       the author's latent popularity
// Intercepts are calibrated so the expected rate of each reaction equals its prior.
struct GeneratorConfig {
    std::size_t users = 2000;
    std::size_t tweets = 8000;
    std::size_t rows = 20000;
    std::size_t vocab = 600;
    std::size_t embedding_dim = 16;
    std::size_t days = 28;
    std::size_t topics = 6;
    std::size_t languages = 5;
    std::size_t hashtag_vocab = 200;
    std::size_t group_size = 8;
    std::size_t tokens_min = 4;
    std::size_t tokens_max = 16;
    double topic_purity = 0.8;
    double embedding_noise = 0.35;
    double follow_in_group = 0.7;
    std::size_t random_follows = 4;
    double followed_author_share = 0.6;
    std::array<double, kReactionCount> priors{0.40, 0.03, 0.09, 0.01};
    double topic_strength = 1.5;
    double interest_strength = 0.8;
    double pair_strength = 0.8;
    double popularity_strength = 0.4;
    Timestamp start_time = 1612396800; // 2021-02-04T00:00:00Z
};

struct SyntheticData {
    std::vector<InteractionRecord> log;
    FollowerSets followers;
    EmbeddingMatrix token_embeddings;
    // Latent ground truth, exposed for tests.
    std::vector<std::uint32_t> token_topic;
};

// Deterministic for a fixed seed. Throws ConfigError for users < 2, days < 2,
// embedding_dim < 2, rows < users, or otherwise unusable parameters.
SyntheticData generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

} // namespace engage
