#pragma once

#include "engage/artifact.hpp"
#include "engage/record.hpp"

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace engage {

inline constexpr std::string_view kLogHeader = "#engage-log v1";
inline constexpr std::string_view kFollowersHeader = "#followers v1";
inline constexpr std::size_t kLogFieldCount = 22;

// Streams records from an engagement log in file order. Rows that fail to
// parse or violate a record invariant raise DataError with the line number.
// A missing or inconsistent `#records` footer is reported as truncation.
class LogReader {
public:
    explicit LogReader(const std::filesystem::path& path);

    std::optional<InteractionRecord> next();

    const ArtifactMeta& meta() const { return meta_; }
    std::size_t line_number() const { return line_no_; }

private:
    std::ifstream in_;
    std::string path_;
    std::string line_;
    ArtifactMeta meta_;
    std::size_t line_no_ = 0;
    std::size_t records_ = 0;
    bool done_ = false;
};

std::vector<InteractionRecord> read_log(const std::filesystem::path& path,
                                        ArtifactMeta* meta = nullptr);

// Parses one data line (without newline). `line_no` is used in error messages.
InteractionRecord parse_log_line(std::string_view line, std::size_t line_no);
std::string format_log_line(const InteractionRecord& r);

void write_log(std::ostream& out, std::span<const InteractionRecord> records,
               const ArtifactMeta& meta = {});
void write_log(const std::filesystem::path& path, std::span<const InteractionRecord> records,
               const ArtifactMeta& meta = {});

void write_followers(std::ostream& out, const FollowerSets& followers, const ArtifactMeta& meta = {});
void write_followers(const std::filesystem::path& path, const FollowerSets& followers,
                     const ArtifactMeta& meta = {});
FollowerSets read_followers(const std::filesystem::path& path, ArtifactMeta* meta = nullptr);

// `#emb v1 V D`, then V lines of D space-separated decimals.
void write_embeddings(std::ostream& out, const EmbeddingMatrix& emb, const ArtifactMeta& meta = {});
void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& emb,
                      const ArtifactMeta& meta = {});
EmbeddingMatrix read_embeddings(const std::filesystem::path& path, ArtifactMeta* meta = nullptr);

// Opens for reading or throws DataError("cannot open ...").
std::ifstream open_input(const std::filesystem::path& path);
std::ofstream open_output(const std::filesystem::path& path);

} // namespace engage
