#include "engage/artifact.hpp"

#include "engage/text.hpp"

#include <ostream>

namespace engage {

void write_meta(std::ostream& out, const ArtifactMeta& meta) {
    if (!meta.config_hash.empty()) out << "#config-hash\t" << meta.config_hash << '\n';
    for (const auto& line : meta.config_lines) out << "#cfg\t" << line << '\n';
}

bool consume_meta_line(std::string_view line, ArtifactMeta& meta) {
    if (text::starts_with(line, "#config-hash\t")) {
        meta.config_hash = std::string(line.substr(13));
        return true;
    }
    if (text::starts_with(line, "#cfg\t")) {
        meta.config_lines.emplace_back(line.substr(5));
        return true;
    }
    return false;
}

} // namespace engage
