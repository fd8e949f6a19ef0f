#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace engage {

// Provenance lines carried after the format header of every artifact:
//   #config-hash<TAB><16 hex digits>
//   #cfg<TAB>key=value        (one per effective config entry)
struct ArtifactMeta {
    std::string config_hash;
    std::vector<std::string> config_lines;

    bool empty() const { return config_hash.empty() && config_lines.empty(); }
};

void write_meta(std::ostream& out, const ArtifactMeta& meta);

// Returns true if `line` is a provenance line (and records it in `meta`).
bool consume_meta_line(std::string_view line, ArtifactMeta& meta);

} // namespace engage
