#pragma once

#include <cstdint>

namespace engage::tools {

// Number of global operator new calls so far in this process.
std::uint64_t allocation_count();

} // namespace engage::tools
