#pragma once

// Synthetic application and knowledge base used by the benchmark, the
// scaling checks and the demo session fixture. Everything is a pure function
// of the arguments.

#include <string>
#include <vector>

#include "esp/ingest.hpp"
#include "esp/kb_io.hpp"

namespace esp::demo {

/// KB with `pi_count` protection instances cycling over six protections
/// (configs get stronger every six PIs).
json knowledge_base(int pi_count);

/// Four C files, about 450 lines, four primary assets.
std::vector<SourceFile> sources();

}  // namespace esp::demo
