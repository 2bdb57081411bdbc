#pragma once

#include <string_view>
#include <vector>

namespace wsext {

/// Protocol scripts from protocols/, embedded at build time.
const std::vector<std::string_view>& builtin_protocol_sources();

}  // namespace wsext
