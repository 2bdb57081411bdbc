#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

namespace wsext::testgen {

inline std::string fixture_text(const std::string& name) {
  std::ifstream in(std::string(WSEXT_FIXTURE_DIR) + "/" + name, std::ios::binary);
  if (!in) throw std::runtime_error("missing fixture " + name);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline nlohmann::json fixture_json(const std::string& name) { return nlohmann::json::parse(fixture_text(name)); }

}  // namespace wsext::testgen
