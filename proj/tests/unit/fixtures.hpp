#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

// Reads `key value ...` lines from the frozen oracle fixture.
inline double oracle_value(const std::string& key) {
  std::ifstream in(UNIQTEST_FIXTURES "/oracle_values.txt");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string k, v;
    fields >> k >> v;
    if (k == key) return std::stod(v);
  }
  throw std::runtime_error("missing oracle value " + key);
}
