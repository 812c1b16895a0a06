#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trisa/common.hpp"

namespace trisa {

// Output of the assembler, input to the loader.
struct Section {
  Zone zone = Zone::Dmz;
  Word start = 0;
  std::vector<std::uint8_t> bytes;
};

struct ProgramImage {
  std::vector<Section> sections;
  std::map<std::string, Word> symbols;
  Word entry = 0;
};

}  // namespace trisa
