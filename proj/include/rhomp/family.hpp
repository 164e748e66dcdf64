#pragma once

#include <string>
#include <string_view>

#include "rhomp/types.hpp"

namespace rhomp {

enum class Family { Mc, Kneser, Rhomp };

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::Mc: return "mc";
    case Family::Kneser: return "kneser";
    case Family::Rhomp: return "rhomp";
  }
  return "?";
}

/// Throws DataError for unknown names.
inline Family parse_family(std::string_view name) {
  if (name == "mc") return Family::Mc;
  if (name == "kneser") return Family::Kneser;
  if (name == "rhomp") return Family::Rhomp;
  throw DataError("unknown model family '" + std::string(name) + "'");
}

}  // namespace rhomp
