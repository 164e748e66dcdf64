#pragma once

#include <iosfwd>
#include <memory>
#include <variant>

#include "rhomp/corpus.hpp"
#include "rhomp/eval.hpp"
#include "rhomp/family.hpp"
#include "rhomp/model.hpp"

namespace rhomp {

// Model files are tab-separated text.
//
//   rhomp  order=<m>  N=<N>
//   alpha  <a_1> ... <a_m>
//   matrix 1
//   <col> <row> <value>        (one line per stored entry)
//   ...
//   matrix <m>
//   ...
//
// Count-backed baselines store the tables they are fitted from:
//
//   mc|kneser  order=<m>  N=<N>
//   level 0
//   <i> <count>                (state occurrences, nonzero only)
//   level 1
//   <i> <j> <count>
//   ...
//   level <m>
//   <i> <j_1> ... <j_m> <count>

struct CountModelFile {
  Family family;
  TransitionCounts counts;
};

using ModelFile = std::variant<RhompModel, CountModelFile>;

void write_rhomp_model(std::ostream& out, const RhompModel& model);
/// `family` must be Mc or Kneser.
void write_count_model(std::ostream& out, Family family, const TransitionCounts& counts);

/// Parses either layout and validates every model invariant. Throws
/// DataError naming the offending line.
ModelFile read_model(std::istream& in);

std::size_t model_order(const ModelFile& file);
Family model_family(const ModelFile& file);
/// Fits (for count-backed files) and wraps the model for evaluation.
std::shared_ptr<const Predictor> make_predictor(const ModelFile& file);

/// One token per line, in index order.
void write_states(std::ostream& out, const StateSpace& states);
StateSpace read_states(std::istream& in);

}  // namespace rhomp
