#include "rhomp/model_io.hpp"

#include <istream>
#include <ostream>
#include <string>

#include <fmt/format.h>

#include "rhomp/text_io.hpp"

namespace rhomp {

void write_rhomp_model(std::ostream& out, const RhompModel& model) {
  out << "rhomp\torder=" << model.order() << "\tN=" << model.num_states() << '\n';
  out << "alpha";
  for (double a : model.weights()) out << '\t' << format_real(a);
  out << '\n';
  for (std::size_t r = 0; r < model.order(); ++r) {
    out << "matrix\t" << r + 1 << '\n';
    write_matrix(out, model.matrix(r).data());
  }
}

void write_count_model(std::ostream& out, Family family, const TransitionCounts& counts) {
  if (family == Family::Rhomp) throw DataError("RHOMP models are not stored as counts");
  out << family_name(family) << "\torder=" << counts.order() << "\tN=" << counts.num_states() << '\n';
  out << "level\t0\n";
  for (std::size_t s = 0; s < counts.num_states(); ++s)
    if (counts.unigram()[s] > 0) out << s << '\t' << counts.unigram()[s] << '\n';
  for (std::size_t r = 1; r <= counts.order(); ++r) {
    out << "level\t" << r << '\n';
    const auto& table = counts.level(r);
    for (std::size_t e = 0; e < table.size(); ++e) {
      for (StateId s : table.key(e)) out << s << '\t';
      out << table.count(e) << '\n';
    }
  }
}

namespace {

struct LineReader {
  std::istream& in;
  std::string line;
  std::size_t number = 0;

  bool next() {
    while (std::getline(in, line)) {
      ++number;
      if (!line.empty() && line != "\r") return true;
    }
    return false;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(fmt::format("model file line {}: {}", number, what));
  }
  std::uint64_t uint(std::string_view s, std::string_view what) const {
    try {
      return parse_uint(s, what);
    } catch (const DataError& e) {
      fail(e.what());
    }
  }
  double real(std::string_view s, std::string_view what) const {
    try {
      return parse_real(s, what);
    } catch (const DataError& e) {
      fail(e.what());
    }
  }
};

std::size_t header_value(const LineReader& reader, std::string_view field, std::string_view key) {
  if (field.substr(0, key.size()) != key || field.size() <= key.size() || field[key.size()] != '=')
    reader.fail(fmt::format("expected '{}=<value>' in header", key));
  return reader.uint(field.substr(key.size() + 1), key);
}

StateId parse_state(const LineReader& reader, std::string_view s, std::size_t n) {
  const auto v = reader.uint(s, "state index");
  if (v >= n) reader.fail(fmt::format("state {} outside [0, {})", v, n));
  return static_cast<StateId>(v);
}

RhompModel read_rhomp_body(LineReader& reader, std::size_t order, std::size_t n) {
  if (!reader.next()) reader.fail("missing alpha line");
  auto fields = split_tabs(reader.line);
  if (fields[0] != "alpha" || fields.size() != order + 1) reader.fail("expected 'alpha' with one weight per slot");
  std::vector<double> weights;
  for (std::size_t r = 1; r <= order; ++r) weights.push_back(reader.real(fields[r], "alpha"));

  std::vector<std::vector<Triplet>> triplets(order);
  std::size_t current = 0;
  while (reader.next()) {
    fields = split_tabs(reader.line);
    if (fields[0] == "matrix") {
      if (fields.size() != 2) reader.fail("expected 'matrix<TAB>r'");
      const auto r = reader.uint(fields[1], "matrix index");
      if (r != current + 1 || r > order) reader.fail(fmt::format("unexpected matrix block {}", r));
      current = r;
      continue;
    }
    if (current == 0) reader.fail("entry before any matrix block");
    if (fields.size() != 3) reader.fail("expected 'col<TAB>row<TAB>value'");
    triplets[current - 1].push_back({parse_state(reader, fields[0], n), parse_state(reader, fields[1], n),
                                     reader.real(fields[2], "matrix value")});
  }
  if (current != order) reader.fail(fmt::format("found {} matrix blocks, expected {}", current, order));

  std::vector<ColumnStochasticMatrix> mats;
  for (auto& t : triplets) {
    const std::size_t lines = t.size();
    auto m = SparseColumnMatrix::from_triplets(n, std::move(t));
    if (m.nnz() != lines) throw DataError("model file repeats a matrix entry");
    mats.emplace_back(std::move(m));
  }
  return RhompModel(std::move(weights), std::move(mats));
}

TransitionCounts read_count_body(LineReader& reader, std::size_t order, std::size_t n) {
  std::vector<std::uint64_t> unigram(n, 0);
  std::vector<std::vector<StateId>> keys(order);
  std::vector<std::vector<std::uint64_t>> counts(order);
  long level = -1;
  while (reader.next()) {
    auto fields = split_tabs(reader.line);
    if (fields[0] == "level") {
      if (fields.size() != 2) reader.fail("expected 'level<TAB>r'");
      const auto r = static_cast<long>(reader.uint(fields[1], "level"));
      if (r != level + 1 || r > static_cast<long>(order)) reader.fail(fmt::format("unexpected level block {}", r));
      level = r;
      continue;
    }
    if (level < 0) reader.fail("entry before any level block");
    const auto width = static_cast<std::size_t>(level) + 2;
    if (fields.size() != width) reader.fail(fmt::format("level {} entries need {} fields", level, width));
    const auto c = reader.uint(fields.back(), "count");
    if (c == 0) reader.fail("zero count");
    if (level == 0) {
      auto s = parse_state(reader, fields[0], n);
      if (unigram[s] != 0) reader.fail("repeated state occurrence entry");
      unigram[s] = c;
      continue;
    }
    for (std::size_t f = 0; f + 1 < fields.size(); ++f)
      keys[static_cast<std::size_t>(level) - 1].push_back(parse_state(reader, fields[f], n));
    counts[static_cast<std::size_t>(level) - 1].push_back(c);
  }
  if (level != static_cast<long>(order)) reader.fail(fmt::format("found levels up to {}, expected {}", level, order));
  std::vector<CountTable> levels;
  for (std::size_t r = 1; r <= order; ++r) {
    const std::size_t lines = counts[r - 1].size();
    levels.emplace_back(r, std::move(keys[r - 1]), std::move(counts[r - 1]));
    if (levels.back().size() != lines) throw DataError(fmt::format("level {} repeats an entry", r));
  }
  return TransitionCounts(order, n, std::move(unigram), std::move(levels));
}

}  // namespace

ModelFile read_model(std::istream& in) {
  LineReader reader{in, {}, 0};
  if (!reader.next()) throw DataError("model file is empty");
  auto fields = split_tabs(reader.line);
  if (fields.size() != 3) reader.fail("header must be '<family><TAB>order=<m><TAB>N=<N>'");
  const Family family = parse_family(fields[0]);
  const auto order = header_value(reader, fields[1], "order");
  const auto n = header_value(reader, fields[2], "N");
  if (order < 1) reader.fail("order must be at least 1");
  if (family == Family::Rhomp) return read_rhomp_body(reader, order, n);
  return CountModelFile{family, read_count_body(reader, order, n)};
}

std::size_t model_order(const ModelFile& file) {
  if (const auto* m = std::get_if<RhompModel>(&file)) return m->order();
  return std::get<CountModelFile>(file).counts.order();
}

Family model_family(const ModelFile& file) {
  if (std::holds_alternative<RhompModel>(file)) return Family::Rhomp;
  return std::get<CountModelFile>(file).family;
}

std::shared_ptr<const Predictor> make_predictor(const ModelFile& file) {
  if (const auto* m = std::get_if<RhompModel>(&file)) return std::make_shared<RhompPredictor>(*m);
  const auto& cm = std::get<CountModelFile>(file);
  if (cm.family == Family::Mc) return std::make_shared<MarkovPredictor>(fit_mc(cm.counts, cm.counts.order()));
  return std::make_shared<KneserNeyPredictor>(fit_kneser_ney(cm.counts, cm.counts.order()));
}

void write_states(std::ostream& out, const StateSpace& states) {
  for (const auto& t : states.tokens()) out << t << '\n';
}

StateSpace read_states(std::istream& in) {
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    tokens.push_back(line);
  }
  if (in.bad()) throw IoError("read failure on state list");
  return StateSpace(std::move(tokens));
}

}  // namespace rhomp
